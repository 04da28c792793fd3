#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "advmod/classifiers.hpp"
#include "advmod/dataset.hpp"
#include "advmod/error.hpp"

using namespace advmod;

namespace {

const std::vector<std::string> kFour = {"BPSK", "QPSK", "16QAM", "64QAM"};

std::vector<IQSignal> small_set(std::size_t per_class, std::uint64_t seed, std::optional<double> snr = 20.0) {
  SynthesisConfig cfg;
  cfg.per_class = per_class;
  cfg.seed = seed;
  cfg.snr_db = {snr};
  const auto ds = gen_dataset(cfg).dataset;
  std::vector<IQSignal> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds.signal(i));
  return out;
}

ModelArch ml_arch(std::optional<double> snr_db = std::nullopt) {
  return make_arch(Preset::MaxLikelihood, 1024, kFour, PulseShape::rrc(), snr_db);
}

double cross_entropy(const std::vector<double>& logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return mx + std::log(z) - logits[static_cast<std::size_t>(label)];
}

}  // namespace

TEST_SUITE("classifiers") {

TEST_CASE("presets build deterministic layer stacks") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  Network<float> a(arch, 3), b(arch, 3), c(arch, 4);
  // Three convolutions, the 64*16 -> 128 hidden layer and the 4-way head.
  const std::size_t expect = (64 * 2 * 7 + 64) + (64 * 64 * 5 + 64) + (64 * 64 * 3 + 64) + (128 * 64 * 16 + 128) +
                             (4 * 128 + 4);
  CHECK(a.parameter_count() == expect);
  CHECK(a.export_params().size() == 10);
  for (std::size_t j = 0; j < a.params().size(); ++j) {
    CHECK(a.params()[j].value.values()[0] == b.params()[j].value.values()[0]);
  }
  CHECK(a.param("conv1.w").value[0] != c.param("conv1.w").value[0]);
  for (float v : a.param("fc1.b").value.values()) CHECK(v == 0.0f);

  Network<float> r(make_arch(Preset::ResnetLite, 1024, kFour), 3);
  CHECK(r.parameter_count() == Network<float>(make_arch(Preset::ResnetLite, 1024, kFour), 9).parameter_count());
  CHECK_THROWS_AS(parse_preset("vgg"), ConfigError);
  CHECK(parse_preset("resnet_lite") == Preset::ResnetLite);
}

TEST_CASE("resnet_lite with zero residual branches is a pooled stem") {
  const auto arch = make_arch(Preset::ResnetLite, 256, kFour);
  Network<double> net(arch, 5);
  for (auto& p : net.params()) {
    if (p.name.rfind("res", 0) == 0) p.value.fill(0.0);
  }
  std::mt19937_64 gen(2);
  std::normal_distribution<double> d;
  ad::Tensor<double> x({1, 2, 256});
  for (auto& v : x.values()) v = d(gen);

  ad::Tape<double> t;
  const auto z = t.value(net.forward_frozen(t, t.constant(x)));

  // Reference: relu(stem), three avgpool4, global average, then the dense head.
  ad::Tape<double> r;
  ad::Var h = ad::relu(r, ad::conv1d(r, r.constant(x), r.constant(net.param("stem.w").value),
                                     r.constant(net.param("stem.b").value)));
  for (int s = 0; s < 3; ++s) h = ad::avg_pool1d(r, h, 4);
  h = ad::flatten(r, ad::avg_pool1d(r, h, r.value(h).dim(2)));
  h = ad::relu(r, ad::dense(r, h, r.constant(net.param("fc1.w").value), r.constant(net.param("fc1.b").value)));
  const auto ref = r.value(ad::dense(r, h, r.constant(net.param("fc2.w").value), r.constant(net.param("fc2.b").value)));
  for (std::size_t c = 0; c < 4; ++c) CHECK(z[c] == doctest::Approx(ref[c]).epsilon(1e-12));
}

TEST_CASE("max_likelihood needs scheme and pulse context") {
  CHECK_THROWS_AS(make_arch(Preset::MaxLikelihood, 1024, kFour), ConfigError);
  CHECK_THROWS_AS(make_arch(Preset::MaxLikelihood, 1024, {"BPSK", "FOO"}, PulseShape::rrc()), ConfigError);
  CHECK_THROWS_AS(make_arch(Preset::CnnSmall, 1024, {}), ConfigError);
  // Unknown SNR at classification time.
  const auto clean = small_set(1, 1, std::nullopt);
  MaxLikelihoodClassifier ml(ml_arch());
  CHECK_THROWS_AS(ml.predict(clean[0]), ConfigError);
  CHECK_THROWS_AS(ml_classify(clean[0], supported_schemes(), std::nullopt, PulseShape::rrc()), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact and predictions match") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.params = Network<float>(arch, 8).export_params();
  ckpt.meta.seed = 8;
  ckpt.meta.curve = {{1, 0.5, 0.25, 0.75}};
  const auto dir = std::filesystem::temp_directory_path() / "advmod_test_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "m.ckpt", ckpt);
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(encode_checkpoint(back) == encode_checkpoint(ckpt));
  CHECK(back.parameter_count() == ckpt.parameter_count());
  for (std::size_t j = 0; j < ckpt.params.size(); ++j) CHECK(back.params[j].values == ckpt.params[j].values);

  const auto signals = small_set(3, 4);
  const auto a = make_classifier(ckpt)->predict_batch(signals);
  const auto b = make_classifier(back)->predict_batch(signals);
  for (std::size_t i = 0; i < signals.size(); ++i) CHECK(a[i].probs == b[i].probs);

  auto bytes = encode_checkpoint(ckpt);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), IoError);
  auto wrong = ckpt;
  wrong.params.pop_back();
  CHECK_THROWS_AS(make_classifier(wrong), IncompatibleError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("predictions are deterministic, normalized and batch-transparent") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  NetworkClassifier model(Network<float>(arch, 12), 5);
  const auto signals = small_set(3, 6);
  const auto batch = model.predict_batch(signals);
  for (std::size_t i = 0; i < signals.size(); ++i) {
    const auto one = model.predict(signals[i]);
    CHECK(one.probs == batch[i].probs);
    CHECK(one.logits == batch[i].logits);
    CHECK(one.probs == model.predict(signals[i]).probs);
    CHECK(std::abs(std::accumulate(one.probs.begin(), one.probs.end(), 0.0) - 1.0) < 1e-6);
    const auto zmax = std::max_element(one.logits.begin(), one.logits.end()) - one.logits.begin();
    CHECK(one.label() == zmax);
  }
  CHECK_THROWS_AS(model.predict(IQSignal(512)), IncompatibleError);
}

TEST_CASE("max_likelihood on noiseless and noisy signals") {
  SynthesisConfig cfg;
  cfg.per_class = 1;
  cfg.snr_db = {std::nullopt};
  cfg.seed = 9;
  const auto bpsk = gen_dataset(cfg).dataset.signal(0);
  const auto p = ml_classify(bpsk, benchmark_schemes(), 20.0, PulseShape::rrc());
  CHECK(p.label() == 0);
  CHECK(p.probs[0] > 0.999);

  const auto noisy = small_set(100, 31);
  MaxLikelihoodClassifier ml(ml_arch());
  CHECK(accuracy(ml, noisy) == 1.0);

  // Assuming half the true noise standard deviation keeps BPSK decisions.
  MaxLikelihoodClassifier sharp(ml_arch(20.0 + 20.0 * std::log10(2.0)));
  for (std::size_t i = 0; i < 100; ++i) CHECK(sharp.predict(noisy[i]).label() == 0);
}

TEST_CASE("mixture likelihood gradient has the responsibility-weighted closed form") {
  const std::vector<cplx> pts = constellation_points(ModScheme::qpsk());
  for (cplx s : {cplx(0.3, -0.9), cplx(0.0, 0.0), cplx(2.0, 1.5)}) {
    const double sigma2 = 0.2;
    std::vector<cplx> g;
    const double ll = mixture_log_likelihood(std::span<const cplx>(&s, 1), pts, sigma2, &g);
    double z = 0.0;
    cplx expect = 0.0;
    for (const auto& a : pts) z += std::exp(-std::norm(s - a) / (2.0 * sigma2));
    for (const auto& a : pts) expect += std::exp(-std::norm(s - a) / (2.0 * sigma2)) / z * (a - s) / sigma2;
    CHECK(ll == doctest::Approx(std::log(z / 4.0)).epsilon(1e-12));
    CHECK(std::abs(g[0] - expect) < 1e-12);
  }
}

TEST_CASE("max_likelihood input gradient matches finite differences") {
  auto signals = small_set(1, 14);
  for (auto objective : {Objective::Untargeted, Objective::Targeted}) {
    const auto& x = signals[2];
    MaxLikelihoodClassifier ml(ml_arch());
    ml.set_reference_power(0.97);
    // 64QAM against a 16QAM signal keeps the softmax away from saturation.
    const int label = 3;
    const auto lg = ml.input_gradient_loss(x, label, objective);
    const double sign = objective == Objective::Targeted ? -1.0 : 1.0;
    CHECK(lg.loss == doctest::Approx(sign * cross_entropy(ml.log_likelihoods(x), label)).epsilon(1e-12));
    double diff = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < x.samples.size(); k += 37) {
      IQSignal up = x, down = x;
      up.samples[k] += 1e-6;
      down.samples[k] -= 1e-6;
      const double numeric = sign * (cross_entropy(ml.log_likelihoods(up), label) -
                                     cross_entropy(ml.log_likelihoods(down), label)) / 2e-6;
      diff += (numeric - lg.grad[k]) * (numeric - lg.grad[k]);
      norm += numeric * numeric;
    }
    REQUIRE(norm > 0.0);
    CHECK(std::sqrt(diff) < 1e-4 * std::sqrt(norm));
  }
}

TEST_CASE("network input gradient matches a double-precision reference") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  Network<float> nf(arch, 21);
  Network<double> nd(arch, nf.export_params());
  NetworkClassifier model(Network<float>(arch, nf.export_params()));
  const auto signals = small_set(1, 22);
  const std::vector<int> labels = {0, 1, 2, 3};
  const auto lg = model.loss_gradient(signals, labels, Objective::Untargeted);
  for (std::size_t i = 0; i < signals.size(); ++i) {
    ad::Tensor<double> x({1, 2, 1024}, signals[i].samples);
    ad::Tape<double> tape;
    const auto xv = tape.input(x);
    const auto loss = ad::softmax_cross_entropy(tape, nd.forward_frozen(tape, xv), {labels[i]});
    tape.backward(loss);
    const auto& g = tape.grad(xv);
    double diff = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      diff += (g[k] - lg[i].grad[k]) * (g[k] - lg[i].grad[k]);
      norm += g[k] * g[k];
    }
    CHECK(std::sqrt(diff) < 1e-3 * std::sqrt(norm));
    CHECK(lg[i].loss == doctest::Approx(tape.value(loss)[0]).epsilon(1e-4));
  }
}

TEST_CASE("saturated softmax gives a zero gradient, not NaN") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  Network<float> net(arch, 2);
  net.param("fc2.b").value[1] = 1e4f;
  NetworkClassifier model(std::move(net));
  const auto signals = small_set(1, 3);
  const auto lg = model.input_gradient_loss(signals[1], 1, Objective::Untargeted);
  for (double v : lg.grad) CHECK(v == 0.0);
  CHECK(lg.loss == 0.0);
}

TEST_CASE("hoc_logreg has no input gradient") {
  const auto signals = small_set(20, 7);
  TrainHyper hyper;
  hyper.hoc_iterations = 50;
  const auto ckpt = train(make_arch(Preset::HocLogReg, 1024, kFour, PulseShape::rrc()), signals, {}, hyper);
  const auto model = make_classifier(ckpt);
  CHECK_FALSE(model->differentiable());
  CHECK_THROWS_AS(model->input_gradient_loss(signals[0], 0, Objective::Untargeted), UnsupportedAttackError);

  // Decisions do not depend on amplitude.
  for (std::size_t i = 0; i < signals.size(); i += 9) {
    IQSignal scaled = signals[i];
    for (auto& v : scaled.samples) v *= 7.5;
    CHECK(model->predict(scaled).label() == model->predict(signals[i]).label());
  }
}

TEST_CASE("max_likelihood is scale-consistent") {
  const auto signals = small_set(1, 17);
  MaxLikelihoodClassifier ml(ml_arch());
  for (const auto& x : signals) {
    IQSignal scaled = x;
    for (auto& v : scaled.samples) v *= 3.0;
    const auto a = ml.log_likelihoods(x);
    const auto b = ml.log_likelihoods(scaled);
    for (std::size_t m = 1; m < a.size(); ++m) {
      const double da = a[m] - a[0], db = b[m] - b[0];
      CHECK(std::abs(da - db) <= 1e-9 * std::max(1.0, std::abs(da)));
    }
  }
}

TEST_CASE("full-batch gradients do not depend on training-set order") {
  const auto arch = make_arch(Preset::CnnSmall, 1024, kFour);
  const auto signals = small_set(2, 19);
  const auto grads = [&](std::vector<std::size_t> order) {
    Network<float> net(arch, 1);
    ad::Tensor<float> x({order.size(), 2, 1024});
    std::vector<int> labels;
    for (std::size_t b = 0; b < order.size(); ++b) {
      std::copy(signals[order[b]].samples.begin(), signals[order[b]].samples.end(), x.data() + b * 2048);
      labels.push_back(*signals[order[b]].label);
    }
    for (auto* p : net.param_ptrs()) p->zero_grad();
    ad::Tape<float> tape;
    tape.backward(ad::softmax_cross_entropy(tape, net.forward(tape, tape.constant(x)), labels));
    std::vector<float> out;
    for (auto* p : net.param_ptrs()) out.insert(out.end(), p->grad.values().begin(), p->grad.values().end());
    return out;
  };
  std::vector<std::size_t> order(signals.size());
  std::iota(order.begin(), order.end(), 0);
  const auto a = grads(order);
  CHECK(grads(order) == a);
  std::reverse(order.begin(), order.end());
  const auto b = grads(order);
  double diff = 0.0, norm = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    norm += a[k] * a[k];
  }
  CHECK(std::sqrt(diff) < 1e-5 * std::sqrt(norm));
}

TEST_CASE("one epoch lowers the training loss") {
  SynthesisConfig cfg;
  cfg.per_class = 40;
  cfg.seed = 23;
  const auto g = gen_dataset(cfg);
  std::vector<IQSignal> tr, va;
  for (auto i : g.manifest.split.train) tr.push_back(g.dataset.signal(i));
  for (auto i : g.manifest.split.validation) va.push_back(g.dataset.signal(i));
  TrainHyper hyper;
  hyper.epochs = 1;
  hyper.seed = 5;
  const auto ckpt = train(make_arch(Preset::CnnSmall, 1024, kFour), tr, va, hyper);
  REQUIRE(ckpt.meta.curve.size() == 2);
  CHECK(ckpt.meta.curve[1].train_loss < ckpt.meta.curve[0].train_loss);
  CHECK(ckpt.meta.best_epoch == 1);

  hyper.lr = 1e30;
  CHECK_THROWS_AS(train(make_arch(Preset::CnnSmall, 1024, kFour), tr, va, hyper), TrainingError);
}

}  // TEST_SUITE
