#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "advmod/autodiff.hpp"
#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"

using namespace advmod;
using ad::Tape;
using ad::Var;
using Td = ad::Tensor<double>;

namespace {

Td random_tensor(ad::Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, scale);
  Td t(std::move(shape));
  for (auto& v : t.values()) v = d(gen);
  return t;
}

using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

double evaluate(const std::vector<Td>& inputs, const Build& build) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return tape.value(build(tape, vars))[0];
}

// Worst relative error between reverse-mode and central-difference gradients
// over every input tensor, measured per tensor as ||a - n|| / max(||a||, ||n||).
double gradient_error(std::vector<Td> inputs, const Build& build, double h = 1e-6) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  tape.backward(build(tape, vars));

  double worst = 0.0;
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const Td analytic = tape.grad(vars[j]);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < inputs[j].size(); ++k) {
      const double keep = inputs[j][k];
      inputs[j][k] = keep + h;
      const double up = evaluate(inputs, build);
      inputs[j][k] = keep - h;
      const double down = evaluate(inputs, build);
      inputs[j][k] = keep;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[k] - numeric) * (analytic[k] - numeric);
      na += analytic[k] * analytic[k];
      nn += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

// Random linear read-out so every output element gets a distinct weight.
Var readout(Tape<double>& tape, Var y, std::uint64_t seed) {
  const Var flat = ad::flatten(tape, y);
  const Td w = random_tensor({1, tape.value(flat).dim(1)}, seed);
  return ad::sum(tape, ad::dense(tape, flat, tape.constant(w), tape.constant(Td({1}))));
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("forward definitions") {
  Tape<double> tape;
  SUBCASE("dense with identity weights and zero bias is the identity") {
    const Td x = random_tensor({2, 3}, 1);
    Td w({3, 3});
    for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
    const auto y = tape.value(ad::dense(tape, tape.constant(x), tape.constant(w), tape.constant(Td({3}))));
    for (std::size_t k = 0; k < 6; ++k) CHECK(y[k] == x[k]);
  }
  SUBCASE("conv1d of a unit impulse reproduces the kernel") {
    Td x({1, 1, 9});
    x[4] = 1.0;
    const Td w({1, 1, 3}, std::vector<double>{0.5, -2.0, 3.0});
    const auto y = tape.value(ad::conv1d(tape, tape.constant(x), tape.constant(w), tape.constant(Td({1}))));
    // Correlation: y[n] = sum_t w[t] x[n + t - 1]
    CHECK(y[3] == 3.0);
    CHECK(y[4] == -2.0);
    CHECK(y[5] == 0.5);
    CHECK(y[0] == 0.0);
  }
  SUBCASE("softmax of equal logits is uniform") {
    const std::vector<double> z(4, 0.0);
    const auto p = ad::softmax(std::span<const double>(z));
    for (double v : p) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("softmax stays normalized for logits up to 1e4") {
    const std::vector<double> z = {1e4, -1e4, 5e3, 9999.5};
    const auto p = ad::softmax(std::span<const double>(z));
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  SUBCASE("avg_pool1d averages disjoint windows") {
    const Td x({1, 1, 8}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    const auto y = tape.value(ad::avg_pool1d(tape, tape.constant(x), 4));
    REQUIRE(y.size() == 2);
    CHECK(y[0] == 2.5);
    CHECK(y[1] == 6.5);
  }
}

TEST_CASE("shape mismatches are argument errors") {
  Tape<double> tape;
  const Var x = tape.constant(Td({1, 2, 8}));
  CHECK_THROWS_AS(ad::conv1d(tape, x, tape.constant(Td({4, 3, 3})), tape.constant(Td({4}))), ArgumentError);
  CHECK_THROWS_AS(ad::conv1d(tape, x, tape.constant(Td({4, 2, 4})), tape.constant(Td({4}))), ArgumentError);
  CHECK_THROWS_AS(ad::dense(tape, tape.constant(Td({2, 3})), tape.constant(Td({4, 5})), tape.constant(Td({4}))),
                  ArgumentError);
  CHECK_THROWS_AS(ad::avg_pool1d(tape, x, 3), ArgumentError);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives an all-ones input gradient") {
    Tape<double> tape;
    const Var x = tape.input(random_tensor({3, 4}, 2));
    tape.backward(ad::sum(tape, x));
    for (double g : tape.grad(x).values()) CHECK(g == 1.0);
  }
  SUBCASE("relu blocks the gradient of a negative pre-activation") {
    Tape<double> tape;
    const Var x = tape.input(Td({3}, std::vector<double>{-0.5, 0.25, 2.0}));
    tape.backward(ad::sum(tape, ad::relu(tape, x)));
    CHECK(tape.grad(x)[0] == 0.0);
    CHECK(tape.grad(x)[1] == 1.0);
    CHECK(tape.grad(x)[2] == 1.0);
  }
  SUBCASE("backward without a forward pass is a state error") {
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(Var{0}), StateError);
  }
  SUBCASE("a second backward on the same tape is a state error") {
    Tape<double> tape;
    const Var x = tape.input(Td({2}, 1.0));
    const Var s = ad::sum(tape, x);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), StateError);
    CHECK_THROWS_AS(ad::sum(tape, x), StateError);
  }
  SUBCASE("gradient before backward is a state error") {
    Tape<double> tape;
    const Var x = tape.input(Td({2}, 1.0));
    CHECK_THROWS_AS(tape.grad(x), StateError);
  }
  SUBCASE("non-finite values are numerical errors") {
    Tape<double> tape;
    const Var x = tape.input(Td({2}, std::numeric_limits<double>::max()));
    CHECK_THROWS_AS(ad::scale(tape, x, 10.0), NumericalError);
    Tape<float> tf;
    CHECK_THROWS_AS(tf.constant(ad::Tensor<float>({1}, std::numeric_limits<float>::quiet_NaN())), NumericalError);
  }
}

TEST_CASE("finite differences: every primitive") {
  const double tol = 1e-4;
  SUBCASE("dense") {
    const Build f = [](Tape<double>& t, const std::vector<Var>& v) { return readout(t, ad::dense(t, v[0], v[1], v[2]), 9); };
    CHECK(gradient_error({random_tensor({3, 5}, 1), random_tensor({4, 5}, 2), random_tensor({4}, 3)}, f) < tol);
  }
  SUBCASE("dense + cross-entropy at h = 1e-3") {
    const Build f = [](Tape<double>& t, const std::vector<Var>& v) {
      return ad::softmax_cross_entropy(t, ad::dense(t, v[0], v[1], v[2]), {0, 3, 1});
    };
    CHECK(gradient_error({random_tensor({3, 5}, 4), random_tensor({4, 5}, 5), random_tensor({4}, 6)}, f, 1e-3) < tol);
  }
  SUBCASE("conv1d, kernels 1, 3 and 7") {
    for (std::size_t k : {1u, 3u, 7u}) {
      const Build f = [](Tape<double>& t, const std::vector<Var>& v) { return readout(t, ad::conv1d(t, v[0], v[1], v[2]), 8); };
      CHECK(gradient_error({random_tensor({2, 3, 10}, 7), random_tensor({4, 3, k}, 8), random_tensor({4}, 9)}, f) < tol);
    }
  }
  SUBCASE("relu") {
    const Build f = [](Tape<double>& t, const std::vector<Var>& v) { return readout(t, ad::relu(t, v[0]), 3); };
    CHECK(gradient_error({random_tensor({2, 3, 6}, 10)}, f) < tol);
  }
  SUBCASE("avg_pool1d") {
    const Build f = [](Tape<double>& t, const std::vector<Var>& v) { return readout(t, ad::avg_pool1d(t, v[0], 4), 4); };
    CHECK(gradient_error({random_tensor({2, 3, 16}, 11)}, f) < tol);
  }
  SUBCASE("flatten, add, scale, sum") {
    const Build f = [](Tape<double>& t, const std::vector<Var>& v) {
      return ad::scale(t, readout(t, ad::flatten(t, ad::add(t, v[0], v[1])), 5), 0.7);
    };
    CHECK(gradient_error({random_tensor({2, 3, 4}, 12), random_tensor({2, 3, 4}, 13)}, f) < tol);
  }
  SUBCASE("softmax cross-entropy, mean and sum") {
    for (auto red : {ad::Reduction::Mean, ad::Reduction::Sum}) {
      const Build f = [red](Tape<double>& t, const std::vector<Var>& v) {
        return ad::softmax_cross_entropy(t, v[0], {1, 0, 2, 2}, red);
      };
      CHECK(gradient_error({random_tensor({4, 3}, 14, 3.0)}, f) < tol);
    }
  }
}

TEST_CASE("finite differences: composed networks") {
  for (Preset preset : {Preset::CnnSmall, Preset::ResnetLite}) {
    CAPTURE(preset_name(preset));
    Network<double> net(make_arch(preset, 64, {"a", "b", "c", "d"}), 17);
    const Build f = [&](Tape<double>& t, const std::vector<Var>& v) {
      return ad::softmax_cross_entropy(t, net.forward_frozen(t, v[0]), {2, 1}, ad::Reduction::Sum);
    };
    CHECK(gradient_error({random_tensor({2, 2, 64}, 18)}, f) < 1e-4);
  }
}

TEST_CASE("finite differences: parameter gradients of cnn_small") {
  Network<double> net(make_arch(Preset::CnnSmall, 64, {"a", "b", "c"}), 23);
  const Td x = random_tensor({2, 2, 64}, 24);
  const auto loss_value = [&] {
    Tape<double> t;
    return t.value(ad::softmax_cross_entropy(t, net.forward_frozen(t, t.constant(x)), {0, 2}))[0];
  };
  Tape<double> tape;
  for (auto* p : net.param_ptrs()) p->zero_grad();
  tape.backward(ad::softmax_cross_entropy(tape, net.forward(tape, tape.constant(x)), {0, 2}));
  for (auto* p : net.param_ptrs()) {
    CAPTURE(p->name);
    // A spread of entries from every tensor.
    double diff = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < p->value.size(); k += std::max<std::size_t>(1, p->value.size() / 7)) {
      const double keep = p->value[k];
      p->value[k] = keep + 1e-6;
      const double up = loss_value();
      p->value[k] = keep - 1e-6;
      const double down = loss_value();
      p->value[k] = keep;
      const double numeric = (up - down) / 2e-6;
      diff += (numeric - p->grad[k]) * (numeric - p->grad[k]);
      norm += std::max(numeric * numeric, p->grad[k] * p->grad[k]);
    }
    CHECK(std::sqrt(diff) <= 1e-4 * std::max(std::sqrt(norm), 1e-9));
  }
}

TEST_CASE("optimizers") {
  ad::Parameter<double> p{"p", Td({1}, 1.0), Td({1}, 2.0)};
  std::vector<ad::Parameter<double>*> ps = {&p};
  ad::sgd_step<double>(ps, 0.1);
  CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));

  p.grad.fill(0.0);
  ad::sgd_step<double>(ps, 0.1);
  CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));

  ad::Adam<double> zero_adam(ad::AdamHyper{0.01});
  const double before = p.value[0];
  zero_adam.step(ps);
  CHECK(p.value[0] == before);

  for (double g : {3.0, -0.002}) {
    ad::Parameter<double> q{"q", Td({1}, 0.5), Td({1}, g)};
    std::vector<ad::Parameter<double>*> qs = {&q};
    ad::Adam<double> adam(ad::AdamHyper{0.01});
    adam.step(qs);
    // Bias-corrected first step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
    const double expect = 0.5 - 0.01 * g / (std::abs(g) + 1e-8);
    CHECK(q.value[0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("float and double engines agree on a forward pass") {
  const auto arch = make_arch(Preset::CnnSmall, 128, {"a", "b"});
  Network<float> nf(arch, 5);
  Network<double> nd(arch, nf.export_params());
  const Td x = random_tensor({1, 2, 128}, 6);
  ad::Tensor<float> xf({1, 2, 128});
  for (std::size_t k = 0; k < x.size(); ++k) xf[k] = static_cast<float>(x[k]);
  Tape<float> tf;
  Tape<double> td;
  const auto& yf = tf.value(nf.forward_frozen(tf, tf.constant(xf)));
  const auto& yd = td.value(nd.forward_frozen(td, td.constant(x)));
  for (std::size_t k = 0; k < yf.size(); ++k) CHECK(yf[k] == doctest::Approx(yd[k]).epsilon(1e-4));
}

}  // TEST_SUITE
