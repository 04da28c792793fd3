#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"
#include "advmod/rng.hpp"

namespace advmod {

Checkpoint train_hoc_logreg(const ModelArch& arch, std::span<const IQSignal> train_set,
                            std::span<const IQSignal> val_set, const TrainHyper& hyper);

namespace {

std::vector<int> labels_of(std::span<const IQSignal> signals, std::size_t num_classes) {
  std::vector<int> out;
  out.reserve(signals.size());
  for (const auto& s : signals) {
    if (!s.label || *s.label < 0 || static_cast<std::size_t>(*s.label) >= num_classes) {
      throw ArgumentError("training signals must carry a label within the class table");
    }
    out.push_back(*s.label);
  }
  return out;
}

ad::Tensor<float> stack(std::span<const IQSignal> signals, std::span<const std::size_t> idx, std::size_t n) {
  ad::Tensor<float> t({idx.size(), 2, n});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& s = signals[idx[b]];
    if (s.length() != n) throw IncompatibleError("training signal length does not match the architecture");
    std::copy(s.samples.begin(), s.samples.end(), t.data() + b * 2 * n);
  }
  return t;
}

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalStats evaluate(const Network<float>& net, std::span<const IQSignal> signals, std::span<const int> labels,
                   std::size_t batch) {
  if (signals.empty()) return {};
  const std::size_t n = net.arch().input_length;
  const std::size_t C = net.arch().num_classes;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < signals.size(); lo += batch) {
    const std::size_t hi = std::min(signals.size(), lo + batch);
    idx.resize(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    ad::Tape<float> tape;
    const ad::Var logits = net.forward_frozen(tape, tape.constant(stack(signals, idx, n)));
    std::vector<int> lab(labels.begin() + static_cast<long>(lo), labels.begin() + static_cast<long>(hi));
    loss += tape.value(ad::softmax_cross_entropy(tape, logits, lab, ad::Reduction::Sum))[0];
    const auto& z = tape.value(logits);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = z.data() + b * C;
      const auto pred = std::max_element(row, row + C) - row;
      correct += pred == lab[b] ? 1 : 0;
    }
  }
  const double count = static_cast<double>(signals.size());
  return {loss / count, static_cast<double>(correct) / count};
}

Checkpoint train_network(const ModelArch& arch, std::span<const IQSignal> train_set,
                         std::span<const IQSignal> val_set, const TrainHyper& hyper) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (hyper.epochs < 1 || hyper.batch < 1) throw ConfigError("epochs and batch size must be positive");
  const auto train_labels = labels_of(train_set, arch.num_classes);
  const auto val_labels = labels_of(val_set, arch.num_classes);
  const std::size_t n = arch.input_length;

  Network<float> net(arch, hyper.seed);
  auto params = net.param_ptrs();
  ad::Adam<float> opt({.lr = hyper.lr});
  std::mt19937_64 shuffler(derive_seed(hyper.seed, 0x5417f1e));

  Checkpoint best;
  best.arch = arch;
  best.meta.seed = hyper.seed;
  best.meta.epochs = hyper.epochs;
  best.meta.best_val_accuracy = -1.0;

  const auto record = [&](int epoch, double train_loss) {
    const EvalStats val = evaluate(net, val_set, val_labels, 64);
    CurvePoint pt{epoch, train_loss, val.loss, val.accuracy};
    best.meta.curve.push_back(pt);
    if (hyper.on_epoch) hyper.on_epoch(pt);
    if (epoch > 0 && (val_set.empty() || val.accuracy > best.meta.best_val_accuracy)) {
      best.meta.best_val_accuracy = val.accuracy;
      best.meta.best_epoch = epoch;
      best.params = net.export_params();
    }
  };

  record(0, evaluate(net, train_set, train_labels, 64).loss);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    double epoch_loss = 0.0;
    try {
      for (std::size_t lo = 0; lo < order.size(); lo += hyper.batch) {
        const std::size_t hi = std::min(order.size(), lo + hyper.batch);
        const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        std::vector<int> lab;
        for (auto i : idx) lab.push_back(train_labels[i]);

        for (auto* p : params) p->zero_grad();
        ad::Tape<float> tape;
        const ad::Var logits = net.forward(tape, tape.constant(stack(train_set, idx, n)));
        const ad::Var loss = ad::softmax_cross_entropy(tape, logits, lab, ad::Reduction::Mean);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value)) throw NumericalError("training loss is not finite");
        tape.backward(loss);
        opt.step(params);
        epoch_loss += value * static_cast<double>(idx.size());
      }
    } catch (const NumericalError& e) {
      throw TrainingError(std::string("training diverged: ") + e.what(), epoch);
    }
    record(epoch, epoch_loss / static_cast<double>(order.size()));
  }
  return best;
}

Checkpoint reference_checkpoint(const ModelArch& arch, std::span<const IQSignal> val_set, const TrainHyper& hyper) {
  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.meta.seed = hyper.seed;
  if (!val_set.empty()) {
    MaxLikelihoodClassifier ml(arch);
    ckpt.meta.best_val_accuracy = accuracy(ml, val_set);
  }
  return ckpt;
}

}  // namespace

Checkpoint train(const ModelArch& arch, std::span<const IQSignal> train_set, std::span<const IQSignal> val_set,
                 const TrainHyper& hyper) {
  arch.validate();
  switch (arch.preset) {
    case Preset::CnnSmall:
    case Preset::ResnetLite:
      return train_network(arch, train_set, val_set, hyper);
    case Preset::HocLogReg:
      return train_hoc_logreg(arch, train_set, val_set, hyper);
    case Preset::MaxLikelihood:
      return reference_checkpoint(arch, val_set, hyper);
  }
  throw ConfigError("unsupported preset");
}

}  // namespace advmod
