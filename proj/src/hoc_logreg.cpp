#include <cmath>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"

namespace advmod {

// Full-batch Adam on softmax cross-entropy plus (l2/2)*||W||^2 over
// standardized HOC features.
Checkpoint train_hoc_logreg(const ModelArch& arch, std::span<const IQSignal> train_set,
                            std::span<const IQSignal> val_set, const TrainHyper& hyper) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  const std::size_t F = kNumHocFeatures;
  const auto& pulse = *arch.pulse;

  std::vector<FeatureVector> feats;
  std::vector<int> labels;
  for (const auto& s : train_set) {
    if (!s.label) throw ArgumentError("training signals must be labelled");
    feats.push_back(hoc_features(s, pulse));
    labels.push_back(*s.label);
  }

  std::vector<double> mean(F, 0.0), stdev(F, 0.0);
  for (const auto& f : feats)
    for (std::size_t k = 0; k < F; ++k) mean[k] += f[k];
  for (auto& m : mean) m /= static_cast<double>(feats.size());
  for (const auto& f : feats)
    for (std::size_t k = 0; k < F; ++k) stdev[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
  for (auto& s : stdev) s = std::max(std::sqrt(s / static_cast<double>(feats.size())), 1e-12);
  // Stored as float32 in the checkpoint; round now so reloads are bit-identical.
  for (auto& m : mean) m = static_cast<float>(m);
  for (auto& s : stdev) s = static_cast<float>(s);

  ad::Tensor<float> x({feats.size(), F});
  for (std::size_t i = 0; i < feats.size(); ++i)
    for (std::size_t k = 0; k < F; ++k) x[i * F + k] = static_cast<float>((feats[i][k] - mean[k]) / stdev[k]);

  Network<float> head(arch, hyper.seed);
  auto params = head.param_ptrs();
  auto& w = head.param("fc.w");
  ad::Adam<float> opt({.lr = hyper.hoc_lr});

  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.meta.seed = hyper.seed;
  ckpt.meta.epochs = hyper.hoc_iterations;

  double first_loss = 0.0;
  double last_loss = 0.0;
  for (int it = 0; it < hyper.hoc_iterations; ++it) {
    for (auto* p : params) p->zero_grad();
    ad::Tape<float> tape;
    const ad::Var logits = head.forward(tape, tape.constant(x));
    const ad::Var loss = ad::softmax_cross_entropy(tape, logits, labels, ad::Reduction::Mean);
    double value = tape.value(loss)[0];
    tape.backward(loss);
    double penalty = 0.0;
    for (std::size_t k = 0; k < w.value.size(); ++k) {
      penalty += 0.5 * hyper.l2 * w.value[k] * w.value[k];
      w.grad[k] += static_cast<float>(hyper.l2 * w.value[k]);
    }
    value += penalty;
    if (!std::isfinite(value)) throw TrainingError("logistic regression diverged", it);
    if (it == 0) first_loss = value;
    last_loss = value;
    opt.step(params);
  }

  ckpt.params = head.export_params();
  ckpt.params.push_back({"feature.mean", {F}, std::vector<float>(mean.begin(), mean.end())});
  ckpt.params.push_back({"feature.std", {F}, std::vector<float>(stdev.begin(), stdev.end())});

  const HocClassifier model(Network<float>(arch, ckpt.params), mean, stdev);
  const double val_acc = val_set.empty() ? 0.0 : accuracy(model, val_set);
  ckpt.meta.best_epoch = hyper.hoc_iterations;
  ckpt.meta.best_val_accuracy = val_acc;
  ckpt.meta.curve.push_back({0, first_loss, 0.0, 0.0});
  ckpt.meta.curve.push_back({hyper.hoc_iterations, last_loss, 0.0, val_acc});
  return ckpt;
}

}  // namespace advmod
