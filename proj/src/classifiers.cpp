#include <algorithm>
#include <cmath>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"

namespace advmod {

int Prediction::label() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

Prediction Classifier::predict(const IQSignal& signal) const {
  return predict_batch(std::span<const IQSignal>(&signal, 1)).front();
}

std::vector<LossGradient> Classifier::loss_gradient(std::span<const IQSignal>, std::span<const int>,
                                                    Objective) const {
  throw UnsupportedAttackError(preset_name(arch().preset) +
                               " has no input gradient; craft perturbations on a surrogate model");
}

LossGradient Classifier::input_gradient_loss(const IQSignal& signal, int label, Objective objective) const {
  return loss_gradient(std::span<const IQSignal>(&signal, 1), std::span<const int>(&label, 1), objective).front();
}

double accuracy(const Classifier& model, std::span<const IQSignal> signals) {
  if (signals.empty()) return 0.0;
  const auto preds = model.predict_batch(signals);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < signals.size(); ++i) {
    if (!signals[i].label) throw ArgumentError("accuracy requires labelled signals");
    correct += preds[i].label() == *signals[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(signals.size());
}

namespace {

Prediction prediction_from_logits(std::span<const double> logits) {
  Prediction p;
  p.logits.assign(logits.begin(), logits.end());
  p.probs = ad::softmax(logits);
  return p;
}

void check_length(const ModelArch& arch, const IQSignal& s) {
  if (s.length() != arch.input_length) {
    throw IncompatibleError("signal length " + std::to_string(s.length()) + " does not match model input length " +
                            std::to_string(arch.input_length));
  }
}

}  // namespace

NetworkClassifier::NetworkClassifier(Network<float> net, std::size_t batch) : net_(std::move(net)), batch_(batch) {
  if (net_.arch().preset != Preset::CnnSmall && net_.arch().preset != Preset::ResnetLite) {
    throw ConfigError("NetworkClassifier wraps cnn_small or resnet_lite only");
  }
}

ad::Tensor<float> NetworkClassifier::batch_tensor(std::span<const IQSignal> signals) const {
  const std::size_t n = net_.arch().input_length;
  ad::Tensor<float> t({signals.size(), 2, n});
  for (std::size_t b = 0; b < signals.size(); ++b) {
    check_length(net_.arch(), signals[b]);
    std::copy(signals[b].samples.begin(), signals[b].samples.end(), t.data() + b * 2 * n);
  }
  return t;
}

std::vector<Prediction> NetworkClassifier::predict_batch(std::span<const IQSignal> signals) const {
  std::vector<Prediction> out;
  out.reserve(signals.size());
  const std::size_t C = net_.arch().num_classes;
  for (std::size_t lo = 0; lo < signals.size(); lo += batch_) {
    const auto chunk = signals.subspan(lo, std::min(batch_, signals.size() - lo));
    ad::Tape<float> tape;
    const ad::Var x = tape.constant(batch_tensor(chunk));
    const auto& logits = tape.value(net_.forward_frozen(tape, x));
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::vector<double> row(logits.data() + b * C, logits.data() + (b + 1) * C);
      out.push_back(prediction_from_logits(row));
    }
  }
  return out;
}

std::vector<LossGradient> NetworkClassifier::loss_gradient(std::span<const IQSignal> signals,
                                                           std::span<const int> labels,
                                                           Objective objective) const {
  if (labels.size() != signals.size()) throw ArgumentError("one label per signal required");
  std::vector<LossGradient> out;
  out.reserve(signals.size());
  const std::size_t C = net_.arch().num_classes;
  const std::size_t n2 = 2 * net_.arch().input_length;
  const float sign = objective == Objective::Targeted ? -1.0f : 1.0f;
  for (std::size_t lo = 0; lo < signals.size(); lo += batch_) {
    const std::size_t count = std::min(batch_, signals.size() - lo);
    const auto chunk = signals.subspan(lo, count);
    std::vector<int> lab(labels.begin() + static_cast<long>(lo), labels.begin() + static_cast<long>(lo + count));
    for (int y : lab) {
      if (y < 0 || static_cast<std::size_t>(y) >= C) throw ArgumentError("label out of range");
    }

    ad::Tape<float> tape;
    const ad::Var x = tape.input(batch_tensor(chunk));
    const ad::Var logits = net_.forward_frozen(tape, x);
    const ad::Var ce = ad::softmax_cross_entropy(tape, logits, lab, ad::Reduction::Sum);
    tape.backward(ad::scale(tape, ce, sign));
    const auto& z = tape.value(logits);
    const auto& g = tape.grad(x);
    for (std::size_t b = 0; b < count; ++b) {
      const std::span<const float> row(z.data() + b * C, C);
      const double mx = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (float v : row) s += std::exp(static_cast<double>(v) - mx);
      const double loss = mx + std::log(s) - row[static_cast<std::size_t>(lab[b])];
      LossGradient lg;
      lg.loss = sign * loss;
      lg.grad.assign(g.data() + b * n2, g.data() + (b + 1) * n2);
      out.push_back(std::move(lg));
    }
  }
  return out;
}

HocClassifier::HocClassifier(Network<float> head, std::vector<double> feature_mean, std::vector<double> feature_std)
    : head_(std::move(head)), mean_(std::move(feature_mean)), std_(std::move(feature_std)) {
  if (head_.arch().preset != Preset::HocLogReg) throw ConfigError("HocClassifier requires the hoc_logreg preset");
  if (mean_.size() != kNumHocFeatures || std_.size() != kNumHocFeatures) {
    throw IncompatibleError("feature standardization must have five entries");
  }
}

std::vector<double> HocClassifier::standardized(const IQSignal& signal) const {
  check_length(head_.arch(), signal);
  const auto f = hoc_features(signal, *head_.arch().pulse);
  std::vector<double> z(kNumHocFeatures);
  for (std::size_t k = 0; k < kNumHocFeatures; ++k) z[k] = (f[k] - mean_[k]) / std_[k];
  return z;
}

std::vector<Prediction> HocClassifier::predict_batch(std::span<const IQSignal> signals) const {
  ad::Tensor<float> x({signals.size(), kNumHocFeatures});
  for (std::size_t b = 0; b < signals.size(); ++b) {
    const auto z = standardized(signals[b]);
    for (std::size_t k = 0; k < kNumHocFeatures; ++k) x[b * kNumHocFeatures + k] = static_cast<float>(z[k]);
  }
  ad::Tape<float> tape;
  const auto& logits = tape.value(head_.forward_frozen(tape, tape.constant(std::move(x))));
  const std::size_t C = head_.arch().num_classes;
  std::vector<Prediction> out;
  for (std::size_t b = 0; b < signals.size(); ++b) {
    std::vector<double> row(logits.data() + b * C, logits.data() + (b + 1) * C);
    out.push_back(prediction_from_logits(row));
  }
  return out;
}

std::unique_ptr<Classifier> make_classifier(const Checkpoint& ckpt) {
  ckpt.arch.validate();
  switch (ckpt.arch.preset) {
    case Preset::CnnSmall:
    case Preset::ResnetLite:
      return std::make_unique<NetworkClassifier>(Network<float>(ckpt.arch, ckpt.params));
    case Preset::HocLogReg: {
      const auto& m = ckpt.param("feature.mean");
      const auto& s = ckpt.param("feature.std");
      return std::make_unique<HocClassifier>(Network<float>(ckpt.arch, ckpt.params),
                                             std::vector<double>(m.values.begin(), m.values.end()),
                                             std::vector<double>(s.values.begin(), s.values.end()));
    }
    case Preset::MaxLikelihood:
      return std::make_unique<MaxLikelihoodClassifier>(ckpt.arch);
  }
  throw ConfigError("unsupported preset");
}

}  // namespace advmod
