#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advmod/autodiff.hpp"
#include "advmod/features.hpp"
#include "advmod/sigsynth.hpp"

namespace advmod {

enum class Preset { HocLogReg, CnnSmall, ResnetLite, MaxLikelihood };

std::string preset_name(Preset preset);
Preset parse_preset(std::string_view name);

/// Everything needed to rebuild a model's layer stack.
struct ModelArch {
  Preset preset = Preset::CnnSmall;
  std::size_t num_classes = 0;
  std::size_t input_length = 0;
  std::vector<std::string> class_names;
  std::optional<PulseShape> pulse;  // hoc_logreg, max_likelihood
  std::optional<double> snr_db;     // max_likelihood; falls back to signal metadata

  /// Throws ConfigError when the preset's requirements are not met.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelArch from_json(const nlohmann::json& j);
};

ModelArch make_arch(Preset preset, std::size_t input_length, std::vector<std::string> class_names,
                    std::optional<PulseShape> pulse = std::nullopt,
                    std::optional<double> snr_db = std::nullopt);

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<CurvePoint> curve;
};

/// Header is JSON; parameters follow as one little-endian float32 blob in
/// the order of `params`.
///
///   "ADVMODCK" | u32 header_len | header JSON | f32 blob
struct Checkpoint {
  ModelArch arch;
  std::vector<NamedArray> params;
  TrainingMeta meta;

  std::size_t parameter_count() const;
  const NamedArray& param(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Trainable layer stack for cnn_small, resnet_lite and the logistic head of
/// hoc_logreg. Input is [B, 2, N] for the networks and [B, 5] standardized
/// features for hoc_logreg; output is logits [B, C].
template <class T>
class Network {
 public:
  /// Fan-in scaled uniform initialization from `seed`; biases start at zero.
  Network(ModelArch arch, std::uint64_t seed);
  /// Loads parameters by name; throws IncompatibleError on any mismatch.
  Network(ModelArch arch, const std::vector<NamedArray>& params);

  /// Records parameters as differentiable leaves (training).
  ad::Var forward(ad::Tape<T>& tape, ad::Var x);
  /// Records parameters as constants (inference, input gradients).
  ad::Var forward_frozen(ad::Tape<T>& tape, ad::Var x) const;

  const ModelArch& arch() const { return arch_; }
  std::vector<ad::Parameter<T>>& params() { return params_; }
  const std::vector<ad::Parameter<T>>& params() const { return params_; }
  std::vector<ad::Parameter<T>*> param_ptrs();
  std::size_t parameter_count() const;
  ad::Parameter<T>& param(std::string_view name);
  std::vector<NamedArray> export_params() const;

 private:
  template <class ParamVar>
  ad::Var forward_impl(ad::Tape<T>& tape, ad::Var x, ParamVar&& pv) const;
  std::size_t index_of(std::string_view name) const;

  ModelArch arch_;
  std::vector<ad::Parameter<T>> params_;
};

extern template class Network<float>;
extern template class Network<double>;

/// (name, shape) of every trainable parameter of a preset, in checkpoint order.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const ModelArch& arch);

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;

  int label() const;
};

/// Untargeted: ascend the cross-entropy of the true label.
/// Targeted: ascend the negated cross-entropy of the target label.
enum class Objective { Untargeted, Targeted };

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d samples, 2N in IQSignal layout
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const ModelArch& arch() const = 0;
  virtual std::vector<Prediction> predict_batch(std::span<const IQSignal> signals) const = 0;
  Prediction predict(const IQSignal& signal) const;

  virtual bool differentiable() const { return false; }

  /// Loss and input gradient per signal. `labels` holds true labels
  /// (untargeted) or targets (targeted). Throws UnsupportedAttackError for
  /// models without an input gradient.
  virtual std::vector<LossGradient> loss_gradient(std::span<const IQSignal> signals,
                                                  std::span<const int> labels,
                                                  Objective objective) const;

  LossGradient input_gradient_loss(const IQSignal& signal, int label, Objective objective) const;
};

std::unique_ptr<Classifier> make_classifier(const Checkpoint& ckpt);

class NetworkClassifier final : public Classifier {
 public:
  explicit NetworkClassifier(Network<float> net, std::size_t batch = 64);

  const ModelArch& arch() const override { return net_.arch(); }
  std::vector<Prediction> predict_batch(std::span<const IQSignal> signals) const override;
  bool differentiable() const override { return true; }
  std::vector<LossGradient> loss_gradient(std::span<const IQSignal> signals, std::span<const int> labels,
                                          Objective objective) const override;

  const Network<float>& network() const { return net_; }

 private:
  ad::Tensor<float> batch_tensor(std::span<const IQSignal> signals) const;

  Network<float> net_;
  std::size_t batch_;
};

/// HOC features -> standardization -> multinomial logistic regression.
class HocClassifier final : public Classifier {
 public:
  HocClassifier(Network<float> head, std::vector<double> feature_mean, std::vector<double> feature_std);

  const ModelArch& arch() const override { return head_.arch(); }
  std::vector<Prediction> predict_batch(std::span<const IQSignal> signals) const override;

  std::vector<double> standardized(const IQSignal& signal) const;
  const std::vector<double>& feature_mean() const { return mean_; }
  const std::vector<double>& feature_std() const { return std_; }

 private:
  Network<float> head_;
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// Log-likelihood of symbols under a Gaussian mixture centred on `points`
/// with per-component variance sigma2, uniform over points:
///   sum_k log( (1/M) sum_a exp(-|s_k - a|^2 / (2 sigma2)) ).
/// When `grad` is non-null it receives d/ds_k as complex (dRe + j dIm).
double mixture_log_likelihood(std::span<const cplx> symbols, std::span<const cplx> points, double sigma2,
                              std::vector<cplx>* grad = nullptr);

/// Bayes-optimal classifier for known constellations in AWGN with known SNR.
/// Symbols are compared against constellations scaled to the reference
/// amplitude sqrt(P_ref); when no reference power is set it is estimated per
/// signal from the measured power and the SNR and treated as a constant for
/// differentiation.
class MaxLikelihoodClassifier final : public Classifier {
 public:
  explicit MaxLikelihoodClassifier(ModelArch arch);

  const ModelArch& arch() const override { return arch_; }
  std::vector<Prediction> predict_batch(std::span<const IQSignal> signals) const override;
  bool differentiable() const override { return true; }
  std::vector<LossGradient> loss_gradient(std::span<const IQSignal> signals, std::span<const int> labels,
                                          Objective objective) const override;

  void set_reference_power(std::optional<double> p) { reference_power_ = p; }
  std::optional<double> reference_power() const { return reference_power_; }

  const std::vector<ModScheme>& schemes() const { return schemes_; }

  /// Per-scheme log-likelihoods (the logits).
  std::vector<double> log_likelihoods(const IQSignal& signal) const;

 private:
  struct Context {
    double snr_db;
    double amplitude;
    double sigma2;  // per-component symbol noise variance
  };
  Context context(const IQSignal& signal) const;
  LossGradient loss_gradient_one(const IQSignal& signal, int label, Objective objective) const;

  ModelArch arch_;
  std::vector<ModScheme> schemes_;
  std::vector<std::vector<cplx>> points_;
  std::optional<double> reference_power_;
};

/// One-shot maximum-likelihood classification; throws ConfigError if neither
/// `snr_db` nor the signal carries an SNR.
Prediction ml_classify(const IQSignal& signal, const std::vector<ModScheme>& schemes,
                       std::optional<double> snr_db, const PulseShape& pulse);

struct TrainHyper {
  int epochs = 8;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double l2 = 1e-3;            // hoc_logreg only
  int hoc_iterations = 1500;   // hoc_logreg full-batch steps
  double hoc_lr = 0.05;
  std::function<void(const CurvePoint&)> on_epoch;
};

/// Fits a preset on labelled signals and returns the best-validation
/// checkpoint. Throws TrainingError if the loss becomes non-finite.
Checkpoint train(const ModelArch& arch, std::span<const IQSignal> train_set,
                 std::span<const IQSignal> val_set, const TrainHyper& hyper);

double accuracy(const Classifier& model, std::span<const IQSignal> signals);

}  // namespace advmod
