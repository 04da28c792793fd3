#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advmod/attacks.hpp"
#include "advmod/classifiers.hpp"
#include "advmod/sigsynth.hpp"

namespace advmod {

/// Robustness: classify(x + delta).
/// Security: classify(awgn(x + delta, post_noise_snr_db)).
struct FrameworkKind {
  enum class Kind { Robustness, Security };

  Kind kind = Kind::Robustness;
  double post_noise_snr_db = 20.0;
  // Noise power follows the perturbed signal unless this is set.
  bool noise_relative_to_clean = false;

  static FrameworkKind robustness() { return {}; }
  static FrameworkKind security(double snr_db = 20.0, bool relative_to_clean = false) {
    return {Kind::Security, snr_db, relative_to_clean};
  }

  std::string name() const;
  static FrameworkKind parse(std::string_view name);
  void validate() const;
};

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  void add(int truth, int predicted);

  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }
  std::size_t count(std::size_t truth, std::size_t predicted) const { return counts_[truth][predicted]; }
  std::size_t row_sum(std::size_t truth) const;
  std::size_t total() const;
  std::size_t correct() const;
  double accuracy() const;
  /// Diagonal over row sum; 0 for a class with no signals.
  double recall(std::size_t truth) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> counts_;
};

/// condition_db is an SNR or SPR in dB; absent means "natural".
struct AccuracyRow {
  std::string framework;
  std::string attack;
  std::optional<double> condition_db;
  std::size_t correct = 0;
  std::size_t n = 0;

  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

using AccuracyTable = std::vector<AccuracyRow>;

struct FrameworkResult {
  AccuracyRow row;
  ConfusionMatrix confusion;
  std::vector<int> predictions;
};

struct EvalOptions {
  /// Model the perturbations are crafted on; the victim when null.
  const Classifier* attacker = nullptr;
  unsigned threads = 1;
};

/// Crafts perturbations for labelled signals in fixed-size chunks spread
/// over `threads` workers. Results do not depend on the thread count.
std::vector<Perturbation> craft_parallel(const Classifier& attacker, std::span<const IQSignal> signals,
                                         const AttackConfig& config, unsigned threads);

/// Classifies already-crafted perturbed inputs under a framework. With
/// `perturbations` null the clean signals are classified as they are
/// (the natural condition, no post-noise). Noise for signal i is seeded
/// with derive_seed(seed, i).
FrameworkResult evaluate_perturbed(const Classifier& victim, std::span<const IQSignal> signals,
                                   const std::vector<Perturbation>* perturbations, const FrameworkKind& framework,
                                   std::uint64_t seed, unsigned threads, std::string attack_name = "none",
                                   std::optional<double> condition_db = std::nullopt);

FrameworkResult eval_framework(const Classifier& victim, std::span<const IQSignal> signals,
                               const std::optional<AttackConfig>& attack, const FrameworkKind& framework,
                               std::uint64_t seed, const EvalOptions& options = {});

/// One row per distinct SNR (ascending; noiseless records report +inf).
/// Throws ArgumentError for an empty input.
AccuracyTable sweep_snr(const Classifier& model, std::span<const IQSignal> signals, unsigned threads = 1);

struct SprSweep {
  AccuracyTable table;
  std::vector<FrameworkResult> results;  // parallel to table
};

/// For every framework: a natural row followed by one row per SPR.
/// Each (signal, SPR) perturbation is crafted once and shared by all
/// frameworks. `attack.spr_db` is ignored.
SprSweep sweep_spr(const Classifier& victim, std::span<const IQSignal> signals, const AttackConfig& attack,
                   std::span<const double> spr_list, std::span<const FrameworkKind> frameworks, std::uint64_t seed,
                   const EvalOptions& options = {});

struct ClassDrop {
  std::size_t index = 0;
  std::string name;
  double natural_recall = 0.0;
  double attacked_recall = 0.0;
  double drop = 0.0;
};

/// Recall drop per class, largest first (ties by class index).
std::vector<ClassDrop> per_class_robustness(const ConfusionMatrix& natural, const ConfusionMatrix& attacked);

/// Shortest round-trip decimal; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);

/// Columns: framework,attack,condition_db,accuracy,n
std::string accuracy_csv(const AccuracyTable& table);
/// Header row and first column hold class names; rows are true classes.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace advmod
