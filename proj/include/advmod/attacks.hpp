#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advmod/classifiers.hpp"
#include "advmod/dataset.hpp"
#include "advmod/sigsynth.hpp"

namespace advmod {

enum class AttackKind { Fgsm, Pga };

/// How a PGA iterate moves before projection: beta*eps*sign(grad), or the
/// literal beta*eps*grad.
enum class StepRule { Sign, RawGradient };

std::string attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::Pga;
  double spr_db = 20.0;
  int steps = 20;
  double step_frac = 0.125;
  std::optional<int> target;
  StepRule step_rule = StepRule::Sign;
  std::optional<std::uint64_t> random_start_seed;  // off by default

  void validate() const;
  /// e.g. "pga-k20-b0.125" or "fgsm-target1".
  std::string describe() const;
};

struct Perturbation {
  std::vector<double> delta;  // 2N
  double eps = 0.0;
  double measured_spr_db = 0.0;
  bool success = false;
  bool gradient_had_zero = false;  // any exactly-zero gradient entry on the last step
};

/// L-infinity radius for which a full +-eps perturbation on both rails has
/// power P_x * 10^(-spr/10).
double spr_to_eps(double signal_power, double spr_db);

/// 10 log10(P_x / P_delta); +inf for a zero perturbation.
double measure_spr_db(const IQSignal& clean, std::span<const double> delta);

/// Called after every PGA iterate (k = 1..K) with the current deltas.
using IterateObserver = std::function<void(int k, const std::vector<std::vector<double>>& deltas)>;

/// Crafts one perturbation per signal. `labels` are true labels; with a
/// target set the attack descends the target-class loss instead.
std::vector<Perturbation> craft(const Classifier& model, std::span<const IQSignal> signals,
                                std::span<const int> labels, const AttackConfig& config,
                                const IterateObserver& observer = {});

Perturbation fgsm(const Classifier& model, const IQSignal& x, int label, double spr_db,
                  std::optional<int> target = std::nullopt);

Perturbation pga(const Classifier& model, const IQSignal& x, int label, double spr_db, int steps = 20,
                 double step_frac = 0.125, std::optional<int> target = std::nullopt);

/// x + delta with metadata preserved.
IQSignal apply(const IQSignal& x, const Perturbation& p);
IQSignal apply(const IQSignal& x, std::span<const double> delta);

/// Delta stored in the dataset record layout (samples = delta).
Record perturbation_record(const Perturbation& p, std::uint16_t label, std::optional<double> snr_db);

}  // namespace advmod
