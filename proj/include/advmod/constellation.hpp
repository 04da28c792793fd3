#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advmod/attacks.hpp"
#include "advmod/features.hpp"
#include "advmod/sigsynth.hpp"

namespace advmod {

/// Matched-filter symbols of a clean and a perturbed signal, normalized to
/// unit-power constellation scale.
struct SymbolShift {
  std::vector<cplx> original;
  std::vector<cplx> perturbed;

  std::size_t size() const { return original.size(); }
  cplx displacement(std::size_t k) const { return perturbed[k] - original[k]; }
};

/// Unit vector from `symbol` toward its nearest point; zero when the symbol
/// sits on a point (distance < 1e-12). Equidistant points resolve to the
/// lowest index.
cplx bayes_shift_direction(cplx symbol, std::span<const cplx> points);
cplx bayes_shift_direction(cplx symbol, const ModScheme& target);

/// Alignment of one signal's symbol displacements with the Bayes direction.
struct SignalAlignment {
  double score = 0.0;  // mean cosine over qualifying symbols
  std::size_t qualifying = 0;
  std::size_t positive = 0;

  bool empty() const { return qualifying == 0; }
};

/// Scores symbols whose displacement exceeds 1e-9 and whose Bayes direction
/// is nonzero.
SignalAlignment align_symbols(std::span<const cplx> original, std::span<const cplx> perturbed,
                              std::span<const cplx> target_points);

struct AlignmentReport {
  std::vector<double> scores;  // one per signal with qualifying symbols
  double mean = 0.0;
  double stddev = 0.0;
  double positive_fraction = 0.0;  // over qualifying symbols
  std::size_t signals = 0;
  std::size_t empty_signals = 0;

  bool empty() const { return scores.empty(); }
};

AlignmentReport summarize(std::span<const SignalAlignment> per_signal);

/// Symbols of both signals over the interior symbol range, divided by the
/// square root of the clean signal's noiseless power estimate.
SymbolShift symbol_shift(const IQSignal& clean, const IQSignal& perturbed, const PulseShape& pulse);

SignalAlignment alignment_score(const IQSignal& clean, const IQSignal& perturbed, const ModScheme& target,
                                const PulseShape& pulse);
AlignmentReport alignment_score(std::span<const IQSignal> clean, std::span<const IQSignal> perturbed,
                                const ModScheme& target, const PulseShape& pulse);

struct OracleOptions {
  std::vector<ModScheme> classes = benchmark_schemes();
  AttackKind kind = AttackKind::Fgsm;
  int steps = 20;
  double step_frac = 0.125;
};

/// Targeted attack toward `target` against the maximum-likelihood
/// classifier over `options.classes` at the given SNR, with the reference
/// power taken from the clean signal.
Perturbation oracle_perturbation(const IQSignal& clean, const ModScheme& target, double spr_db, double snr_db,
                                 const PulseShape& pulse, const OracleOptions& options = {});

IQSignal oracle_targeted_shift(const IQSignal& clean, const ModScheme& target, double spr_db, double snr_db,
                               const PulseShape& pulse, const OracleOptions& options = {});

/// Scatter of clean symbols, perturbed symbols and target points on a fixed
/// [-2, 2] x [-2, 2] plane. Each marker is one <circle> whose class is
/// "clean", "perturbed" or "target".
std::string constellation_svg(std::span<const cplx> clean, std::span<const cplx> perturbed,
                              std::span<const cplx> target_points, const std::string& title = "");
void write_constellation_svg(const std::filesystem::path& path, std::span<const cplx> clean,
                             std::span<const cplx> perturbed, std::span<const cplx> target_points,
                             const std::string& title = "");

}  // namespace advmod
