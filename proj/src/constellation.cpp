#include "advmod/constellation.hpp"

#include <algorithm>
#include <cmath>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"
#include "advmod/io.hpp"
#include "advmod/svg.hpp"

namespace advmod {

cplx bayes_shift_direction(cplx symbol, std::span<const cplx> points) {
  if (points.empty()) throw ArgumentError("bayes_shift_direction needs target points");
  std::size_t best = 0;
  double best_d = std::abs(symbol - points[0]);
  for (std::size_t a = 1; a < points.size(); ++a) {
    const double d = std::abs(symbol - points[a]);
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  if (best_d < 1e-12) return {0.0, 0.0};
  return (points[best] - symbol) / best_d;
}

cplx bayes_shift_direction(cplx symbol, const ModScheme& target) {
  const auto pts = constellation_points(target);
  return bayes_shift_direction(symbol, pts);
}

SignalAlignment align_symbols(std::span<const cplx> original, std::span<const cplx> perturbed,
                              std::span<const cplx> target_points) {
  if (original.size() != perturbed.size()) throw ArgumentError("symbol sequences differ in length");
  SignalAlignment out;
  double sum = 0.0;
  for (std::size_t k = 0; k < original.size(); ++k) {
    const cplx d = perturbed[k] - original[k];
    const double norm = std::abs(d);
    if (!(norm > 1e-9)) continue;
    const cplx dir = bayes_shift_direction(original[k], target_points);
    if (dir == cplx{}) continue;
    // dir is unit length; cosine = <d, dir> / |d|
    const double cosine = (d.real() * dir.real() + d.imag() * dir.imag()) / norm;
    sum += cosine;
    ++out.qualifying;
    if (cosine > 0.0) ++out.positive;
  }
  if (out.qualifying > 0) out.score = sum / static_cast<double>(out.qualifying);
  return out;
}

AlignmentReport summarize(std::span<const SignalAlignment> per_signal) {
  AlignmentReport r;
  r.signals = per_signal.size();
  std::size_t qualifying = 0, positive = 0;
  for (const auto& s : per_signal) {
    if (s.empty()) {
      ++r.empty_signals;
      continue;
    }
    r.scores.push_back(s.score);
    qualifying += s.qualifying;
    positive += s.positive;
  }
  if (r.scores.empty()) return r;
  double sum = 0.0;
  for (double v : r.scores) sum += v;
  r.mean = sum / static_cast<double>(r.scores.size());
  double var = 0.0;
  for (double v : r.scores) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(r.scores.size()));
  r.positive_fraction = static_cast<double>(positive) / static_cast<double>(qualifying);
  return r;
}

SymbolShift symbol_shift(const IQSignal& clean, const IQSignal& perturbed, const PulseShape& pulse) {
  if (clean.samples.size() != perturbed.samples.size()) throw ArgumentError("signals differ in length");
  const double p = clean_power_estimate(clean, clean.snr_db);
  if (!(p > 0.0)) throw ArgumentError("constellation projection of a zero-power signal");
  const double g = 1.0 / std::sqrt(p);
  const auto a = matched_filter_symbols(clean, pulse);
  const auto b = matched_filter_symbols(perturbed, pulse);
  const auto ia = interior_symbols(a, pulse);
  const auto ib = interior_symbols(b, pulse);
  SymbolShift s;
  for (std::size_t k = 0; k < ia.size(); ++k) {
    s.original.push_back(ia[k] * g);
    s.perturbed.push_back(ib[k] * g);
  }
  return s;
}

SignalAlignment alignment_score(const IQSignal& clean, const IQSignal& perturbed, const ModScheme& target,
                                const PulseShape& pulse) {
  const auto shift = symbol_shift(clean, perturbed, pulse);
  const auto pts = constellation_points(target);
  return align_symbols(shift.original, shift.perturbed, pts);
}

AlignmentReport alignment_score(std::span<const IQSignal> clean, std::span<const IQSignal> perturbed,
                                const ModScheme& target, const PulseShape& pulse) {
  if (clean.size() != perturbed.size()) throw ArgumentError("one perturbed signal per clean signal required");
  std::vector<SignalAlignment> per;
  per.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) per.push_back(alignment_score(clean[i], perturbed[i], target, pulse));
  return summarize(per);
}

Perturbation oracle_perturbation(const IQSignal& clean, const ModScheme& target, double spr_db, double snr_db,
                                 const PulseShape& pulse, const OracleOptions& options) {
  std::vector<std::string> names;
  std::optional<int> target_index;
  for (std::size_t m = 0; m < options.classes.size(); ++m) {
    names.push_back(options.classes[m].name());
    if (options.classes[m] == target) target_index = static_cast<int>(m);
  }
  if (!target_index) throw ConfigError("oracle target " + target.name() + " is not among the classes");

  MaxLikelihoodClassifier ml(make_arch(Preset::MaxLikelihood, clean.length(), names, pulse, snr_db));
  ml.set_reference_power(clean_power_estimate(clean, snr_db));

  AttackConfig cfg;
  cfg.kind = options.kind;
  cfg.spr_db = spr_db;
  cfg.steps = options.steps;
  cfg.step_frac = options.step_frac;
  cfg.target = target_index;
  const int label = clean.label.value_or(*target_index);
  return craft(ml, std::span<const IQSignal>(&clean, 1), std::span<const int>(&label, 1), cfg).front();
}

IQSignal oracle_targeted_shift(const IQSignal& clean, const ModScheme& target, double spr_db, double snr_db,
                               const PulseShape& pulse, const OracleOptions& options) {
  return advmod::apply(clean, oracle_perturbation(clean, target, spr_db, snr_db, pulse, options));
}

std::string constellation_svg(std::span<const cplx> clean, std::span<const cplx> perturbed,
                              std::span<const cplx> target_points, const std::string& title) {
  constexpr double size = 480, margin = 40, range = 2.0;
  const double plot = size - 2 * margin;
  const auto px = [&](double v) { return margin + (v + range) / (2 * range) * plot; };
  const auto py = [&](double v) { return margin + (range - v) / (2 * range) * plot; };
  using svg::coord;

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<rect x=\"" + coord(margin) + "\" y=\"" + coord(margin) + "\" width=\"" + coord(plot) + "\" height=\"" +
         coord(plot) + "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<line class=\"axis\" x1=\"" + coord(px(-range)) + "\" y1=\"" + coord(py(0)) + "\" x2=\"" + coord(px(range)) +
         "\" y2=\"" + coord(py(0)) + "\" stroke=\"#888888\"/>\n";
  out += "<line class=\"axis\" x1=\"" + coord(px(0)) + "\" y1=\"" + coord(py(-range)) + "\" x2=\"" + coord(px(0)) +
         "\" y2=\"" + coord(py(range)) + "\" stroke=\"#888888\"/>\n";
  for (int t = -2; t <= 2; ++t) {
    out += "<text x=\"" + coord(px(t)) + "\" y=\"" + coord(size - margin + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + std::to_string(t) + "</text>\n";
    out += "<text x=\"" + coord(margin - 6) + "\" y=\"" + coord(py(t) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
           std::to_string(t) + "</text>\n";
  }
  out += "<text x=\"240\" y=\"" + coord(size - 8) + "\" text-anchor=\"middle\" font-size=\"12\">In-phase</text>\n";
  out += "<text x=\"12\" y=\"240\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 240)\">Quadrature</text>\n";
  if (!title.empty()) {
    out += "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + svg::escape(title) + "</text>\n";
  }

  const auto markers = [&](std::span<const cplx> pts, const char* cls, const char* fill, const char* r) {
    for (const auto& z : pts) {
      out += "<circle class=\"" + std::string(cls) + "\" cx=\"" + coord(px(z.real())) + "\" cy=\"" +
             coord(py(z.imag())) + "\" r=\"" + r + "\" fill=\"" + fill + "\"/>\n";
    }
  };
  markers(clean, "clean", "#e6b800", "2");
  markers(perturbed, "perturbed", "#1f4fd6", "2");
  markers(target_points, "target", "#d62728", "5");
  out += "</svg>\n";
  return out;
}

void write_constellation_svg(const std::filesystem::path& path, std::span<const cplx> clean,
                             std::span<const cplx> perturbed, std::span<const cplx> target_points,
                             const std::string& title) {
  io::write_file_atomic(path, constellation_svg(clean, perturbed, target_points, title));
}

}  // namespace advmod
