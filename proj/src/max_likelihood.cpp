#include <algorithm>
#include <cmath>
#include <limits>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"

namespace advmod {

double mixture_log_likelihood(std::span<const cplx> symbols, std::span<const cplx> points, double sigma2,
                              std::vector<cplx>* grad) {
  if (points.empty()) throw ArgumentError("mixture likelihood needs at least one point");
  if (!(sigma2 > 0.0)) throw ArgumentError("mixture likelihood needs a positive variance");
  if (grad) grad->assign(symbols.size(), cplx{});
  const double log_m = std::log(static_cast<double>(points.size()));
  std::vector<double> e(points.size());
  double total = 0.0;
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const cplx s = symbols[k];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < points.size(); ++a) {
      e[a] = -std::norm(s - points[a]) / (2.0 * sigma2);
      mx = std::max(mx, e[a]);
    }
    double z = 0.0;
    for (double& v : e) {
      v = std::exp(v - mx);
      z += v;
    }
    total += mx + std::log(z) - log_m;
    if (grad) {
      cplx g{};
      for (std::size_t a = 0; a < points.size(); ++a) g += (e[a] / z) * (points[a] - s);
      (*grad)[k] = g / sigma2;
    }
  }
  return total;
}

MaxLikelihoodClassifier::MaxLikelihoodClassifier(ModelArch arch) : arch_(std::move(arch)) {
  if (arch_.preset != Preset::MaxLikelihood) throw ConfigError("expected the max_likelihood preset");
  arch_.validate();
  for (const auto& name : arch_.class_names) {
    schemes_.push_back(ModScheme::parse(name));
    points_.push_back(constellation_points(schemes_.back()));
  }
}

MaxLikelihoodClassifier::Context MaxLikelihoodClassifier::context(const IQSignal& signal) const {
  const auto snr = arch_.snr_db ? arch_.snr_db : signal.snr_db;
  if (!snr) throw ConfigError("maximum-likelihood classification requires a known SNR");
  const double lin = std::pow(10.0, -*snr / 10.0);
  const double p_ref = reference_power_ ? *reference_power_ : clean_power_estimate(signal, *snr);
  if (!(p_ref > 0.0)) throw ArgumentError("maximum-likelihood classification of a zero-power signal");
  // Matched filter normalized by the pulse energy E = sps scales per-sample
  // noise variance by 1/sps.
  const double sigma2 = p_ref * lin / 2.0 / static_cast<double>(arch_.pulse->sps);
  return {*snr, std::sqrt(p_ref), sigma2};
}

std::vector<double> MaxLikelihoodClassifier::log_likelihoods(const IQSignal& signal) const {
  if (signal.length() != arch_.input_length && arch_.input_length != 0) {
    throw IncompatibleError("signal length does not match the classifier");
  }
  const Context ctx = context(signal);
  const auto seq = matched_filter_symbols(signal, *arch_.pulse);
  const auto syms = interior_symbols(seq, *arch_.pulse);
  std::vector<double> ll(schemes_.size());
  for (std::size_t m = 0; m < schemes_.size(); ++m) {
    std::vector<cplx> pts = points_[m];
    for (auto& p : pts) p *= ctx.amplitude;
    ll[m] = mixture_log_likelihood(syms, pts, ctx.sigma2);
  }
  return ll;
}

std::vector<Prediction> MaxLikelihoodClassifier::predict_batch(std::span<const IQSignal> signals) const {
  std::vector<Prediction> out;
  out.reserve(signals.size());
  for (const auto& s : signals) {
    Prediction p;
    p.logits = log_likelihoods(s);
    p.probs = ad::softmax(std::span<const double>(p.logits));
    out.push_back(std::move(p));
  }
  return out;
}

LossGradient MaxLikelihoodClassifier::loss_gradient_one(const IQSignal& signal, int label,
                                                        Objective objective) const {
  if (label < 0 || static_cast<std::size_t>(label) >= schemes_.size()) throw ArgumentError("label out of range");
  const Context ctx = context(signal);
  const PulseShape& pulse = *arch_.pulse;
  const auto seq = matched_filter_symbols(signal, pulse);
  const std::size_t edge = static_cast<std::size_t>(pulse.edge_symbols());
  const auto syms = interior_symbols(seq, pulse);

  const std::size_t M = schemes_.size();
  std::vector<double> ll(M);
  std::vector<std::vector<cplx>> dll(M);
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<cplx> pts = points_[m];
    for (auto& p : pts) p *= ctx.amplitude;
    ll[m] = mixture_log_likelihood(syms, pts, ctx.sigma2, &dll[m]);
  }
  const auto post = ad::softmax(std::span<const double>(ll));
  const double mx = *std::max_element(ll.begin(), ll.end());
  double z = 0.0;
  for (double v : ll) z += std::exp(v - mx);
  const double ce = mx + std::log(z) - ll[static_cast<std::size_t>(label)];

  // d CE / d s_k = sum_m post_m dLL_m - dLL_label
  const double sign = objective == Objective::Targeted ? -1.0 : 1.0;
  std::vector<cplx> dsym(syms.size());
  for (std::size_t k = 0; k < syms.size(); ++k) {
    cplx g = -dll[static_cast<std::size_t>(label)][k];
    for (std::size_t m = 0; m < M; ++m) g += post[m] * dll[m][k];
    dsym[k] = sign * g;
  }

  // Adjoint of the matched filter.
  const auto h = pulse.transmit_taps();
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const std::size_t n = signal.length();
  const long delay = pulse.delay();
  LossGradient out;
  out.loss = sign * ce;
  out.grad.assign(2 * n, 0.0);
  for (std::size_t j = 0; j < dsym.size(); ++j) {
    const std::size_t k = j + edge;
    const long start = static_cast<long>(k * static_cast<std::size_t>(pulse.sps)) - delay;
    for (std::size_t t = 0; t < h.size(); ++t) {
      const long pos = start + static_cast<long>(t);
      if (pos < 0 || pos >= static_cast<long>(n)) continue;
      const double w = h[t] / energy;
      out.grad[static_cast<std::size_t>(pos)] += dsym[j].real() * w;
      out.grad[n + static_cast<std::size_t>(pos)] += dsym[j].imag() * w;
    }
  }
  return out;
}

std::vector<LossGradient> MaxLikelihoodClassifier::loss_gradient(std::span<const IQSignal> signals,
                                                                 std::span<const int> labels,
                                                                 Objective objective) const {
  if (labels.size() != signals.size()) throw ArgumentError("one label per signal required");
  std::vector<LossGradient> out;
  out.reserve(signals.size());
  for (std::size_t i = 0; i < signals.size(); ++i) out.push_back(loss_gradient_one(signals[i], labels[i], objective));
  return out;
}

Prediction ml_classify(const IQSignal& signal, const std::vector<ModScheme>& schemes, std::optional<double> snr_db,
                       const PulseShape& pulse) {
  std::vector<std::string> names;
  for (const auto& s : schemes) names.push_back(s.name());
  ModelArch arch;
  arch.preset = Preset::MaxLikelihood;
  arch.num_classes = names.size();
  arch.input_length = signal.length();
  arch.class_names = std::move(names);
  arch.pulse = pulse;
  arch.snr_db = snr_db;
  return MaxLikelihoodClassifier(std::move(arch)).predict(signal);
}

}  // namespace advmod
