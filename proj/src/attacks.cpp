#include "advmod/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "advmod/error.hpp"
#include "advmod/rng.hpp"

namespace advmod {

std::string attack_kind_name(AttackKind kind) { return kind == AttackKind::Fgsm ? "fgsm" : "pga"; }

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "fgsm") return AttackKind::Fgsm;
  if (name == "pga") return AttackKind::Pga;
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (std::isnan(spr_db) || spr_db == -std::numeric_limits<double>::infinity()) {
    throw ConfigError("attack SPR must be a number (or +inf for a zero budget)");
  }
  if (steps < 1) throw ConfigError("attack steps must be at least 1");
  if (!(step_frac > 0.0)) throw ConfigError("attack step fraction must be positive");
  if (target && *target < 0) throw ConfigError("attack target must be a class index");
}

std::string AttackConfig::describe() const {
  std::string out = attack_kind_name(kind);
  if (kind == AttackKind::Pga) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "-k%d-b%g", steps, step_frac);
    out += buf;
    if (step_rule == StepRule::RawGradient) out += "-raw";
  }
  if (target) out += "-target" + std::to_string(*target);
  return out;
}

double spr_to_eps(double signal_power, double spr_db) {
  if (!(signal_power > 0.0)) throw ArgumentError("SPR budget needs a signal with positive power");
  return std::sqrt(signal_power * std::pow(10.0, -spr_db / 10.0) / 2.0);
}

double measure_spr_db(const IQSignal& clean, std::span<const double> delta) {
  if (delta.size() != clean.samples.size()) throw ArgumentError("perturbation shape does not match the signal");
  double pd = 0.0;
  for (double v : delta) pd += v * v;
  pd /= static_cast<double>(clean.length());
  if (pd == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(measure_power(clean) / pd);
}

IQSignal apply(const IQSignal& x, std::span<const double> delta) {
  if (delta.size() != x.samples.size()) throw ArgumentError("perturbation shape does not match the signal");
  IQSignal out = x;
  for (std::size_t k = 0; k < delta.size(); ++k) out.samples[k] += delta[k];
  return out;
}

IQSignal apply(const IQSignal& x, const Perturbation& p) { return advmod::apply(x, std::span<const double>(p.delta)); }

namespace {

double sign_of(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<Perturbation> craft(const Classifier& model, std::span<const IQSignal> signals,
                                std::span<const int> labels, const AttackConfig& config,
                                const IterateObserver& observer) {
  config.validate();
  if (labels.size() != signals.size()) throw ArgumentError("one label per signal required");
  const std::size_t count = signals.size();
  const Objective objective = config.target ? Objective::Targeted : Objective::Untargeted;
  std::vector<int> aim(labels.begin(), labels.end());
  if (config.target) std::fill(aim.begin(), aim.end(), *config.target);

  std::vector<double> eps(count);
  std::vector<std::vector<double>> delta(count);
  for (std::size_t i = 0; i < count; ++i) {
    eps[i] = spr_to_eps(measure_power(signals[i]), config.spr_db);
    delta[i].assign(signals[i].samples.size(), 0.0);
    if (config.random_start_seed && config.kind == AttackKind::Pga) {
      std::mt19937_64 gen(derive_seed(*config.random_start_seed, i));
      std::uniform_real_distribution<double> u(-eps[i], eps[i]);
      for (auto& v : delta[i]) v = u(gen);
    }
  }
  std::vector<bool> had_zero(count, false);

  const bool zero_budget = std::all_of(eps.begin(), eps.end(), [](double e) { return e == 0.0; });
  const int steps = config.kind == AttackKind::Fgsm ? 1 : config.steps;
  for (int k = 1; k <= steps && !zero_budget; ++k) {
    std::vector<IQSignal> current;
    current.reserve(count);
    for (std::size_t i = 0; i < count; ++i) current.push_back(advmod::apply(signals[i], delta[i]));
    const auto grads = model.loss_gradient(current, aim, objective);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& g = grads[i].grad;
      had_zero[i] = std::any_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
      auto& d = delta[i];
      if (config.kind == AttackKind::Fgsm) {
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = eps[i] * sign_of(g[j]);
        continue;
      }
      const double step = config.step_frac * eps[i];
      for (std::size_t j = 0; j < d.size(); ++j) {
        const double move = config.step_rule == StepRule::Sign ? sign_of(g[j]) : g[j];
        d[j] = std::clamp(d[j] + step * move, -eps[i], eps[i]);
      }
    }
    if (observer) observer(k, delta);
  }

  std::vector<IQSignal> perturbed;
  perturbed.reserve(count);
  for (std::size_t i = 0; i < count; ++i) perturbed.push_back(advmod::apply(signals[i], delta[i]));
  const auto preds = model.predict_batch(perturbed);

  std::vector<Perturbation> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Perturbation& p = out[i];
    p.delta = std::move(delta[i]);
    p.eps = eps[i];
    p.measured_spr_db = measure_spr_db(signals[i], p.delta);
    p.gradient_had_zero = had_zero[i];
    p.success = config.target ? preds[i].label() == *config.target : preds[i].label() != labels[i];
  }
  return out;
}

Perturbation fgsm(const Classifier& model, const IQSignal& x, int label, double spr_db, std::optional<int> target) {
  AttackConfig cfg;
  cfg.kind = AttackKind::Fgsm;
  cfg.spr_db = spr_db;
  cfg.target = target;
  return craft(model, std::span<const IQSignal>(&x, 1), std::span<const int>(&label, 1), cfg).front();
}

Perturbation pga(const Classifier& model, const IQSignal& x, int label, double spr_db, int steps, double step_frac,
                 std::optional<int> target) {
  AttackConfig cfg;
  cfg.kind = AttackKind::Pga;
  cfg.spr_db = spr_db;
  cfg.steps = steps;
  cfg.step_frac = step_frac;
  cfg.target = target;
  return craft(model, std::span<const IQSignal>(&x, 1), std::span<const int>(&label, 1), cfg).front();
}

Record perturbation_record(const Perturbation& p, std::uint16_t label, std::optional<double> snr_db) {
  Record r;
  r.label = label;
  r.snr_db = snr_db;
  r.samples.assign(p.delta.begin(), p.delta.end());
  return r;
}

}  // namespace advmod
