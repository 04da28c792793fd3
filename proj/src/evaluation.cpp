#include "advmod/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "advmod/error.hpp"
#include "advmod/parallel.hpp"
#include "advmod/rng.hpp"

namespace advmod {

namespace {

constexpr std::size_t kChunk = 32;

std::vector<int> labels_of(std::span<const IQSignal> signals) {
  std::vector<int> out(signals.size());
  for (std::size_t i = 0; i < signals.size(); ++i) {
    if (!signals[i].label) throw ArgumentError("evaluation requires labelled signals");
    out[i] = *signals[i].label;
  }
  return out;
}

std::vector<int> predict_parallel(const Classifier& model, std::span<const IQSignal> signals, unsigned threads) {
  std::vector<int> out(signals.size());
  const std::size_t chunks = (signals.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const auto part = signals.subspan(lo, std::min(kChunk, signals.size() - lo));
    const auto preds = model.predict_batch(part);
    for (std::size_t i = 0; i < part.size(); ++i) out[lo + i] = preds[i].label();
  });
  return out;
}

}  // namespace

std::string FrameworkKind::name() const { return kind == Kind::Robustness ? "robustness" : "security"; }

FrameworkKind FrameworkKind::parse(std::string_view name) {
  if (name == "robustness") return robustness();
  if (name == "security") return security();
  throw ConfigError("unknown framework '" + std::string(name) + "'");
}

void FrameworkKind::validate() const {
  if (kind == Kind::Security && (std::isnan(post_noise_snr_db) || post_noise_snr_db == -std::numeric_limits<double>::infinity())) {
    throw ConfigError("security framework needs a post-noise SNR");
  }
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size(), std::vector<std::size_t>(names_.size(), 0)) {}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto c = static_cast<int>(names_.size());
  if (truth < 0 || truth >= c || predicted < 0 || predicted >= c) {
    throw ArgumentError("confusion matrix index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (auto v : counts_[truth]) s += v;
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < names_.size(); ++t) s += row_sum(t);
  return s;
}

std::size_t ConfusionMatrix::correct() const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < names_.size(); ++t) s += counts_[t][t];
  return s;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

double ConfusionMatrix::recall(std::size_t truth) const {
  const auto n = row_sum(truth);
  return n == 0 ? 0.0 : static_cast<double>(counts_[truth][truth]) / static_cast<double>(n);
}

std::vector<Perturbation> craft_parallel(const Classifier& attacker, std::span<const IQSignal> signals,
                                         const AttackConfig& config, unsigned threads) {
  config.validate();
  const auto labels = labels_of(signals);
  std::vector<Perturbation> out(signals.size());
  const std::size_t chunks = (signals.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t len = std::min(kChunk, signals.size() - lo);
    auto part = craft(attacker, signals.subspan(lo, len), std::span<const int>(labels).subspan(lo, len), config);
    for (std::size_t i = 0; i < len; ++i) out[lo + i] = std::move(part[i]);
  });
  return out;
}

FrameworkResult evaluate_perturbed(const Classifier& victim, std::span<const IQSignal> signals,
                                   const std::vector<Perturbation>* perturbations, const FrameworkKind& framework,
                                   std::uint64_t seed, unsigned threads, std::string attack_name,
                                   std::optional<double> condition_db) {
  framework.validate();
  const auto labels = labels_of(signals);
  if (perturbations && perturbations->size() != signals.size()) {
    throw ArgumentError("one perturbation per signal required");
  }

  std::vector<IQSignal> inputs;
  std::span<const IQSignal> to_classify = signals;
  if (perturbations) {
    inputs.resize(signals.size());
    parallel_for(signals.size(), threads, [&](std::size_t i) {
      IQSignal x = advmod::apply(signals[i], (*perturbations)[i]);
      if (framework.kind == FrameworkKind::Kind::Security) {
        std::optional<double> ref;
        if (framework.noise_relative_to_clean) ref = measure_power(signals[i]);
        IQSignal noisy = awgn(x, framework.post_noise_snr_db, derive_seed(seed, i), ref);
        noisy.snr_db = x.snr_db;  // the classifier keeps the nominal channel SNR
        x = std::move(noisy);
      }
      inputs[i] = std::move(x);
    });
    to_classify = inputs;
  }

  FrameworkResult res;
  res.predictions = predict_parallel(victim, to_classify, threads);
  res.confusion = ConfusionMatrix(victim.arch().class_names);
  for (std::size_t i = 0; i < signals.size(); ++i) res.confusion.add(labels[i], res.predictions[i]);
  res.row.framework = framework.name();
  res.row.attack = perturbations ? std::move(attack_name) : "none";
  res.row.condition_db = perturbations ? condition_db : std::nullopt;
  res.row.correct = res.confusion.correct();
  res.row.n = res.confusion.total();
  return res;
}

FrameworkResult eval_framework(const Classifier& victim, std::span<const IQSignal> signals,
                               const std::optional<AttackConfig>& attack, const FrameworkKind& framework,
                               std::uint64_t seed, const EvalOptions& options) {
  if (!attack) return evaluate_perturbed(victim, signals, nullptr, framework, seed, options.threads);
  const Classifier& attacker = options.attacker ? *options.attacker : victim;
  const auto perts = craft_parallel(attacker, signals, *attack, options.threads);
  return evaluate_perturbed(victim, signals, &perts, framework, seed, options.threads, attack->describe(),
                            attack->spr_db);
}

AccuracyTable sweep_snr(const Classifier& model, std::span<const IQSignal> signals, unsigned threads) {
  if (signals.empty()) throw ArgumentError("SNR sweep over an empty set");
  const auto labels = labels_of(signals);
  const auto preds = predict_parallel(model, signals, threads);
  std::map<double, AccuracyRow> groups;
  for (std::size_t i = 0; i < signals.size(); ++i) {
    const double snr = signals[i].snr_db.value_or(std::numeric_limits<double>::infinity());
    if (std::isnan(snr)) throw ArgumentError("signal SNR is not a number");
    auto& row = groups[snr];
    row.framework = "natural";
    row.attack = "none";
    row.condition_db = snr;
    row.correct += preds[i] == labels[i] ? 1 : 0;
    ++row.n;
  }
  AccuracyTable out;
  for (auto& [snr, row] : groups) out.push_back(std::move(row));
  return out;
}

SprSweep sweep_spr(const Classifier& victim, std::span<const IQSignal> signals, const AttackConfig& attack,
                   std::span<const double> spr_list, std::span<const FrameworkKind> frameworks, std::uint64_t seed,
                   const EvalOptions& options) {
  if (spr_list.empty()) throw ConfigError("SPR sweep needs at least one SPR");
  if (frameworks.empty()) throw ConfigError("SPR sweep needs at least one framework");
  const Classifier& attacker = options.attacker ? *options.attacker : victim;

  std::vector<std::vector<Perturbation>> perts;
  for (double spr : spr_list) {
    AttackConfig cfg = attack;
    cfg.spr_db = spr;
    perts.push_back(craft_parallel(attacker, signals, cfg, options.threads));
  }

  const auto natural = evaluate_perturbed(victim, signals, nullptr, frameworks.front(), seed, options.threads);
  SprSweep out;
  for (const auto& fw : frameworks) {
    FrameworkResult nat = natural;
    nat.row.framework = fw.name();
    out.table.push_back(nat.row);
    out.results.push_back(std::move(nat));
    for (std::size_t s = 0; s < spr_list.size(); ++s) {
      auto r = evaluate_perturbed(victim, signals, &perts[s], fw, seed, options.threads, attack.describe(),
                                  spr_list[s]);
      out.table.push_back(r.row);
      out.results.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ClassDrop> per_class_robustness(const ConfusionMatrix& natural, const ConfusionMatrix& attacked) {
  if (natural.class_names() != attacked.class_names()) {
    throw IncompatibleError("confusion matrices cover different classes");
  }
  std::vector<ClassDrop> out;
  for (std::size_t c = 0; c < natural.num_classes(); ++c) {
    ClassDrop d;
    d.index = c;
    d.name = natural.class_names()[c];
    d.natural_recall = natural.recall(c);
    d.attacked_recall = attacked.recall(c);
    d.drop = d.natural_recall - d.attacked_recall;
    out.push_back(std::move(d));
  }
  std::stable_sort(out.begin(), out.end(), [](const ClassDrop& a, const ClassDrop& b) { return a.drop > b.drop; });
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string accuracy_csv(const AccuracyTable& table) {
  std::string out = "framework,attack,condition_db,accuracy,n\n";
  for (const auto& r : table) {
    out += r.framework + "," + r.attack + "," + (r.condition_db ? format_number(*r.condition_db) : "natural") + "," +
           format_number(r.accuracy()) + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\predicted";
  for (const auto& n : cm.class_names()) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    out += cm.class_names()[t];
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out += "," + std::to_string(cm.count(t, p));
    out += "\n";
  }
  return out;
}

}  // namespace advmod
