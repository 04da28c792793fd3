#include "run_config.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "advmod/error.hpp"

namespace advmod::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads keys from one JSON object and remembers which were consumed so the
// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, qualified(key));
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// dB values that may be +inf are written as the string "inf".
double db_value(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  throw ConfigError("config key '" + key + "' must be a number or \"inf\"");
}

ordered_json db_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

std::string step_rule_name(StepRule r) { return r == StepRule::Sign ? "sign" : "raw_gradient"; }

StepRule parse_step_rule(const std::string& s) {
  if (s == "sign") return StepRule::Sign;
  if (s == "raw_gradient") return StepRule::RawGradient;
  throw ConfigError("unknown step rule '" + s + "'");
}

PulseShape parse_pulse(Section s) {
  PulseShape p;
  const auto kind = s.get<std::string>("kind", "rrc");
  if (kind == "rect") {
    p = PulseShape::rect(s.get<int>("sps", 8));
  } else if (kind == "rrc") {
    p = PulseShape::rrc(s.get<int>("sps", 8), s.get<double>("rolloff", 0.35), s.get<int>("span", 8));
  } else {
    throw ConfigError("unknown pulse kind '" + kind + "'");
  }
  if (kind == "rect") {
    // Accept but ignore RRC-only keys so resolved configs round-trip.
    s.has("rolloff");
    s.has("span");
  }
  s.finish();
  p.validate();
  return p;
}

}  // namespace

std::vector<FrameworkKind> FrameworkSection::resolve() const {
  std::vector<FrameworkKind> out;
  for (const auto& k : kinds) {
    auto f = FrameworkKind::parse(k);
    if (f.kind == FrameworkKind::Kind::Security) {
      f.post_noise_snr_db = post_noise_snr_db;
      f.noise_relative_to_clean = noise_relative_to_clean;
    }
    f.validate();
    out.push_back(f);
  }
  return out;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override) {
  RunConfig c;
  Section root(j, "");
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  if (seed_override) c.seed = *seed_override;
  c.output = root.get<std::string>("output", c.output);

  {
    auto s = root.sub("dataset");
    c.dataset.path = s.opt<std::string>("path");
    auto& syn = c.dataset.synth;
    if (s.has("classes")) {
      syn.classes.clear();
      for (const auto& name : s.get<std::vector<std::string>>("classes", {})) syn.classes.push_back(ModScheme::parse(name));
    }
    syn.per_class = s.get<std::uint32_t>("per_class", syn.per_class);
    syn.n_samples = s.get<std::uint32_t>("n_samples", syn.n_samples);
    syn.pulse = parse_pulse(s.sub("pulse"));
    if (s.has("snr_db")) {
      const auto& v = s.raw("snr_db");
      if (!v.is_array()) throw ConfigError("config key 'dataset.snr_db' must be a list");
      syn.snr_db.clear();
      for (const auto& e : v) {
        if (e.is_null()) {
          syn.snr_db.push_back(std::nullopt);
        } else if (e.is_number()) {
          syn.snr_db.push_back(e.get<double>());
        } else {
          throw ConfigError("dataset.snr_db entries must be numbers or null (noiseless)");
        }
      }
    }
    syn.test_fraction = s.get<double>("test_fraction", syn.test_fraction);
    syn.val_fraction = s.get<double>("val_fraction", syn.val_fraction);
    syn.seed = s.get<std::uint64_t>("seed", c.seed);
    s.finish();
    syn.validate();
  }

  {
    auto s = root.sub("model");
    c.model.preset = parse_preset(s.get<std::string>("preset", preset_name(c.model.preset)));
    c.model.checkpoint = s.opt<std::string>("checkpoint");
    c.model.snr_db = s.opt<double>("snr_db");
    auto& h = c.model.hyper;
    h.epochs = s.get<int>("epochs", h.epochs);
    h.batch = s.get<std::size_t>("batch", h.batch);
    h.lr = s.get<double>("lr", h.lr);
    h.l2 = s.get<double>("l2", h.l2);
    h.hoc_iterations = s.get<int>("hoc_iterations", h.hoc_iterations);
    h.hoc_lr = s.get<double>("hoc_lr", h.hoc_lr);
    h.seed = s.get<std::uint64_t>("seed", c.seed);
    s.finish();
    if (h.epochs < 0) throw ConfigError("model.epochs must be non-negative");
    if (h.batch < 1) throw ConfigError("model.batch must be at least 1");
    if (!(h.lr > 0.0) || !(h.hoc_lr > 0.0)) throw ConfigError("learning rates must be positive");
  }

  if (root.has("attack")) {
    auto s = root.sub("attack");
    AttackSection a;
    a.config.kind = parse_attack_kind(s.get<std::string>("kind", attack_kind_name(a.config.kind)));
    if (s.has("spr_db")) a.config.spr_db = db_value(s.raw("spr_db"), "attack.spr_db");
    a.config.steps = s.get<int>("steps", a.config.steps);
    a.config.step_frac = s.get<double>("step_frac", a.config.step_frac);
    a.config.step_rule = parse_step_rule(s.get<std::string>("step_rule", step_rule_name(a.config.step_rule)));
    a.config.random_start_seed = s.opt<std::uint64_t>("random_start_seed");
    a.target = s.opt<std::string>("target");
    a.surrogate = s.opt<std::string>("surrogate");
    s.finish();
    a.config.validate();
    c.attack = a;
  }

  {
    auto s = root.sub("framework");
    c.framework.kinds = s.get<std::vector<std::string>>("kinds", c.framework.kinds);
    c.framework.post_noise_snr_db =
        s.has("post_noise_snr_db") ? db_value(s.raw("post_noise_snr_db"), "framework.post_noise_snr_db")
                                   : c.framework.post_noise_snr_db;
    c.framework.noise_relative_to_clean = s.get<bool>("noise_relative_to_clean", c.framework.noise_relative_to_clean);
    s.finish();
    if (c.framework.kinds.empty()) throw ConfigError("framework.kinds is empty");
    c.framework.resolve();
  }

  {
    auto s = root.sub("sweep");
    if (s.has("spr_db")) {
      const auto& v = s.raw("spr_db");
      if (!v.is_array()) throw ConfigError("config key 'sweep.spr_db' must be a list");
      c.spr_list.clear();
      for (const auto& e : v) c.spr_list.push_back(db_value(e, "sweep.spr_db"));
    }
    s.finish();
    if (c.spr_list.empty()) throw ConfigError("sweep.spr_db is empty");
  }

  {
    auto s = root.sub("eval");
    c.eval.split = s.get<std::string>("split", c.eval.split);
    c.eval.limit = s.opt<std::size_t>("limit");
    c.eval.seed = s.get<std::uint64_t>("seed", c.seed);
    s.finish();
    if (c.eval.split != "test" && c.eval.split != "validation" && c.eval.split != "train" && c.eval.split != "all") {
      throw ConfigError("eval.split must be test, validation, train or all");
    }
  }

  {
    auto s = root.sub("constellation");
    auto& k = c.constellation;
    k.source = s.get<std::string>("source", k.source);
    k.target = s.get<std::string>("target", k.target);
    if (s.has("spr_db")) k.spr_db = db_value(s.raw("spr_db"), "constellation.spr_db");
    k.snr_db = s.get<double>("snr_db", k.snr_db);
    k.kind = parse_attack_kind(s.get<std::string>("kind", attack_kind_name(k.kind)));
    k.steps = s.get<int>("steps", k.steps);
    k.step_frac = s.get<double>("step_frac", k.step_frac);
    k.signals = s.get<std::size_t>("signals", k.signals);
    k.diagrams = s.get<std::size_t>("diagrams", k.diagrams);
    s.finish();
    ModScheme::parse(k.source);
    ModScheme::parse(k.target);
    if (k.signals < 1) throw ConfigError("constellation.signals must be at least 1");
  }

  root.finish();
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["output"] = output;

  const auto& syn = dataset.synth;
  ordered_json d;
  d["path"] = dataset.path ? ordered_json(*dataset.path) : ordered_json(nullptr);
  if (dataset.path) {
    // Synthesis keys do not describe a dataset read from disk; only the
    // split parameters (used when it has no manifest) apply.
    d["test_fraction"] = syn.test_fraction;
    d["val_fraction"] = syn.val_fraction;
    d["seed"] = syn.seed;
    j["dataset"] = d;
  } else {
  std::vector<std::string> names;
  for (const auto& m : syn.classes) names.push_back(m.name());
  d["classes"] = names;
  d["per_class"] = syn.per_class;
  d["n_samples"] = syn.n_samples;
  d["pulse"] = {{"kind", syn.pulse.name()}, {"sps", syn.pulse.sps}, {"rolloff", syn.pulse.rolloff},
                {"span", syn.pulse.span}};
  ordered_json snrs = ordered_json::array();
  for (const auto& s : syn.snr_db) snrs.push_back(s ? ordered_json(*s) : ordered_json(nullptr));
  d["snr_db"] = snrs;
  d["test_fraction"] = syn.test_fraction;
  d["val_fraction"] = syn.val_fraction;
  d["seed"] = syn.seed;
  j["dataset"] = d;
  }

  const auto& h = model.hyper;
  ordered_json m;
  m["preset"] = preset_name(model.preset);
  m["checkpoint"] = model.checkpoint ? ordered_json(*model.checkpoint) : ordered_json(nullptr);
  m["snr_db"] = model.snr_db ? ordered_json(*model.snr_db) : ordered_json(nullptr);
  m["epochs"] = h.epochs;
  m["batch"] = h.batch;
  m["lr"] = h.lr;
  m["l2"] = h.l2;
  m["hoc_iterations"] = h.hoc_iterations;
  m["hoc_lr"] = h.hoc_lr;
  m["seed"] = h.seed;
  j["model"] = m;

  if (attack) {
    const auto& a = attack->config;
    ordered_json at;
    at["kind"] = attack_kind_name(a.kind);
    at["spr_db"] = db_json(a.spr_db);
    at["steps"] = a.steps;
    at["step_frac"] = a.step_frac;
    at["step_rule"] = step_rule_name(a.step_rule);
    at["random_start_seed"] = a.random_start_seed ? ordered_json(*a.random_start_seed) : ordered_json(nullptr);
    at["target"] = attack->target ? ordered_json(*attack->target) : ordered_json(nullptr);
    at["surrogate"] = attack->surrogate ? ordered_json(*attack->surrogate) : ordered_json(nullptr);
    j["attack"] = at;
  } else {
    j["attack"] = nullptr;
  }

  j["framework"] = {{"kinds", framework.kinds},
                    {"post_noise_snr_db", db_json(framework.post_noise_snr_db)},
                    {"noise_relative_to_clean", framework.noise_relative_to_clean}};

  ordered_json sprs = ordered_json::array();
  for (double v : spr_list) sprs.push_back(db_json(v));
  j["sweep"] = {{"spr_db", sprs}};

  j["eval"] = {{"split", eval.split},
               {"limit", eval.limit ? ordered_json(*eval.limit) : ordered_json(nullptr)},
               {"seed", eval.seed}};

  const auto& k = constellation;
  j["constellation"] = {{"source", k.source},     {"target", k.target},       {"spr_db", db_json(k.spr_db)},
                        {"snr_db", k.snr_db},     {"kind", attack_kind_name(k.kind)}, {"steps", k.steps},
                        {"step_frac", k.step_frac}, {"signals", k.signals}, {"diagrams", k.diagrams}};
  return j;
}

}  // namespace advmod::cli
