#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advmod/attacks.hpp"
#include "advmod/classifiers.hpp"
#include "advmod/constellation.hpp"
#include "advmod/dataset.hpp"
#include "advmod/error.hpp"
#include "advmod/evaluation.hpp"
#include "advmod/io.hpp"
#include "advmod/parallel.hpp"
#include "advmod/svg.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace advmod;
using cli::RunConfig;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumerical = 4, kIncompatible = 5 };

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

struct Run {
  std::string command;
  RunConfig cfg;
  unsigned threads = 1;
  fs::path out;
  std::vector<std::string> log;  // the only place timestamps appear

  void note(const std::string& line) { log.push_back(timestamp() + " " + line); }

  void write(const std::string& name, std::string_view contents) {
    io::write_file_atomic(out / name, contents);
    note("wrote " + name);
  }
};

// ---- data and models -------------------------------------------------------

struct LoadedData {
  Dataset dataset;
  Split split;
};

LoadedData load_data(Run& run) {
  const auto& d = run.cfg.dataset;
  if (!d.path) {
    auto syn = d.synth;
    syn.threads = run.threads;
    auto g = gen_dataset(syn);
    run.note("synthesized " + std::to_string(g.dataset.size()) + " signals");
    return {std::move(g.dataset), std::move(g.manifest.split)};
  }
  LoadedData out{read_dataset(*d.path), {}};
  const auto side = manifest_path_for(*d.path);
  if (fs::exists(side)) {
    out.split = read_manifest(side).split;
  } else {
    out.split = make_split(out.dataset, d.synth.test_fraction, d.synth.val_fraction, d.synth.seed);
  }
  run.note("read " + std::to_string(out.dataset.size()) + " signals from " + *d.path);
  return out;
}

std::vector<IQSignal> select(const LoadedData& data, const std::string& which, std::optional<std::size_t> limit) {
  std::vector<std::size_t> idx;
  if (which == "test") {
    idx = data.split.test;
  } else if (which == "validation") {
    idx = data.split.validation;
  } else if (which == "train") {
    idx = data.split.train;
  } else {
    idx.resize(data.dataset.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  if (idx.empty()) throw ConfigError("the '" + which + "' split is empty");
  if (limit && *limit < idx.size()) {
    // Evenly strided so a class-major split stays stratified.
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < *limit; ++j) keep.push_back(idx[j * idx.size() / *limit]);
    idx = std::move(keep);
  }
  return data.dataset.signals(idx);
}

ModelArch arch_for(const RunConfig& cfg, const Dataset& ds) {
  std::optional<PulseShape> pulse;
  if (cfg.model.preset == Preset::HocLogReg || cfg.model.preset == Preset::MaxLikelihood) pulse = ds.header.pulse;
  return make_arch(cfg.model.preset, ds.header.n_samples, ds.header.class_names, pulse, cfg.model.snr_db);
}

void require_compatible(const ModelArch& arch, const Dataset& ds, const std::string& what) {
  if (arch.input_length != ds.header.n_samples) {
    throw IncompatibleError(what + " expects " + std::to_string(arch.input_length) + " samples, dataset has " +
                            std::to_string(ds.header.n_samples));
  }
  if (arch.class_names != ds.header.class_names) throw IncompatibleError(what + " and dataset disagree on classes");
}

std::unique_ptr<Classifier> load_model(Run& run, const Dataset& ds) {
  const auto& m = run.cfg.model;
  Checkpoint ckpt;
  if (m.checkpoint) {
    ckpt = load_checkpoint(*m.checkpoint);
    run.note("loaded " + preset_name(ckpt.arch.preset) + " from " + *m.checkpoint);
  } else if (m.preset == Preset::MaxLikelihood) {
    ckpt.arch = arch_for(run.cfg, ds);
  } else {
    throw ConfigError("model.checkpoint is required for '" + run.command + "' with preset " + preset_name(m.preset));
  }
  require_compatible(ckpt.arch, ds, "model");
  return make_classifier(ckpt);
}

std::unique_ptr<Classifier> load_surrogate(Run& run, const Dataset& ds) {
  if (!run.cfg.attack || !run.cfg.attack->surrogate) return nullptr;
  auto ckpt = load_checkpoint(*run.cfg.attack->surrogate);
  require_compatible(ckpt.arch, ds, "surrogate");
  run.note("crafting on surrogate " + preset_name(ckpt.arch.preset));
  return make_classifier(ckpt);
}

int class_index(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("class '" + name + "' is not in the dataset");
  return static_cast<int>(it - names.begin());
}

AttackConfig attack_config(const RunConfig& cfg, const Dataset& ds) {
  if (!cfg.attack) return AttackConfig{};
  auto a = cfg.attack->config;
  if (cfg.attack->target) a.target = class_index(ds.header.class_names, *cfg.attack->target);
  return a;
}

// ---- reports ---------------------------------------------------------------

std::string per_class_csv(const std::vector<ClassDrop>& drops) {
  std::string out = "class,natural_recall,attacked_recall,drop\n";
  for (const auto& d : drops) {
    out += d.name + "," + format_number(d.natural_recall) + "," + format_number(d.attacked_recall) + "," +
           format_number(d.drop) + "\n";
  }
  return out;
}

std::string condition_tag(const std::optional<double>& db) {
  if (!db) return "natural";
  return "spr" + format_number(*db);
}

std::string sweep_svg(const AccuracyTable& table) {
  svg::LinePlot plot;
  plot.title = "Accuracy under attack";
  plot.x_label = "SPR (dB)";
  plot.y_label = "Accuracy";
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : table) {
    if (r.condition_db && std::isfinite(*r.condition_db)) {
      lo = std::min(lo, *r.condition_db);
      hi = std::max(hi, *r.condition_db);
    }
  }
  if (!(lo <= hi)) lo = hi = 0.0;
  if (lo == hi) {
    lo -= 1.0;
    hi += 1.0;
  }
  plot.x_min = lo;
  plot.x_max = hi;
  std::optional<double> natural;
  for (const auto& r : table) {
    if (!r.condition_db) {
      if (!natural) natural = r.accuracy();
      continue;
    }
    if (!std::isfinite(*r.condition_db)) continue;
    auto it = std::find_if(plot.series.begin(), plot.series.end(),
                           [&](const svg::Series& s) { return s.label == r.framework; });
    if (it == plot.series.end()) {
      plot.series.push_back({r.framework, {}, {}});
      it = plot.series.end() - 1;
    }
    it->x.push_back(*r.condition_db);
    it->y.push_back(r.accuracy());
  }
  for (auto& s : plot.series) {
    std::vector<std::size_t> order(s.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    svg::Series sorted{s.label, {}, {}};
    for (auto i : order) {
      sorted.x.push_back(s.x[i]);
      sorted.y.push_back(s.y[i]);
    }
    s = std::move(sorted);
  }
  if (natural) plot.series.push_back({"natural", {lo, hi}, {*natural, *natural}});
  return svg::line_plot(plot);
}

// ---- commands --------------------------------------------------------------

void cmd_gen(Run& run) {
  auto syn = run.cfg.dataset.synth;
  syn.threads = run.threads;
  const auto g = gen_dataset(syn);
  run.write("dataset.crml", encode_dataset(g.dataset));
  run.write("dataset.crml.json", manifest_to_json(g.manifest).dump(2) + "\n");
  run.note(std::to_string(g.dataset.size()) + " signals");
}

void cmd_train(Run& run) {
  const auto data = load_data(run);
  const auto train_set = select(data, "train", std::nullopt);
  const auto val_set = data.split.validation.empty() ? std::vector<IQSignal>{} : select(data, "validation", std::nullopt);
  auto hyper = run.cfg.model.hyper;
  hyper.on_epoch = [&](const CurvePoint& p) {
    std::ostringstream ss;
    ss << "epoch " << p.epoch << " train_loss " << p.train_loss << " val_loss " << p.val_loss << " val_acc "
       << p.val_accuracy;
    run.note(ss.str());
  };
  const auto ckpt = train(arch_for(run.cfg, data.dataset), train_set, val_set, hyper);
  run.write("model.ckpt", encode_checkpoint(ckpt));

  std::string csv = "epoch,train_loss,val_loss,val_accuracy\n";
  svg::LinePlot plot;
  plot.title = "Training curve (" + preset_name(ckpt.arch.preset) + ")";
  plot.x_label = "Epoch";
  plot.y_label = "Loss";
  svg::Series tr{"train loss", {}, {}}, va{"validation loss", {}, {}};
  double ymax = 0.0;
  for (const auto& p : ckpt.meta.curve) {
    csv += std::to_string(p.epoch) + "," + format_number(p.train_loss) + "," + format_number(p.val_loss) + "," +
           format_number(p.val_accuracy) + "\n";
    tr.x.push_back(p.epoch);
    tr.y.push_back(p.train_loss);
    if (std::isfinite(p.train_loss)) ymax = std::max(ymax, p.train_loss);
    if (!val_set.empty()) {
      va.x.push_back(p.epoch);
      va.y.push_back(p.val_loss);
      if (std::isfinite(p.val_loss)) ymax = std::max(ymax, p.val_loss);
    }
  }
  run.write("training_curve.csv", csv);
  if (!ckpt.meta.curve.empty()) {
    plot.x_max = std::max(1, ckpt.meta.curve.back().epoch);
    plot.y_max = ymax > 0.0 ? ymax * 1.05 : 1.0;
    plot.series.push_back(std::move(tr));
    if (!va.x.empty()) plot.series.push_back(std::move(va));
    run.write("training_curve.svg", svg::line_plot(plot));
  }
}

void cmd_attack(Run& run) {
  const auto data = load_data(run);
  const auto signals = select(data, run.cfg.eval.split, run.cfg.eval.limit);
  const auto victim = load_model(run, data.dataset);
  const auto surrogate = load_surrogate(run, data.dataset);
  const auto cfg = attack_config(run.cfg, data.dataset);
  const auto perts = craft_parallel(surrogate ? *surrogate : *victim, signals, cfg, run.threads);

  Dataset out;
  out.header = data.dataset.header;
  std::string csv = "index,label,eps,measured_spr_db,success\n";
  for (std::size_t i = 0; i < signals.size(); ++i) {
    out.records.push_back(make_record(advmod::apply(signals[i], perts[i]), static_cast<std::uint16_t>(*signals[i].label)));
    out.records.back().snr_db = signals[i].snr_db;
    csv += std::to_string(i) + "," + std::to_string(*signals[i].label) + "," + format_number(perts[i].eps) + "," +
           format_number(perts[i].measured_spr_db) + "," + (perts[i].success ? "1" : "0") + "\n";
  }
  run.write("perturbed.crml", encode_dataset(out));

  // Every perturbed record is a test record.
  Manifest m;
  m.class_names = out.header.class_names;
  m.master_seed = run.cfg.dataset.synth.seed;
  m.pulse = out.header.pulse;
  m.n_samples = out.header.n_samples;
  for (std::size_t i = 0; i < out.size(); ++i) m.split.test.push_back(i);
  run.write("perturbed.crml.json", manifest_to_json(m).dump(2) + "\n");
  run.write("perturbations.csv", csv);
  run.note("attack " + cfg.describe() + " on " + std::to_string(signals.size()) + " signals");
}

void cmd_eval(Run& run) {
  const auto data = load_data(run);
  const auto signals = select(data, run.cfg.eval.split, run.cfg.eval.limit);
  const auto victim = load_model(run, data.dataset);
  const auto seed = run.cfg.eval.seed;

  auto natural = evaluate_perturbed(*victim, signals, nullptr, FrameworkKind::robustness(), seed, run.threads);
  natural.row.framework = "natural";
  AccuracyTable table = {natural.row};
  run.write("confusion_natural.csv", confusion_csv(natural.confusion));

  if (run.cfg.attack) {
    const auto surrogate = load_surrogate(run, data.dataset);
    const auto cfg = attack_config(run.cfg, data.dataset);
    const auto perts = craft_parallel(surrogate ? *surrogate : *victim, signals, cfg, run.threads);
    for (const auto& fw : run.cfg.framework.resolve()) {
      const auto r = evaluate_perturbed(*victim, signals, &perts, fw, seed, run.threads, cfg.describe(), cfg.spr_db);
      table.push_back(r.row);
      const auto tag = fw.name() + "_" + condition_tag(cfg.spr_db);
      run.write("confusion_" + tag + ".csv", confusion_csv(r.confusion));
      run.write("per_class_" + tag + ".csv", per_class_csv(per_class_robustness(natural.confusion, r.confusion)));
    }
  }
  run.write("accuracy.csv", accuracy_csv(table));
}

void cmd_sweep(Run& run) {
  const auto data = load_data(run);
  const auto signals = select(data, run.cfg.eval.split, run.cfg.eval.limit);
  const auto victim = load_model(run, data.dataset);
  const auto surrogate = load_surrogate(run, data.dataset);
  EvalOptions opt;
  opt.attacker = surrogate.get();
  opt.threads = run.threads;
  const auto fws = run.cfg.framework.resolve();
  const auto sweep =
      sweep_spr(*victim, signals, attack_config(run.cfg, data.dataset), run.cfg.spr_list, fws, run.cfg.eval.seed, opt);
  run.write("accuracy.csv", accuracy_csv(sweep.table));
  run.write("accuracy.svg", sweep_svg(sweep.table));
  for (std::size_t r = 0; r < sweep.table.size(); ++r) {
    const auto& row = sweep.table[r];
    if (!row.condition_db) continue;
    run.write("confusion_" + row.framework + "_" + condition_tag(row.condition_db) + ".csv",
              confusion_csv(sweep.results[r].confusion));
  }
  run.write("snr_accuracy.csv", accuracy_csv(sweep_snr(*victim, signals, run.threads)));
}

void cmd_constellation(Run& run) {
  const auto& k = run.cfg.constellation;
  const auto data = load_data(run);
  const auto& names = data.dataset.header.class_names;
  const int source = class_index(names, k.source);
  const int target = class_index(names, k.target);
  const auto victim = load_model(run, data.dataset);
  const auto surrogate = load_surrogate(run, data.dataset);
  const auto& pulse = data.dataset.header.pulse;

  std::vector<IQSignal> clean;
  for (auto& s : select(data, run.cfg.eval.split, std::nullopt)) {
    if (s.label == source) clean.push_back(std::move(s));
  }
  if (clean.empty()) throw ConfigError("no " + k.source + " signals in the '" + run.cfg.eval.split + "' split");
  if (clean.size() > k.signals) {
    std::vector<IQSignal> keep;
    for (std::size_t j = 0; j < k.signals; ++j) keep.push_back(clean[j * clean.size() / k.signals]);
    clean = std::move(keep);
  }

  AttackConfig cfg;
  cfg.kind = k.kind;
  cfg.spr_db = k.spr_db;
  cfg.steps = k.steps;
  cfg.step_frac = k.step_frac;
  cfg.target = target;
  const auto perts = craft_parallel(surrogate ? *surrogate : *victim, clean, cfg, run.threads);

  OracleOptions oo;
  oo.classes.clear();
  for (const auto& n : names) oo.classes.push_back(ModScheme::parse(n));
  oo.kind = k.kind;
  oo.steps = k.steps;
  oo.step_frac = k.step_frac;
  const auto target_scheme = ModScheme::parse(k.target);
  std::vector<IQSignal> model_shift(clean.size()), oracle_shift(clean.size());
  std::vector<SignalAlignment> model_align(clean.size()), oracle_align(clean.size());
  parallel_for(clean.size(), run.threads, [&](std::size_t i) {
    model_shift[i] = advmod::apply(clean[i], perts[i]);
    oracle_shift[i] = oracle_targeted_shift(clean[i], target_scheme, k.spr_db, k.snr_db, pulse, oo);
    model_align[i] = alignment_score(clean[i], model_shift[i], target_scheme, pulse);
    oracle_align[i] = alignment_score(clean[i], oracle_shift[i], target_scheme, pulse);
  });

  const auto score = [](const SignalAlignment& a) {
    return a.empty() ? std::string("nan") : format_number(a.score);
  };
  std::string csv = "signal,model_score,model_symbols,oracle_score,oracle_symbols\n";
  for (std::size_t i = 0; i < clean.size(); ++i) {
    csv += std::to_string(i) + "," + score(model_align[i]) + "," + std::to_string(model_align[i].qualifying) + "," +
           score(oracle_align[i]) + "," + std::to_string(oracle_align[i].qualifying) + "\n";
  }
  run.write("alignment.csv", csv);

  const std::string model_name = preset_name((surrogate ? *surrogate : *victim).arch().preset);
  std::string summary = "source,attack,mean,stddev,positive_fraction,signals,empty_signals\n";
  for (const auto& [name, per] : {std::pair{model_name, &model_align}, std::pair{std::string("oracle"), &oracle_align}}) {
    const auto r = summarize(*per);
    summary += name + "," + cfg.describe() + "," + format_number(r.mean) + "," + format_number(r.stddev) + "," +
               format_number(r.positive_fraction) + "," + std::to_string(r.signals) + "," +
               std::to_string(r.empty_signals) + "\n";
  }
  run.write("alignment_summary.csv", summary);

  const auto pts = constellation_points(target_scheme);
  for (std::size_t i = 0; i < std::min(k.diagrams, clean.size()); ++i) {
    const auto m = symbol_shift(clean[i], model_shift[i], pulse);
    const auto o = symbol_shift(clean[i], oracle_shift[i], pulse);
    run.write("constellation_" + std::to_string(i) + "_" + model_name + ".svg",
              constellation_svg(m.original, m.perturbed, pts, k.source + " to " + k.target + ", " + model_name));
    run.write("constellation_" + std::to_string(i) + "_oracle.svg",
              constellation_svg(o.original, o.perturbed, pts, k.source + " to " + k.target + ", oracle"));
  }
}

// ---- driver ----------------------------------------------------------------

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return kConfig;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const IncompatibleError*>(&e) || dynamic_cast<const UnsupportedAttackError*>(&e)) {
    return kIncompatible;
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kConfig;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  return kFailure;
}

unsigned default_threads() {
  if (const char* env = std::getenv("ADVMOD_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("ADVMOD_THREADS must be a positive integer");
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial modulation-classification toolkit"};
  app.set_version_flag("--version", std::string(ADVMOD_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (overrides 'output')");
  app.add_option("--seed", seed, "Master seed (overrides 'seed')");
  app.add_option("--threads", threads, "Worker threads (default: ADVMOD_THREADS or 1)")->check(CLI::PositiveNumber);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "Synthesize a labelled dataset"},
      {"train", "Train a classifier preset"},
      {"attack", "Craft perturbations and write the perturbed dataset"},
      {"eval", "Natural and attacked accuracy with confusion matrices"},
      {"sweep", "Accuracy across SPR budgets and frameworks"},
      {"constellation", "Targeted-attack alignment with the Bayes-optimal shift"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "advmod: " << e.what() << "\n";
    return kConfig;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  try {
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
      try {
        j = nlohmann::json::parse(io::read_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
    }
    run.cfg = RunConfig::from_json(j, seed);
    if (!out_dir.empty()) run.cfg.output = out_dir;
    run.threads = threads ? *threads : default_threads();
    run.out = run.cfg.output;

    // Nothing touches the output directory until the config has validated.
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec) throw IoError("cannot create " + run.out.string() + ": " + ec.message());
    run.note("advmod " + std::string(ADVMOD_VERSION) + " " + run.command + " threads=" + std::to_string(run.threads));

    auto resolved = nlohmann::ordered_json::object();
    resolved["command"] = run.command;
    resolved["advmod_version"] = ADVMOD_VERSION;
    resolved["config"] = run.cfg.to_json();
    run.write("config.resolved.json", resolved.dump(2) + "\n");

    if (run.command == "gen") cmd_gen(run);
    if (run.command == "train") cmd_train(run);
    if (run.command == "attack") cmd_attack(run);
    if (run.command == "eval") cmd_eval(run);
    if (run.command == "sweep") cmd_sweep(run);
    if (run.command == "constellation") cmd_constellation(run);

    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream ss;
    ss << "done in " << std::fixed << std::setprecision(1) << secs << " s";
    run.note(ss.str());
    std::string log;
    for (const auto& l : run.log) log += l + "\n";
    io::write_file_atomic(run.out / "run.log", log);
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "advmod " << run.command << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}
