#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advmod/attacks.hpp"
#include "advmod/classifiers.hpp"
#include "advmod/dataset.hpp"
#include "advmod/evaluation.hpp"

namespace advmod::cli {

struct DatasetSection {
  std::optional<std::string> path;  // read instead of synthesizing
  SynthesisConfig synth;
};

struct ModelSection {
  Preset preset = Preset::CnnSmall;
  std::optional<std::string> checkpoint;
  std::optional<double> snr_db;  // max_likelihood; signal metadata otherwise
  TrainHyper hyper;
};

struct AttackSection {
  AttackConfig config;
  std::optional<std::string> target;     // class name
  std::optional<std::string> surrogate;  // checkpoint crafted on instead of the victim
};

struct FrameworkSection {
  std::vector<std::string> kinds = {"robustness", "security"};
  double post_noise_snr_db = 20.0;
  bool noise_relative_to_clean = false;

  std::vector<FrameworkKind> resolve() const;
};

struct EvalSection {
  std::string split = "test";  // test | validation | train | all
  std::optional<std::size_t> limit;
  std::uint64_t seed = 1;
};

struct ConstellationSection {
  std::string source = "QPSK";
  std::string target = "BPSK";
  double spr_db = 20.0;
  double snr_db = 20.0;
  AttackKind kind = AttackKind::Fgsm;
  int steps = 20;
  double step_frac = 0.125;
  std::size_t signals = 200;
  std::size_t diagrams = 3;
};

/// Everything a run needs with defaults expanded. Unknown keys anywhere in
/// the input are a ConfigError.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output = "advmod-out";
  DatasetSection dataset;
  ModelSection model;
  std::optional<AttackSection> attack;  // absent: natural evaluation only
  FrameworkSection framework;
  std::vector<double> spr_list = {25.0, 20.0, 15.0};
  EvalSection eval;
  ConstellationSection constellation;

  /// Section seeds default to `seed` (after any --seed override).
  static RunConfig from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
  nlohmann::ordered_json to_json() const;
};

}  // namespace advmod::cli
