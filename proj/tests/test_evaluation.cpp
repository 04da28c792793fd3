#include <doctest.h>

#include <cmath>
#include <limits>

#include "advmod/error.hpp"
#include "advmod/evaluation.hpp"
#include "trained_fixture.hpp"

using namespace advmod;
using testing::kFour;
using testing::trained_cnn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConfusionMatrix from_rows(const std::vector<std::vector<int>>& counts) {
  ConfusionMatrix cm(kFour);
  for (std::size_t t = 0; t < counts.size(); ++t)
    for (std::size_t p = 0; p < counts[t].size(); ++p)
      for (int k = 0; k < counts[t][p]; ++k) cm.add(static_cast<int>(t), static_cast<int>(p));
  return cm;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("confusion matrix arithmetic") {
  const auto cm = from_rows({{5, 0, 0, 0}, {1, 4, 0, 0}, {0, 0, 2, 3}, {0, 0, 0, 0}});
  CHECK(cm.total() == 15);
  CHECK(cm.correct() == 11);
  CHECK(cm.accuracy() == doctest::Approx(11.0 / 15.0));
  CHECK(cm.row_sum(1) == 5);
  CHECK(cm.recall(2) == doctest::Approx(0.4));
  CHECK(cm.recall(3) == 0.0);
  ConfusionMatrix m(kFour);
  CHECK_THROWS_AS(m.add(4, 0), ArgumentError);
  CHECK_THROWS_AS(m.add(0, -1), ArgumentError);
}

TEST_CASE("per-class robustness") {
  const auto natural = from_rows({{10, 0, 0, 0}, {0, 8, 2, 0}, {0, 0, 10, 0}, {0, 0, 1, 9}});
  for (const auto& d : per_class_robustness(natural, natural)) CHECK(d.drop == 0.0);

  const auto attacked = from_rows({{10, 0, 0, 0}, {0, 0, 10, 0}, {0, 0, 7, 3}, {0, 0, 1, 9}});
  const auto drops = per_class_robustness(natural, attacked);
  REQUIRE(drops.size() == 4);
  CHECK(drops[0].name == "QPSK");
  CHECK(drops[0].drop == doctest::Approx(drops[0].natural_recall));
  CHECK(drops[0].drop == doctest::Approx(0.8));
  CHECK(drops[1].name == "16QAM");
  CHECK(drops[1].drop == doctest::Approx(0.3));
  // Ties keep class order.
  CHECK(drops[2].name == "BPSK");
  CHECK(drops[3].name == "64QAM");

  ConfusionMatrix other({"a", "b"});
  CHECK_THROWS_AS(per_class_robustness(natural, other), IncompatibleError);
}

TEST_CASE("CSV formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.525) == "0.525");
  CHECK(format_number(kInf) == "inf");
  CHECK(format_number(-kInf) == "-inf");
  CHECK(format_number(2.0 / 3.0) == "0.6666666666666666");

  AccuracyTable t;
  t.push_back({"robustness", "none", std::nullopt, 3, 4});
  t.push_back({"security", "pga-k20-b0.125", 20.0, 1, 4});
  CHECK(accuracy_csv(t) ==
        "framework,attack,condition_db,accuracy,n\n"
        "robustness,none,natural,0.75,4\n"
        "security,pga-k20-b0.125,20,0.25,4\n");

  const auto cm = from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 2}, {0, 0, 0, 1}});
  CHECK(confusion_csv(cm) ==
        "true\\predicted,BPSK,QPSK,16QAM,64QAM\n"
        "BPSK,1,0,0,0\n"
        "QPSK,0,1,0,0\n"
        "16QAM,0,0,0,2\n"
        "64QAM,0,0,0,1\n");
}

TEST_CASE("natural condition is plain accuracy under either framework") {
  const auto& fx = trained_cnn();
  const double plain = accuracy(*fx.model, fx.batch);
  for (const auto& fw : {FrameworkKind::robustness(), FrameworkKind::security()}) {
    const auto r = eval_framework(*fx.model, fx.batch, std::nullopt, fw, 3);
    CHECK(r.row.accuracy() == plain);
    CHECK_FALSE(r.row.condition_db.has_value());
    CHECK(r.row.attack == "none");
    for (std::size_t c = 0; c < 4; ++c) CHECK(r.confusion.row_sum(c) == 50);
    CHECK(r.row.accuracy() == r.confusion.accuracy());
  }
}

TEST_CASE("a zero budget reproduces natural accuracy exactly") {
  const auto& fx = trained_cnn();
  AttackConfig cfg;
  cfg.spr_db = kInf;
  const auto r = eval_framework(*fx.model, fx.batch, cfg, FrameworkKind::robustness(), 3);
  const auto n = eval_framework(*fx.model, fx.batch, std::nullopt, FrameworkKind::robustness(), 3);
  CHECK(r.predictions == n.predictions);
}

TEST_CASE("security with noiseless post-noise equals robustness bit-exactly") {
  const auto& fx = trained_cnn();
  const std::span<const IQSignal> few(fx.batch.data(), 64);
  AttackConfig cfg;
  cfg.kind = AttackKind::Fgsm;
  const auto perts = craft_parallel(*fx.model, few, cfg, 1);
  const auto rob = evaluate_perturbed(*fx.model, few, &perts, FrameworkKind::robustness(), 5, 1);
  const auto sec = evaluate_perturbed(*fx.model, few, &perts, FrameworkKind::security(kInf), 5, 1);
  CHECK(rob.predictions == sec.predictions);

  // Post-noise is seeded per signal, so thread count and reruns do not matter.
  const auto a = evaluate_perturbed(*fx.model, few, &perts, FrameworkKind::security(), 5, 1);
  const auto b = evaluate_perturbed(*fx.model, few, &perts, FrameworkKind::security(), 5, 3);
  CHECK(a.predictions == b.predictions);
  CHECK(craft_parallel(*fx.model, few, cfg, 3)[40].delta == perts[40].delta);

  const std::vector<Perturbation> short_list(3);
  CHECK_THROWS_AS(evaluate_perturbed(*fx.model, few, &short_list, FrameworkKind::robustness(), 5, 1),
                  ArgumentError);
  CHECK_THROWS_AS(FrameworkKind::parse("privacy"), ConfigError);
  CHECK(FrameworkKind::parse("security").post_noise_snr_db == 20.0);
}

TEST_CASE("SNR sweep groups by SNR") {
  const auto& fx = trained_cnn();
  SynthesisConfig cfg;
  cfg.per_class = 100;
  cfg.seed = 41;
  cfg.snr_db = {-20.0, 20.0};
  const auto ds = gen_dataset(cfg).dataset;
  std::vector<IQSignal> s;
  for (std::size_t i = 0; i < ds.size(); ++i) s.push_back(ds.signal(i));
  const auto table = sweep_snr(*fx.model, s);
  REQUIRE(table.size() == 2);
  CHECK(*table[0].condition_db == -20.0);
  CHECK(*table[1].condition_db == 20.0);
  CHECK(table[0].accuracy() <= table[1].accuracy());
  CHECK(table[0].accuracy() >= 0.25 - 0.1);
  CHECK(table[0].accuracy() <= 0.25 + 0.15);

  // Duplicate SNRs from two sources merge into one row.
  std::vector<IQSignal> twice(fx.batch.begin(), fx.batch.begin() + 10);
  twice.insert(twice.end(), fx.batch.begin() + 100, fx.batch.begin() + 110);
  const auto merged = sweep_snr(*fx.model, twice);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].n == 20);
  CHECK(merged[0].framework == "natural");

  IQSignal clean = fx.batch[0];
  clean.snr_db.reset();
  const auto noiseless = sweep_snr(*fx.model, std::span<const IQSignal>(&clean, 1));
  CHECK(std::isinf(*noiseless[0].condition_db));
  CHECK_THROWS_AS(sweep_snr(*fx.model, std::span<const IQSignal>()), ArgumentError);
}

TEST_CASE("SPR sweep: natural row, monotone accuracy, FGSM weaker than PGA") {
  const auto& fx = trained_cnn();
  const std::vector<double> sprs = {30.0, 25.0, 20.0, 15.0, 10.0};
  const std::vector<FrameworkKind> fws = {FrameworkKind::robustness(), FrameworkKind::security()};
  const auto sweep = sweep_spr(*fx.model, fx.batch, AttackConfig{}, sprs, fws, 9);
  REQUIRE(sweep.table.size() == 12);
  const auto natural = eval_framework(*fx.model, fx.batch, std::nullopt, FrameworkKind::robustness(), 9);
  CHECK(sweep.table[0].accuracy() == natural.row.accuracy());
  CHECK(sweep.table[6].accuracy() == natural.row.accuracy());
  CHECK(sweep.table[6].framework == "security");
  for (std::size_t s = 1; s < sprs.size(); ++s) {
    CAPTURE(sprs[s]);
    CHECK(sweep.table[1 + s].accuracy() <= sweep.table[s].accuracy() + 0.03);
  }

  AttackConfig f;
  f.kind = AttackKind::Fgsm;
  f.spr_db = 20.0;
  const auto fg = eval_framework(*fx.model, fx.batch, f, FrameworkKind::robustness(), 9);
  CHECK(fg.row.accuracy() >= sweep.table[3].accuracy());
  CHECK(fg.row.attack == "fgsm");

  // Classes do not degrade evenly.
  const auto drops = per_class_robustness(natural.confusion, sweep.results[3].confusion);
  CHECK(drops.front().drop - drops.back().drop > 0.05);

  CHECK_THROWS_AS(sweep_spr(*fx.model, fx.batch, AttackConfig{}, {}, fws, 9), ConfigError);
}

}  // TEST_SUITE
