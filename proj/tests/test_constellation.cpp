#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "advmod/constellation.hpp"
#include "advmod/error.hpp"

using namespace advmod;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

IQSignal noisy_qpsk(std::uint64_t seed, int n_symbols = 128) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<int> idx(n_symbols);
  for (auto& i : idx) i = pick(rng);
  auto x = awgn(modulate(idx, ModScheme::qpsk(), PulseShape{}), 20.0, seed + 1);
  x.snr_db = 20.0;
  x.label = 1;
  return x;
}

}  // namespace

TEST_SUITE("constellation") {

TEST_CASE("Bayes direction examples") {
  const auto bpsk = ModScheme::bpsk();
  CHECK(std::abs(bayes_shift_direction({0.5, 0.0}, bpsk) - cplx(1.0, 0.0)) < 1e-15);
  CHECK(bayes_shift_direction({-1.0, 0.0}, bpsk) == cplx(0.0, 0.0));
  const cplx tie = bayes_shift_direction({0.0, 1.0}, bpsk);
  CHECK(std::abs(tie - cplx(-1.0, -1.0) / std::numbers::sqrt2) < 1e-15);
  for (double a : {0.3, 1.7, 2.9, -2.2}) {
    const cplx d = bayes_shift_direction(std::polar(0.6, a), ModScheme::qam16());
    CHECK(std::abs(d) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("alignment of parallel, antiparallel and isotropic displacements") {
  const auto pts = constellation_points(ModScheme::bpsk());
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.7);
  std::vector<cplx> orig, toward, away;
  for (int k = 0; k < 500; ++k) {
    const cplx s(g(rng), g(rng));
    const cplx d = bayes_shift_direction(s, pts);
    orig.push_back(s);
    toward.push_back(s + 0.05 * d);
    away.push_back(s - 0.05 * d);
  }
  CHECK(align_symbols(orig, toward, pts).score == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(align_symbols(orig, away, pts).score == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(align_symbols(orig, away, pts).positive == 0);

  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::vector<cplx> o(10000), p(10000);
  for (std::size_t k = 0; k < o.size(); ++k) {
    o[k] = {g(rng), g(rng)};
    p[k] = o[k] + std::polar(0.1, phase(rng));
  }
  CHECK(std::abs(align_symbols(o, p, pts).score) < 0.05);
}

TEST_CASE("sub-threshold and on-point symbols are excluded") {
  const auto pts = constellation_points(ModScheme::bpsk());
  const std::vector<cplx> o = {{-1.0, 0.0}, {0.5, 0.0}, {0.2, 0.0}};
  const std::vector<cplx> p = {{-0.9, 0.0}, {0.5 + 1e-12, 0.0}, {0.3, 0.0}};
  const auto a = align_symbols(o, p, pts);
  CHECK(a.qualifying == 1);
  CHECK(a.score == doctest::Approx(1.0));

  const auto none = align_symbols(o, o, pts);
  CHECK(none.empty());
  const std::vector<SignalAlignment> per = {none, a};
  const auto r = summarize(per);
  CHECK(r.scores.size() == 1);
  CHECK(r.empty_signals == 1);
  CHECK(summarize(std::span<const SignalAlignment>(&none, 1)).empty());
  CHECK_THROWS_AS(align_symbols(o, std::span<const cplx>(p.data(), 2), pts), ArgumentError);
}

TEST_CASE("alignment is invariant to global rotation and displacement scale") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.8);
  const auto pts = constellation_points(ModScheme::qam16());
  std::vector<cplx> o(400), p(400), p_scaled(400);
  for (std::size_t k = 0; k < o.size(); ++k) {
    o[k] = {g(rng), g(rng)};
    p[k] = o[k] + cplx(0.1 * g(rng), 0.1 * g(rng));
    p_scaled[k] = o[k] + 3.7 * (p[k] - o[k]);
  }
  const double base = align_symbols(o, p, pts).score;
  CHECK(align_symbols(o, p_scaled, pts).score == doctest::Approx(base).epsilon(1e-12));

  const cplx rot = std::polar(1.0, 0.83);
  std::vector<cplx> ro, rp, rpts;
  for (std::size_t k = 0; k < o.size(); ++k) {
    ro.push_back(o[k] * rot);
    rp.push_back(p[k] * rot);
  }
  for (auto z : pts) rpts.push_back(z * rot);
  CHECK(std::abs(align_symbols(ro, rp, rpts).score - base) < 1e-9);
}

TEST_CASE("symbol shift of a signal with itself has zero displacement") {
  const auto x = noisy_qpsk(3);
  const auto s = symbol_shift(x, x, PulseShape{});
  CHECK(s.size() == 128 - 2 * PulseShape{}.edge_symbols());
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(s.displacement(k) == cplx{});
  CHECK(alignment_score(x, x, ModScheme::bpsk(), PulseShape{}).empty());
}

TEST_CASE("oracle perturbation points toward the target states") {
  std::vector<IQSignal> clean, shifted;
  for (std::uint64_t s = 0; s < 24; ++s) {
    clean.push_back(noisy_qpsk(100 + s));
    shifted.push_back(oracle_targeted_shift(clean.back(), ModScheme::bpsk(), 20.0, 20.0, PulseShape{}));
  }
  const auto r = alignment_score(clean, shifted, ModScheme::bpsk(), PulseShape{});
  CHECK(r.mean >= 0.7);
  CHECK(r.positive_fraction > 0.5);
  for (double v : r.scores) CHECK((v >= -1.0 && v <= 1.0));

  const auto same = oracle_targeted_shift(clean[0], ModScheme::bpsk(), std::numeric_limits<double>::infinity(), 20.0,
                                          PulseShape{});
  CHECK(same.samples == clean[0].samples);

  // Already in the target class: only the budget applies.
  auto b = clean[1];
  const auto p = oracle_perturbation(b, ModScheme::qpsk(), 20.0, 20.0, PulseShape{});
  for (double d : p.delta) CHECK(std::abs(d) <= p.eps + 1e-7);

  CHECK_THROWS_AS(oracle_perturbation(b, ModScheme::psk8(), 20.0, 20.0, PulseShape{}), ConfigError);
}

TEST_CASE("constellation SVG") {
  std::vector<cplx> a(128), b(128);
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = std::polar(1.0, 0.1 * static_cast<double>(k));
    b[k] = a[k] * 1.1;
  }
  const auto pts = constellation_points(ModScheme::qam16());
  const auto svg = constellation_svg(a, b, pts, "QPSK -> BPSK");
  CHECK(count(svg, "<circle") == 128 + 128 + 16);
  CHECK(count(svg, "class=\"clean\"") == 128);
  CHECK(count(svg, "class=\"perturbed\"") == 128);
  CHECK(count(svg, "class=\"target\"") == 16);
  CHECK(svg.find("&gt;") != std::string::npos);

  const auto empty = constellation_svg({}, {}, {});
  CHECK(count(empty, "<circle") == 0);
  CHECK(count(empty, "class=\"axis\"") == 2);
  CHECK(empty.rfind("</svg>\n") == empty.size() - 7);

  const auto dir = std::filesystem::temp_directory_path() / "advmod_constellation_test";
  std::filesystem::create_directories(dir);
  write_constellation_svg(dir / "a.svg", a, b, pts);
  write_constellation_svg(dir / "b.svg", a, b, pts);
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  CHECK(slurp(dir / "a.svg") == constellation_svg(a, b, pts));
  // A regular file where a directory is expected.
  CHECK_THROWS_AS(write_constellation_svg(dir / "a.svg" / "x.svg", a, b, pts), IoError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
