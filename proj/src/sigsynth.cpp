#include "advmod/sigsynth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "advmod/error.hpp"

namespace advmod {

namespace {

unsigned gray_decode(unsigned g) {
  unsigned k = g;
  while (g >>= 1) k ^= g;
  return k;
}

bool is_power_of_two(int m) { return m > 0 && (m & (m - 1)) == 0; }

int log2_int(int m) {
  int b = 0;
  while ((1 << b) < m) ++b;
  return b;
}

void normalize_power(std::vector<cplx>& points) {
  double p = 0.0;
  for (const auto& z : points) p += std::norm(z);
  const double g = 1.0 / std::sqrt(p / static_cast<double>(points.size()));
  for (auto& z : points) z *= g;
}

bool scheme_supported(const ModScheme& s) {
  switch (s.kind) {
    case ModScheme::Kind::PSK: return s.order == 2 || s.order == 4 || s.order == 8;
    case ModScheme::Kind::QAM: return s.order == 16 || s.order == 64 || s.order == 256;
    case ModScheme::Kind::ASK: return s.order == 4 || s.order == 8;
    case ModScheme::Kind::OOK: return s.order == 2;
  }
  return false;
}

}  // namespace

std::string ModScheme::name() const {
  switch (kind) {
    case Kind::PSK:
      if (order == 2) return "BPSK";
      if (order == 4) return "QPSK";
      return std::to_string(order) + "PSK";
    case Kind::QAM: return std::to_string(order) + "QAM";
    case Kind::ASK: return std::to_string(order) + "ASK";
    case Kind::OOK: return "OOK";
  }
  return "?";
}

ModScheme ModScheme::parse(std::string_view name) {
  for (const auto& s : supported_schemes()) {
    if (s.name() == name) return s;
  }
  throw ConfigError("unknown modulation scheme '" + std::string(name) + "'");
}

std::vector<ModScheme> supported_schemes() {
  return {ModScheme::bpsk(),   ModScheme::qpsk(), ModScheme::psk8(),
          ModScheme::qam16(),  ModScheme::qam64(), ModScheme::qam256(),
          ModScheme::ask4(),   ModScheme::ask8(), ModScheme::ook()};
}

std::vector<ModScheme> benchmark_schemes() {
  return {ModScheme::bpsk(), ModScheme::qpsk(), ModScheme::qam16(), ModScheme::qam64()};
}

std::vector<cplx> constellation_points(const ModScheme& scheme) {
  if (!scheme_supported(scheme)) {
    throw ConfigError("unsupported constellation order " + std::to_string(scheme.order));
  }
  const int m = scheme.order;
  std::vector<cplx> points(static_cast<std::size_t>(m));

  const auto pam_level = [](unsigned bits, int levels) {
    return 2.0 * static_cast<double>(gray_decode(bits)) - static_cast<double>(levels - 1);
  };

  switch (scheme.kind) {
    case ModScheme::Kind::PSK:
      if (m == 2) {
        for (int i = 0; i < m; ++i) points[i] = {pam_level(i, 2), 0.0};
      } else if (m == 4) {
        for (int i = 0; i < m; ++i) points[i] = {pam_level(i >> 1, 2), pam_level(i & 1, 2)};
      } else {
        for (int i = 0; i < m; ++i) {
          const double phase = 2.0 * std::numbers::pi * gray_decode(i) / m;
          points[i] = std::polar(1.0, phase);
        }
      }
      break;
    case ModScheme::Kind::QAM: {
      const int bits_per_axis = log2_int(m) / 2;
      const int side = 1 << bits_per_axis;
      for (int i = 0; i < m; ++i) {
        const unsigned ib = static_cast<unsigned>(i) >> bits_per_axis;
        const unsigned qb = static_cast<unsigned>(i) & static_cast<unsigned>(side - 1);
        points[i] = {pam_level(ib, side), pam_level(qb, side)};
      }
      break;
    }
    case ModScheme::Kind::ASK:
      for (int i = 0; i < m; ++i) points[i] = {pam_level(i, m), 0.0};
      break;
    case ModScheme::Kind::OOK:
      points[0] = {0.0, 0.0};
      points[1] = {1.0, 0.0};
      break;
  }
  normalize_power(points);
  return points;
}

void PulseShape::validate() const {
  if (sps < 1) throw ConfigError("samples per symbol must be positive");
  if (kind == Kind::RRC) {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ConfigError("RRC rolloff must lie in (0, 1]");
    if (span < 2 || span % 2 != 0) throw ConfigError("RRC span must be a positive even number of symbols");
  }
}

std::string PulseShape::name() const { return kind == Kind::Rect ? "rect" : "rrc"; }

std::vector<double> PulseShape::taps() const {
  validate();
  if (kind == Kind::Rect) return std::vector<double>(static_cast<std::size_t>(sps), 1.0);

  const std::size_t len = static_cast<std::size_t>(span * sps + 1);
  const double center = static_cast<double>(len - 1) / 2.0;
  const double b = rolloff;
  const double pi = std::numbers::pi;
  std::vector<double> h(len);
  for (std::size_t n = 0; n < len; ++n) {
    const double t = (static_cast<double>(n) - center) / sps;
    if (std::abs(t) < 1e-12) {
      h[n] = 1.0 - b + 4.0 * b / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-12) {
      h[n] = (b / std::sqrt(2.0)) * ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) +
                                     (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
    } else {
      const double num = std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b));
      const double den = pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
      h[n] = num / den;
    }
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double g = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= g;
  return h;
}

std::vector<double> PulseShape::transmit_taps() const {
  auto h = taps();
  if (kind == Kind::Rect) return h;
  const double g = std::sqrt(static_cast<double>(sps));
  for (double& v : h) v *= g;
  return h;
}

int PulseShape::delay() const { return kind == Kind::Rect ? 0 : span * sps / 2; }

int PulseShape::edge_symbols() const { return kind == Kind::Rect ? 0 : span / 2; }

IQSignal modulate(std::span<const int> symbol_indices, const ModScheme& scheme,
                  const PulseShape& pulse) {
  if (symbol_indices.empty()) throw ArgumentError("modulate: empty symbol sequence");
  const auto points = constellation_points(scheme);
  const auto h = pulse.transmit_taps();
  const int m = static_cast<int>(points.size());
  for (int idx : symbol_indices) {
    if (idx < 0 || idx >= m) {
      throw ArgumentError("modulate: symbol index " + std::to_string(idx) + " out of range for " +
                          scheme.name());
    }
  }

  const std::size_t sps = static_cast<std::size_t>(pulse.sps);
  const std::size_t n = symbol_indices.size() * sps;
  const long delay = pulse.delay();
  IQSignal out(n);
  auto i_row = out.in_phase();
  auto q_row = out.quadrature();
  for (std::size_t k = 0; k < symbol_indices.size(); ++k) {
    const cplx a = points[static_cast<std::size_t>(symbol_indices[k])];
    const long start = static_cast<long>(k * sps) - delay;
    for (std::size_t t = 0; t < h.size(); ++t) {
      const long pos = start + static_cast<long>(t);
      if (pos < 0 || pos >= static_cast<long>(n)) continue;
      i_row[static_cast<std::size_t>(pos)] += a.real() * h[t];
      q_row[static_cast<std::size_t>(pos)] += a.imag() * h[t];
    }
  }
  out.n_symbols = static_cast<int>(symbol_indices.size());
  out.scheme = scheme;
  return out;
}

double measure_power(const IQSignal& signal) {
  const std::size_t n = signal.length();
  if (n == 0) throw ArgumentError("measure_power: empty signal");
  double acc = 0.0;
  for (double v : signal.samples) acc += v * v;
  return acc / static_cast<double>(n);
}

double clean_power_estimate(const IQSignal& signal, std::optional<double> snr_db) {
  const double p = measure_power(signal);
  if (!snr_db || !std::isfinite(*snr_db)) return p;
  return p / (1.0 + std::pow(10.0, -*snr_db / 10.0));
}

IQSignal awgn(const IQSignal& signal, double snr_db, std::uint64_t seed, std::optional<double> reference_power) {
  if (std::isnan(snr_db)) throw ArgumentError("awgn: SNR must be a number");
  const double p = reference_power ? *reference_power : measure_power(signal);
  if (p <= 0.0) throw ArgumentError("awgn: input signal has zero power");
  IQSignal out = signal;
  out.snr_db = snr_db;
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const double sigma = std::sqrt(p * std::pow(10.0, -snr_db / 10.0) / 2.0);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.samples) v += noise(gen);
  return out;
}

}  // namespace advmod
