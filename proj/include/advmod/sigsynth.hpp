#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advmod {

using cplx = std::complex<double>;

/// A digital constellation family and its order.
struct ModScheme {
  enum class Kind { PSK, QAM, ASK, OOK };

  Kind kind = Kind::PSK;
  int order = 2;

  static ModScheme bpsk() { return {Kind::PSK, 2}; }
  static ModScheme qpsk() { return {Kind::PSK, 4}; }
  static ModScheme psk8() { return {Kind::PSK, 8}; }
  static ModScheme qam16() { return {Kind::QAM, 16}; }
  static ModScheme qam64() { return {Kind::QAM, 64}; }
  static ModScheme qam256() { return {Kind::QAM, 256}; }
  static ModScheme ask4() { return {Kind::ASK, 4}; }
  static ModScheme ask8() { return {Kind::ASK, 8}; }
  static ModScheme ook() { return {Kind::OOK, 2}; }

  /// Canonical name: BPSK, QPSK, 8PSK, 16QAM, 64QAM, 256QAM, 4ASK, 8ASK, OOK.
  std::string name() const;
  static ModScheme parse(std::string_view name);

  friend bool operator==(const ModScheme&, const ModScheme&) = default;
};

/// Every scheme the synthesizer knows, in canonical order.
std::vector<ModScheme> supported_schemes();
/// BPSK, QPSK, 16QAM, 64QAM.
std::vector<ModScheme> benchmark_schemes();

/// Unit-average-power points in Gray-coded index order.
/// Throws ConfigError for an unsupported kind/order pair.
std::vector<cplx> constellation_points(const ModScheme& scheme);

struct PulseShape {
  enum class Kind { Rect, RRC };

  Kind kind = Kind::RRC;
  int sps = 8;
  double rolloff = 0.35;
  int span = 8;

  static PulseShape rect(int sps) { return {Kind::Rect, sps, 0.0, 1}; }
  static PulseShape rrc(int sps = 8, double rolloff = 0.35, int span = 8) {
    return {Kind::RRC, sps, rolloff, span};
  }

  /// Rect: sps unit taps. RRC: span*sps+1 symmetric taps with unit energy.
  std::vector<double> taps() const;

  /// Taps scaled to energy sps, so unit-power constellations give unit-power
  /// waveforms. Rect taps are returned unchanged.
  std::vector<double> transmit_taps() const;

  /// Offset (in samples) from a symbol instant to the first tap.
  int delay() const;

  /// Symbols lost to filter truncation at each edge of a "same"-length
  /// waveform: span/2 for RRC, none for Rect.
  int edge_symbols() const;

  void validate() const;
  std::string name() const;

  friend bool operator==(const PulseShape&, const PulseShape&) = default;
};

/// A 2xN real waveform stored row-major: I row then Q row.
struct IQSignal {
  std::vector<double> samples;
  std::optional<int> label;
  std::optional<double> snr_db;
  std::optional<int> n_symbols;
  std::optional<ModScheme> scheme;

  IQSignal() = default;
  explicit IQSignal(std::size_t n) : samples(2 * n, 0.0) {}

  std::size_t length() const { return samples.size() / 2; }
  std::span<double> in_phase() { return {samples.data(), length()}; }
  std::span<double> quadrature() { return {samples.data() + length(), length()}; }
  std::span<const double> in_phase() const { return {samples.data(), length()}; }
  std::span<const double> quadrature() const { return {samples.data() + length(), length()}; }
  cplx at(std::size_t n) const { return {samples[n], samples[length() + n]}; }
};

/// Upsamples to an impulse train and convolves with the transmit taps,
/// keeping N = symbols.size() * sps ("same" alignment).
IQSignal modulate(std::span<const int> symbol_indices, const ModScheme& scheme,
                  const PulseShape& pulse);

/// Mean of I^2 + Q^2 over the N samples.
double measure_power(const IQSignal& signal);

/// Power of the underlying noiseless waveform given the signal's SNR
/// metadata (or the measured power when no SNR is attached).
double clean_power_estimate(const IQSignal& signal, std::optional<double> snr_db);

/// Adds white Gaussian noise with per-component variance P*10^(-snr/10)/2,
/// where P is `reference_power` if given, else the measured signal power.
/// +inf SNR returns the input unchanged.
IQSignal awgn(const IQSignal& signal, double snr_db, std::uint64_t seed,
              std::optional<double> reference_power = std::nullopt);

}  // namespace advmod
