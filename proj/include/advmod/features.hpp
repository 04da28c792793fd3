#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "advmod/sigsynth.hpp"

namespace advmod {

struct SymbolSequence {
  std::vector<cplx> symbols;
  std::size_t source_length = 0;
  int sps = 1;

  std::size_t size() const { return symbols.size(); }
};

/// Correlates with the transmit pulse at the known symbol instants and
/// divides by the pulse energy, so a noiseless Rect waveform returns its
/// constellation points exactly. Throws ArgumentError if N % sps != 0.
SymbolSequence matched_filter_symbols(const IQSignal& signal, const PulseShape& pulse);

/// Symbols clear of filter truncation at both edges.
std::span<const cplx> interior_symbols(const SymbolSequence& seq, const PulseShape& pulse);

/// M_pq = mean of s^(p-q) * conj(s)^q. No centering.
cplx mixed_moment(std::span<const cplx> symbols, int p, int q);

/// Joint cumulant of (p-q) copies of s and q copies of conj(s), computed by
/// summing over all set partitions of the p slots after removing the mean.
/// Supports p in {2, 4, 6}.
cplx cumulant(std::span<const cplx> symbols, int p, int q);

/// Enumerates the set partitions of {0..n-1}; each partition is a list of
/// blocks. Exposed for testing (Bell(6) = 203).
std::vector<std::vector<std::vector<int>>> set_partitions(int n);

inline constexpr std::size_t kNumHocFeatures = 5;
using FeatureVector = std::array<double, kNumHocFeatures>;

/// [|C20|, |C40|, |C41|, |C42|, |C63|], each C_pq divided by C21^(p/2).
FeatureVector hoc_features(std::span<const cplx> symbols);
FeatureVector hoc_features(const IQSignal& signal, const PulseShape& pulse);

}  // namespace advmod
