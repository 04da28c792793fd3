#include "advmod/features.hpp"

#include <cmath>

#include "advmod/error.hpp"

namespace advmod {

SymbolSequence matched_filter_symbols(const IQSignal& signal, const PulseShape& pulse) {
  const std::size_t n = signal.length();
  const std::size_t sps = static_cast<std::size_t>(pulse.sps);
  if (sps == 0 || n % sps != 0) {
    throw ArgumentError("matched filter: signal length " + std::to_string(n) +
                        " is not a multiple of samples-per-symbol");
  }
  const auto h = pulse.transmit_taps();
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const long delay = pulse.delay();

  SymbolSequence seq;
  seq.source_length = n;
  seq.sps = pulse.sps;
  seq.symbols.resize(n / sps);
  const auto i_row = signal.in_phase();
  const auto q_row = signal.quadrature();
  for (std::size_t k = 0; k < seq.symbols.size(); ++k) {
    const long start = static_cast<long>(k * sps) - delay;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t t = 0; t < h.size(); ++t) {
      const long pos = start + static_cast<long>(t);
      if (pos < 0 || pos >= static_cast<long>(n)) continue;
      re += i_row[static_cast<std::size_t>(pos)] * h[t];
      im += q_row[static_cast<std::size_t>(pos)] * h[t];
    }
    seq.symbols[k] = {re / energy, im / energy};
  }
  return seq;
}

std::span<const cplx> interior_symbols(const SymbolSequence& seq, const PulseShape& pulse) {
  const std::size_t edge = static_cast<std::size_t>(pulse.edge_symbols());
  if (seq.symbols.size() <= 2 * edge) return {};
  return std::span<const cplx>(seq.symbols).subspan(edge, seq.symbols.size() - 2 * edge);
}

cplx mixed_moment(std::span<const cplx> symbols, int p, int q) {
  if (q < 0 || q > p) throw ArgumentError("mixed moment requires 0 <= q <= p");
  if (symbols.empty()) throw ArgumentError("mixed moment of an empty symbol sequence");
  cplx acc = 0.0;
  for (const auto& s : symbols) {
    const cplx c = std::conj(s);
    cplx term = 1.0;
    for (int i = 0; i < p - q; ++i) term *= s;
    for (int i = 0; i < q; ++i) term *= c;
    acc += term;
  }
  return acc / static_cast<double>(symbols.size());
}

std::vector<std::vector<std::vector<int>>> set_partitions(int n) {
  std::vector<std::vector<std::vector<int>>> out;
  std::vector<std::vector<int>> current;
  // Element i joins an existing block or opens a new one.
  auto rec = [&](auto&& self, int i) -> void {
    if (i == n) {
      out.push_back(current);
      return;
    }
    // Index loop: the recursion below may reallocate `current`.
    for (std::size_t b = 0; b < current.size(); ++b) {
      current[b].push_back(i);
      self(self, i + 1);
      current[b].pop_back();
    }
    current.push_back({i});
    self(self, i + 1);
    current.pop_back();
  };
  rec(rec, 0);
  return out;
}

cplx cumulant(std::span<const cplx> symbols, int p, int q) {
  if (p != 2 && p != 4 && p != 6) throw ArgumentError("cumulant order must be 2, 4 or 6");
  if (q < 0 || q > p) throw ArgumentError("cumulant requires 0 <= q <= p");
  if (symbols.empty()) throw ArgumentError("cumulant of an empty symbol sequence");

  cplx mean = 0.0;
  for (const auto& s : symbols) mean += s;
  mean /= static_cast<double>(symbols.size());
  std::vector<cplx> centered(symbols.begin(), symbols.end());
  for (auto& s : centered) s -= mean;

  // Slots [0, p-q) are s, slots [p-q, p) are conj(s). A block's moment only
  // depends on how many of each it holds.
  std::vector<std::vector<cplx>> moment(static_cast<std::size_t>(p + 1),
                                        std::vector<cplx>(static_cast<std::size_t>(p + 1)));
  for (int order = 1; order <= p; ++order) {
    for (int conj_count = 0; conj_count <= order; ++conj_count) {
      moment[order][conj_count] = mixed_moment(centered, order, conj_count);
    }
  }

  static const double factorial[] = {1, 1, 2, 6, 24, 120, 720};
  cplx total = 0.0;
  for (const auto& partition : set_partitions(p)) {
    cplx prod = 1.0;
    for (const auto& block : partition) {
      int conj_count = 0;
      for (int slot : block) conj_count += slot >= p - q ? 1 : 0;
      prod *= moment[block.size()][conj_count];
    }
    const int blocks = static_cast<int>(partition.size());
    const double coeff = ((blocks - 1) % 2 == 0 ? 1.0 : -1.0) * factorial[blocks - 1];
    total += coeff * prod;
  }
  return total;
}

FeatureVector hoc_features(std::span<const cplx> symbols) {
  const double c21 = cumulant(symbols, 2, 1).real();
  if (!(c21 > 0.0)) throw ArgumentError("HOC features undefined for a zero-variance symbol sequence");
  const auto norm = [&](int p, int q) {
    return std::abs(cumulant(symbols, p, q)) / std::pow(c21, p / 2.0);
  };
  return {norm(2, 0), norm(4, 0), norm(4, 1), norm(4, 2), norm(6, 3)};
}

FeatureVector hoc_features(const IQSignal& signal, const PulseShape& pulse) {
  const auto seq = matched_filter_symbols(signal, pulse);
  auto interior = interior_symbols(seq, pulse);
  if (interior.empty()) interior = seq.symbols;
  return hoc_features(interior);
}

}  // namespace advmod
