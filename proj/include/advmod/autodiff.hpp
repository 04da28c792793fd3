#pragma once

// Reverse-mode differentiation over a recorded tape of dense and 1-D
// convolutional primitives. Templated on the storage scalar: models train in
// float, gradient checks instantiate the same kernels in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "advmod/error.hpp"

namespace advmod::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ArgumentError("tensor data length does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    else grad.fill(T(0));
  }
};

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr, "constant"); }
  Var input(Tensor<T> value) { return push(std::move(value), true, nullptr, nullptr, "input"); }
  Var parameter(Parameter<T>& p) { return push(p.value, true, nullptr, &p, "parameter"); }

  /// Records an op output. It requires a gradient iff any input does; the
  /// backward closure runs only in that case.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
    bool rg = false;
    for (Var v : inputs) rg = rg || node(v).requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr, nullptr, op);
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient of the last backward() target w.r.t. v; zeros if v was not reached.
  const Tensor<T>& grad(Var v) {
    if (!backward_done_) throw StateError("gradient requested before backward()");
    return grad_mut(v);
  }

  /// Accumulation buffer for v, allocated zeroed on first use.
  Tensor<T>& grad_mut(Var v) {
    Node& n = node(v);
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(Var v) const { return node(v).grad.size() == node(v).value.size() && !node(v).value.empty(); }

  /// Reverse sweep from a scalar. Parameter leaves add into Parameter::grad.
  void backward(Var loss) {
    if (nodes_.empty() || loss.id >= nodes_.size()) throw StateError("backward() without a recorded forward pass");
    if (backward_done_) throw StateError("backward() already ran on this tape; record a new forward pass");
    if (node(loss).value.size() != 1) throw ArgumentError("backward() requires a scalar loss");
    backward_done_ = true;
    if (!node(loss).requires_grad) return;
    grad_mut(loss)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, Var{i});
      } else if (n.param != nullptr) {
        Parameter<T>& p = *n.param;
        if (p.grad.size() != p.value.size()) p.grad = Tensor<T>(p.value.shape());
        for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += nodes_[i].grad[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool rg, Backward backward, Parameter<T>* param, const char* op) {
    for (const T& x : value.values()) {
      if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value produced by ") + op);
    }
    if (backward_done_) throw StateError("tape already differentiated; clear() before recording");
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), param, rg});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

namespace detail {

template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError(what);
}

}  // namespace detail


/// x [B, Cin, L], w [Cout, Cin, K] (K odd), b [Cout] -> [B, Cout, L].
/// Stride 1, zero "same" padding of (K-1)/2 on each side.
template <class T>
Var conv1d(Tape<T>& tape, Var x, Var w, Var b) {
  const Shape xs = tape.value(x).shape();
  const Shape ws = tape.value(w).shape();
  detail::require(xs.size() == 3 && ws.size() == 3, "conv1d expects x [B,C,L] and w [O,C,K]");
  detail::require(ws[1] == xs[1], "conv1d channel mismatch: x " + shape_str(xs) + " w " + shape_str(ws));
  detail::require(ws[2] % 2 == 1, "conv1d kernel width must be odd");
  detail::require(tape.value(b).size() == ws[0], "conv1d bias length must equal output channels");
  const std::size_t B = xs[0], Ci = xs[1], L = xs[2], Co = ws[0], K = ws[2];
  const long pad = static_cast<long>(K / 2);
  const long Ll = static_cast<long>(L);

  // Valid output range [lo, hi) for tap t.
  const auto range = [=](std::size_t t) {
    const long off = static_cast<long>(t) - pad;
    const long lo = std::max(0L, -off);
    const long hi = std::min(Ll, Ll - off);
    return std::tuple<long, long, long>{off, lo, hi};
  };

  Tensor<T> y({B, Co, L});
  const T* X = tape.value(x).data();
  const T* W = tape.value(w).data();
  const T* Bv = tape.value(b).data();
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t o = 0; o < Co; ++o) {
      T* yrow = y.data() + (bi * Co + o) * L;
      std::fill(yrow, yrow + L, Bv[o]);
      for (std::size_t i = 0; i < Ci; ++i) {
        const T* xrow = X + (bi * Ci + i) * L;
        const T* wk = W + (o * Ci + i) * K;
        for (std::size_t t = 0; t < K; ++t) {
          const auto [off, lo, hi] = range(t);
          if (lo < hi) detail::axpy(wk[t], xrow + lo + off, yrow + lo, static_cast<std::size_t>(hi - lo));
        }
      }
    }
  }

  return tape.record(std::move(y), {x, w, b}, [=](Tape<T>& tp, Var self) {
    const T* dY = tp.grad_mut(self).data();
    const T* Xv = tp.value(x).data();
    const T* Wv = tp.value(w).data();
    if (tp.requires_grad(x)) {
      T* dX = tp.grad_mut(x).data();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t o = 0; o < Co; ++o) {
          const T* dyrow = dY + (bi * Co + o) * L;
          for (std::size_t i = 0; i < Ci; ++i) {
            T* dxrow = dX + (bi * Ci + i) * L;
            const T* wk = Wv + (o * Ci + i) * K;
            for (std::size_t t = 0; t < K; ++t) {
              const auto [off, lo, hi] = range(t);
              if (lo < hi) detail::axpy(wk[t], dyrow + lo, dxrow + lo + off, static_cast<std::size_t>(hi - lo));
            }
          }
        }
    }
    if (tp.requires_grad(w)) {
      T* dW = tp.grad_mut(w).data();
      std::vector<double> acc(Co * Ci * K, 0.0);
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t o = 0; o < Co; ++o) {
          const T* dyrow = dY + (bi * Co + o) * L;
          for (std::size_t i = 0; i < Ci; ++i) {
            const T* xrow = Xv + (bi * Ci + i) * L;
            double* a = acc.data() + (o * Ci + i) * K;
            for (std::size_t t = 0; t < K; ++t) {
              const auto [off, lo, hi] = range(t);
              if (lo < hi) a[t] += detail::dot(dyrow + lo, xrow + lo + off, static_cast<std::size_t>(hi - lo));
            }
          }
        }
      for (std::size_t k = 0; k < acc.size(); ++k) dW[k] += static_cast<T>(acc[k]);
    }
    if (tp.requires_grad(b)) {
      T* dB = tp.grad_mut(b).data();
      for (std::size_t o = 0; o < Co; ++o) {
        double s = 0.0;
        for (std::size_t bi = 0; bi < B; ++bi) {
          const T* dyrow = dY + (bi * Co + o) * L;
          for (std::size_t n = 0; n < L; ++n) s += dyrow[n];
        }
        dB[o] += static_cast<T>(s);
      }
    }
  }, "conv1d");
}

/// x [B, In], w [Out, In], b [Out] -> [B, Out].
template <class T>
Var dense(Tape<T>& tape, Var x, Var w, Var b) {
  const Shape xs = tape.value(x).shape();
  const Shape ws = tape.value(w).shape();
  detail::require(xs.size() == 2 && ws.size() == 2, "dense expects x [B,In] and w [Out,In]");
  detail::require(ws[1] == xs[1], "dense shape mismatch: x " + shape_str(xs) + " w " + shape_str(ws));
  detail::require(tape.value(b).size() == ws[0], "dense bias length must equal output width");
  const std::size_t B = xs[0], In = xs[1], Out = ws[0];

  Tensor<T> y({B, Out});
  const T* X = tape.value(x).data();
  const T* W = tape.value(w).data();
  const T* Bv = tape.value(b).data();
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t o = 0; o < Out; ++o) y[bi * Out + o] = Bv[o] + detail::dot(W + o * In, X + bi * In, In);

  return tape.record(std::move(y), {x, w, b}, [=](Tape<T>& tp, Var self) {
    const T* dY = tp.grad_mut(self).data();
    const T* Xv = tp.value(x).data();
    const T* Wv = tp.value(w).data();
    if (tp.requires_grad(x)) {
      T* dX = tp.grad_mut(x).data();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t o = 0; o < Out; ++o) detail::axpy(dY[bi * Out + o], Wv + o * In, dX + bi * In, In);
    }
    if (tp.requires_grad(w)) {
      T* dW = tp.grad_mut(w).data();
      std::vector<double> acc(Out * In, 0.0);
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t o = 0; o < Out; ++o) {
          const double g = dY[bi * Out + o];
          if (g == 0.0) continue;
          double* a = acc.data() + o * In;
          const T* xrow = Xv + bi * In;
          for (std::size_t i = 0; i < In; ++i) a[i] += g * xrow[i];
        }
      for (std::size_t k = 0; k < acc.size(); ++k) dW[k] += static_cast<T>(acc[k]);
    }
    if (tp.requires_grad(b)) {
      T* dB = tp.grad_mut(b).data();
      for (std::size_t o = 0; o < Out; ++o) {
        double s = 0.0;
        for (std::size_t bi = 0; bi < B; ++bi) s += dY[bi * Out + o];
        dB[o] += static_cast<T>(s);
      }
    }
  }, "dense");
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return tape.record(std::move(y), {x}, [=](Tape<T>& tp, Var self) {
    const auto& dy = tp.grad_mut(self);
    const auto& xv = tp.value(x);
    auto& dx = tp.grad_mut(x);
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += xv[k] > T(0) ? dy[k] : T(0);
  }, "relu");
}

/// Non-overlapping mean over windows of `width` along the last axis of [B, C, L].
template <class T>
Var avg_pool1d(Tape<T>& tape, Var x, std::size_t width) {
  const Shape xs = tape.value(x).shape();
  detail::require(xs.size() == 3, "avg_pool1d expects [B,C,L]");
  detail::require(width >= 1 && xs[2] % width == 0, "avg_pool1d width must divide the length");
  const std::size_t rows = xs[0] * xs[1], L = xs[2], Lo = L / width;
  Tensor<T> y({xs[0], xs[1], Lo});
  const T* X = tape.value(x).data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < Lo; ++j) {
      double s = 0.0;
      for (std::size_t m = 0; m < width; ++m) s += X[r * L + j * width + m];
      y[r * Lo + j] = static_cast<T>(s / static_cast<double>(width));
    }
  return tape.record(std::move(y), {x}, [=](Tape<T>& tp, Var self) {
    const auto& dy = tp.grad_mut(self);
    auto& dx = tp.grad_mut(x);
    const T scale = T(1) / static_cast<T>(width);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < Lo; ++j)
        for (std::size_t m = 0; m < width; ++m) dx[r * L + j * width + m] += dy[r * Lo + j] * scale;
  }, "avg_pool1d");
}

/// [B, ...] -> [B, prod(...)]
template <class T>
Var flatten(Tape<T>& tape, Var x) {
  const Shape xs = tape.value(x).shape();
  detail::require(!xs.empty(), "flatten of a scalar");
  const std::size_t batch = xs[0];
  const std::size_t rest = batch == 0 ? 0 : tape.value(x).size() / batch;
  return tape.record(tape.value(x).reshaped({batch, rest}), {x}, [=](Tape<T>& tp, Var self) {
    const auto& dy = tp.grad_mut(self);
    auto& dx = tp.grad_mut(x);
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += dy[k];
  }, "flatten");
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  detail::require(tape.value(a).shape() == tape.value(b).shape(), "add shape mismatch");
  Tensor<T> y = tape.value(a);
  const auto& bv = tape.value(b);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k];
  return tape.record(std::move(y), {a, b}, [=](Tape<T>& tp, Var self) {
    const auto& dy = tp.grad_mut(self);
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      auto& dv = tp.grad_mut(v);
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] += dy[k];
    }
  }, "add");
}

template <class T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.values()) v *= factor;
  return tape.record(std::move(y), {x}, [=](Tape<T>& tp, Var self) {
    const auto& dy = tp.grad_mut(self);
    auto& dx = tp.grad_mut(x);
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += factor * dy[k];
  }, "scale");
}

template <class T>
Var sum(Tape<T>& tape, Var x) {
  double s = 0.0;
  for (const T& v : tape.value(x).values()) s += v;
  return tape.record(Tensor<T>({1}, {static_cast<T>(s)}), {x}, [=](Tape<T>& tp, Var self) {
    const T g = tp.grad_mut(self)[0];
    auto& dx = tp.grad_mut(x);
    for (auto& v : dx.values()) v += g;
  }, "sum");
}

/// Max-subtracted softmax of one logit row, in double.
template <class T>
std::vector<double> softmax(std::span<const T> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double z = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(static_cast<double>(logits[c]) - mx);
    z += p[c];
  }
  for (auto& v : p) v /= z;
  return p;
}

enum class Reduction { Mean, Sum };

/// Cross-entropy of softmax(logits [B, C]) against integer labels.
template <class T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::vector<int> labels,
                          Reduction reduction = Reduction::Mean) {
  const Shape zs = tape.value(logits).shape();
  detail::require(zs.size() == 2, "softmax_cross_entropy expects logits [B,C]");
  detail::require(labels.size() == zs[0], "softmax_cross_entropy: one label per row required");
  const std::size_t B = zs[0], C = zs[1];
  for (int y : labels) detail::require(y >= 0 && static_cast<std::size_t>(y) < C, "label out of range");

  const T* Z = tape.value(logits).data();
  std::vector<double> probs(B * C);
  double loss = 0.0;
  for (std::size_t bi = 0; bi < B; ++bi) {
    const auto p = softmax(std::span<const T>(Z + bi * C, C));
    std::copy(p.begin(), p.end(), probs.begin() + static_cast<long>(bi * C));
    double mx = Z[bi * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max<double>(mx, Z[bi * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(Z[bi * C + c]) - mx);
    loss += mx + std::log(z) - static_cast<double>(Z[bi * C + static_cast<std::size_t>(labels[bi])]);
  }
  const double norm = reduction == Reduction::Mean && B > 0 ? 1.0 / static_cast<double>(B) : 1.0;
  loss *= norm;

  return tape.record(Tensor<T>({1}, {static_cast<T>(loss)}), {logits},
                     [=, probs = std::move(probs), labels = std::move(labels)](Tape<T>& tp, Var self) {
    const double g = tp.grad_mut(self)[0] * norm;
    auto& dz = tp.grad_mut(logits);
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t c = 0; c < C; ++c) {
        const double onehot = static_cast<std::size_t>(labels[bi]) == c ? 1.0 : 0.0;
        dz[bi * C + c] += static_cast<T>(g * (probs[bi * C + c] - onehot));
      }
  }, "softmax_cross_entropy");
}

template <class T>
void sgd_step(std::span<Parameter<T>* const> params, double lr) {
  for (Parameter<T>* p : params) {
    detail::require(p->grad.size() == p->value.size(), "sgd: gradient shape mismatch for " + p->name);
    for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] -= static_cast<T>(lr * p->grad[k]);
  }
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam with double-precision moment state.
template <class T>
class Adam {
 public:
  explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(std::span<Parameter<T>* const> params) {
    if (m_.empty()) {
      for (Parameter<T>* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    detail::require(m_.size() == params.size(), "adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t j = 0; j < params.size(); ++j) {
      Parameter<T>& p = *params[j];
      detail::require(p.grad.size() == p.value.size() && m_[j].size() == p.value.size(),
                      "adam: gradient shape mismatch for " + p.name);
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m_[j][k] = hyper_.beta1 * m_[j][k] + (1.0 - hyper_.beta1) * g;
        v_[j][k] = hyper_.beta2 * v_[j][k] + (1.0 - hyper_.beta2) * g * g;
        const double mhat = m_[j][k] / c1;
        const double vhat = v_[j][k] / c2;
        p.value[k] -= static_cast<T>(hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps));
      }
    }
  }

  long steps() const { return t_; }

 private:
  AdamHyper hyper_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace advmod::ad
