/*
 * Copyright 2026 The Twostage Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "twostage/error.hpp"
#include "twostage/numerics/array.hpp"

namespace twostage::numerics {

class Tape;

/// Handle to one node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
  double item() const { return value().item(); }
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so inputs
/// always precede their consumers, and backward() walks the record in exact
/// reverse creation order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

  Var constant(Array value) { return push(std::move(value), false, nullptr); }
  Var variable(Array value) { return push(std::move(value), true, nullptr); }

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulated at a node; zeros if nothing reached it.
  Array grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty()) return Array(n.value.shape(), 0.0);
    return n.grad;
  }
  Array grad(Var v) const { return grad(v.id); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
  /// gradient. `loss` must hold exactly one value.
  void backward(Var loss) {
    require(loss.tape == this, "backward: loss belongs to another tape");
    require(nodes_[loss.id].value.size() == 1, "backward: loss is not scalar");
    if (!nodes_[loss.id].requires_grad) return;
    grad_slot(loss.id).fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // The closure may append nothing but can read other nodes; copy the
      // gradient so the reference survives.
      const Array g = n.grad;
      n.backward(*this, g);
    }
  }

  /// Adds `g` into the gradient of node `id` if it participates in autodiff.
  void accumulate(std::size_t id, const Array& g) {
    if (!nodes_[id].requires_grad) return;
    grad_slot(id) += g;
  }
  Array& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Array(n.value.shape(), 0.0);
    return n.grad;
  }

  Var record(Array value, std::vector<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      require(in.tape == this, "Tape: input from another tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

 private:
  struct Node {
    Array value;
    Array grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Array value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Array(), std::move(fn), requires_grad});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape->value(id); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap view(const Array& a) {
  return ConstMap(a.data(), static_cast<Eigen::Index>(a.rows()),
                  static_cast<Eigen::Index>(a.cols()));
}
inline MutMap view(Array& a) {
  return MutMap(a.data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

template <typename F>
Array map_values(const Array& a, F f) {
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[m,k] * b[k,n]
inline Var matmul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  require(av.cols() == bv.rows(), "matmul: inner dimensions differ");
  Array out = Array::matrix(av.rows(), bv.cols());
  detail::view(out).noalias() = detail::view(av) * detail::view(bv);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    const Array& av = t.value(a.id);
    const Array& bv = t.value(b.id);
    if (t.requires_grad(a.id))
      detail::view(t.grad_slot(a.id)).noalias() += detail::view(g) * detail::view(bv).transpose();
    if (t.requires_grad(b.id))
      detail::view(t.grad_slot(b.id)).noalias() += detail::view(av).transpose() * detail::view(g);
  });
}

/// a[m,k] * b[n,k]^T
inline Var matmul_nt(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  require(av.cols() == bv.cols(), "matmul_nt: inner dimensions differ");
  Array out = Array::matrix(av.rows(), bv.rows());
  detail::view(out).noalias() = detail::view(av) * detail::view(bv).transpose();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    const Array& av = t.value(a.id);
    const Array& bv = t.value(b.id);
    if (t.requires_grad(a.id))
      detail::view(t.grad_slot(a.id)).noalias() += detail::view(g) * detail::view(bv);
    if (t.requires_grad(b.id))
      detail::view(t.grad_slot(b.id)).noalias() += detail::view(g).transpose() * detail::view(av);
  });
}

/// Elementwise sum; operands must hold the same number of values. The result
/// takes the shape of `a`.
inline Var add(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  require(av.shape() == bv.shape(), "add: shape mismatch");
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    t.accumulate(a.id, g);
    if (t.requires_grad(b.id)) {
      Array& slot = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }
  });
}

/// x[m,n] + bias[n] broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  const Array& xv = x.value();
  const Array& bv = bias.value();
  require(bv.size() == xv.cols(), "add_bias: bias length must equal columns");
  Array out = xv;
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  return x.tape->record(std::move(out), {x, bias}, [x, bias, n](Tape& t, const Array& g) {
    t.accumulate(x.id, g);
    if (t.requires_grad(bias.id)) {
      Array& slot = t.grad_slot(bias.id);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i % n] += g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  require(av.shape() == bv.shape(), "mul: shape mismatch");
  Array out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    const Array& av = t.value(a.id);
    const Array& bv = t.value(b.id);
    if (t.requires_grad(a.id)) {
      Array& slot = t.grad_slot(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b.id)) {
      Array& slot = t.grad_slot(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Array out = a.value();
  out *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Array& g) {
    Array scaled = g;
    scaled *= s;
    t.accumulate(a.id, scaled);
  });
}

/// Scalar dot product of two equal-length arrays.
inline Var dot(Var a, Var b) {
  const double v = dot(a.value().span(), b.value().span());
  return a.tape->record(Array::scalar(v), {a, b}, [a, b](Tape& t, const Array& g) {
    const double gs = g[0];
    if (t.requires_grad(a.id)) {
      Array& slot = t.grad_slot(a.id);
      const Array& bv = t.value(b.id);
      for (std::size_t i = 0; i < bv.size(); ++i) slot[i] += gs * bv[i];
    }
    if (t.requires_grad(b.id)) {
      Array& slot = t.grad_slot(b.id);
      const Array& av = t.value(a.id);
      for (std::size_t i = 0; i < av.size(); ++i) slot[i] += gs * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

namespace detail {

// Records y = f(x) elementwise with dy/dx = df(x, y).
template <typename F, typename DF>
Var pointwise(Var x, F f, DF df) {
  Array out = map_values(x.value(), f);
  return x.tape->record(std::move(out), {x}, [x, df](Tape& t, const Array& g) {
    if (!t.requires_grad(x.id)) return;
    const Array& xv = t.value(x.id);
    Array& slot = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * df(xv[i]);
  });
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var tanh(Var x) {
  return detail::pointwise(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double y = std::tanh(v);
        return 1.0 - y * y;
      });
}

inline Var sigmoid(Var x) {
  return detail::pointwise(
      x, detail::sigmoid, [](double v) {
        const double y = detail::sigmoid(v);
        return y * (1.0 - y);
      });
}

/// Exact (erf) GELU.
inline Var gelu(Var x) {
  return detail::pointwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

inline Var log(Var x) {
  return detail::pointwise(
      x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

inline Var exp(Var x) {
  return detail::pointwise(
      x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

/// Softmax over each row.
inline Var softmax_rows(Var x) {
  const Array& xv = x.value();
  Array out(xv.shape());
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    double top = in[0];
    for (std::size_t c = 1; c < n; ++c) top = std::max(top, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += (o[c] = std::exp(in[c] - top));
    for (std::size_t c = 0; c < n; ++c) o[c] /= total;
  }
  Array saved = out;
  return x.tape->record(std::move(out), {x}, [x, n, y = std::move(saved)](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double inner = 0.0;
      for (std::size_t c = 0; c < n; ++c) inner += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c)
        slot[r * n + c] += y[r * n + c] * (g[r * n + c] - inner);
    }
  });
}

/// log(softmax) over each row, via log-sum-exp.
inline Var log_softmax_rows(Var x) {
  const Array& xv = x.value();
  Array out(xv.shape());
  const std::size_t n = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const double lse = log_sum_exp(std::span<const double>(xv.data() + r * n, n));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xv[r * n + c] - lse;
  }
  Array soft = detail::map_values(out, [](double v) { return std::exp(v); });
  return x.tape->record(std::move(out), {x}, [x, soft = std::move(soft), n](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (std::size_t r = 0; r < soft.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += g[r * n + c];
      for (std::size_t c = 0; c < n; ++c)
        slot[r * n + c] += g[r * n + c] - soft[r * n + c] * total;
    }
  });
}

/// Per-row layer normalization followed by elementwise gain and bias.
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-12) {
  const Array& xv = x.value();
  const std::size_t n = xv.cols();
  const std::size_t m = xv.rows();
  require(gain.value().size() == n && bias.value().size() == n,
          "layer_norm_rows: gain/bias length must equal columns");
  Array normed(xv.shape());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += in[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) normed[r * n + c] = (in[c] - mean) * inv_std[r];
  }
  Array out(xv.shape());
  const Array& gv = gain.value();
  const Array& bv = bias.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out[r * n + c] = normed[r * n + c] * gv[c] + bv[c];
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, n, m, normed = std::move(normed), inv_std = std::move(inv_std)](
          Tape& t, const Array& g) {
        const Array& gv = t.value(gain.id);
        if (t.requires_grad(gain.id)) {
          Array& slot = t.grad_slot(gain.id);
          for (std::size_t i = 0; i < g.size(); ++i) slot[i % n] += g[i] * normed[i];
        }
        if (t.requires_grad(bias.id)) {
          Array& slot = t.grad_slot(bias.id);
          for (std::size_t i = 0; i < g.size(); ++i) slot[i % n] += g[i];
        }
        if (!t.requires_grad(x.id)) return;
        Array& slot = t.grad_slot(x.id);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double gn = g[r * n + c] * gv[c];
            sum_g += gn;
            sum_gx += gn * normed[r * n + c];
          }
          for (std::size_t c = 0; c < n; ++c) {
            const double gn = g[r * n + c] * gv[c];
            slot[r * n + c] +=
                inv_std[r] * (gn - inv_n * sum_g - normed[r * n + c] * inv_n * sum_gx);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing and reshaping

/// Rows `ids` of table[V,d] as an [len(ids), d] matrix.
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Array& tv = table.value();
  const std::size_t d = tv.cols();
  Array out = Array::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < tv.rows(), "gather_rows: index out of range");
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  return table.tape->record(std::move(out), {table}, [table, ids = std::move(ids), d](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) slot[ids[i] * d + c] += g[i * d + c];
  });
}

/// Columns [start, start + len) of x.
inline Var slice_cols(Var x, std::size_t start, std::size_t len) {
  const Array& xv = x.value();
  const std::size_t n = xv.cols();
  require(start + len <= n, "slice_cols: range out of bounds");
  Array out = Array::matrix(xv.rows(), len);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    std::copy_n(xv.data() + r * n + start, len, out.data() + r * len);
  return x.tape->record(std::move(out), {x}, [x, start, len, n](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < len; ++c) slot[r * n + start + c] += g[r * len + c];
  });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.value().rows() == m, "concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Array out = Array::matrix(m, total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& pv = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return parts[0].tape->record(std::move(out), parts, [parts, widths, total, m](Tape& t, const Array& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (t.requires_grad(parts[k].id)) {
        Array& slot = t.grad_slot(parts[k].id);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c)
            slot[r * widths[k] + c] += g[r * total + offset + c];
      }
      offset += widths[k];
    }
  });
}

/// Row i of a matrix as a rank-1 vector.
inline Var row(Var x, std::size_t i) {
  const Array& xv = x.value();
  require(i < xv.rows(), "row: index out of range");
  const std::size_t n = xv.cols();
  Array out({n}, std::vector<double>(xv.data() + i * n, xv.data() + (i + 1) * n));
  return x.tape->record(std::move(out), {x}, [x, i, n](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (std::size_t c = 0; c < n; ++c) slot[i * n + c] += g[c];
  });
}

/// Single element x[i] as a scalar.
inline Var pick(Var x, std::size_t i) {
  require(i < x.value().size(), "pick: index out of range");
  return x.tape->record(Array::scalar(x.value()[i]), {x}, [x, i](Tape& t, const Array& g) {
    t.grad_slot(x.id)[i] += g[0];
  });
}

/// Stacks single-valued nodes into a rank-1 vector.
inline Var stack(const std::vector<Var>& scalars) {
  require(!scalars.empty(), "stack: no inputs");
  std::vector<double> vals;
  vals.reserve(scalars.size());
  for (const Var& s : scalars) {
    require(s.value().size() == 1, "stack: input is not scalar");
    vals.push_back(s.value()[0]);
  }
  return scalars[0].tape->record(Array::vector(std::move(vals)), scalars,
                                 [scalars](Tape& t, const Array& g) {
                                   for (std::size_t i = 0; i < scalars.size(); ++i)
                                     if (t.requires_grad(scalars[i].id))
                                       t.grad_slot(scalars[i].id)[0] += g[i];
                                 });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->record(Array::scalar(s), {x}, [x](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (double& v : slot.values()) v += g[0];
  });
}

inline Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

/// Inverted dropout with a recorded keep mask.
inline Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const Array& xv = x.value();
  Array mask(xv.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = keep(rng) ? s : 0.0;
  Array out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const Array& g) {
    Array& slot = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Losses over a candidate score vector

/// -log softmax(logits)[target], computed through log-sum-exp.
inline Var nll(Var logits, std::size_t target) {
  const Array& z = logits.value();
  if (target >= z.size()) throw ContractViolation("nll: positive slot out of range");
  const double lse = log_sum_exp(z.span());
  Array soft(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) soft[i] = std::exp(z[i] - lse);
  return logits.tape->record(
      Array::scalar(lse - z[target]), {logits},
      [logits, target, soft = std::move(soft)](Tape& t, const Array& g) {
        Array& slot = t.grad_slot(logits.id);
        for (std::size_t i = 0; i < soft.size(); ++i)
          slot[i] += g[0] * (soft[i] - (i == target ? 1.0 : 0.0));
      });
}

/// D(target || softmax(logits / tau)) with `target` held constant.
/// Terms with target_m == 0 contribute nothing.
inline Var kl_to_target(std::span<const double> target, Var logits, double tau) {
  const Array& z = logits.value();
  require(target.size() == z.size(), "kl_to_target: length mismatch");
  std::vector<double> scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / tau;
  const double lse = log_sum_exp(scaled);
  double kl = 0.0;
  Array soft(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double log_p = scaled[i] - lse;
    soft[i] = std::exp(log_p);
    if (target[i] > 0.0) kl += target[i] * (std::log(target[i]) - log_p);
  }
  double mass = 0.0;
  for (double q : target) mass += q;
  std::vector<double> q(target.begin(), target.end());
  return logits.tape->record(
      Array::scalar(kl), {logits},
      [logits, tau, mass, q = std::move(q), soft = std::move(soft)](Tape& t, const Array& g) {
        Array& slot = t.grad_slot(logits.id);
        for (std::size_t i = 0; i < q.size(); ++i)
          slot[i] += g[0] * (mass * soft[i] - q[i]) / tau;
      });
}

}  // namespace twostage::numerics
