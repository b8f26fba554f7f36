// Copyright 2026 The debater Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/numerics/tensor.hpp"

namespace debater::ad {

#ifdef NDEBUG
inline constexpr bool kDefaultFiniteChecks = false;
#else
inline constexpr bool kDefaultFiniteChecks = true;
#endif

struct TapeOptions {
  /// Raise a numerical fault naming the operation that produced a NaN/Inf.
  bool check_finite = kDefaultFiniteChecks;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  inline const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of a computation for one reverse sweep.
///
/// Node ids are topologically ordered by construction, so backward() walks
/// ids downward from the root. Gradients are allocated lazily and only for
/// nodes that depend on a variable.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(TapeOptions options = {}) : options_(options) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr); }
  Var variable(Tensor value) { return push("variable", std::move(value), true, nullptr); }

  Var record(const char* op, Tensor value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    if (options_.check_finite && !value.all_finite()) {
      throw Error(ErrorKind::numerical_fault, std::string("non-finite value produced by ") + op);
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }
  const char* op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }
  const TapeOptions& options() const { return options_; }

  /// Mutable gradient buffer of a node, zero-initialized on first access.
  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor::zeros_like(n.value);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient of the last backward() root w.r.t. v (zeros if v was unreached).
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
  }

  void backward(Var root) {
    if (root.value().size() != 1) throw std::logic_error("backward() needs a scalar root");
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    if (!nodes_[root.id()].requires_grad) return;
    grad_ref(root.id()).fill(1.0);
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
    const char* op = "";
  };

  Var push(const char* op, Tensor value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  TapeOptions options_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

/// Accumulate into a parent's gradient if that parent participates.
template <typename F>
void accumulate(Tape& tape, const Var& parent, F&& f) {
  if (tape.requires_grad(parent.id())) f(tape.grad_ref(parent.id()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  return a.tape().record("add", a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { ga += g; });
    detail::accumulate(t, b, [&](Tensor& gb) { gb += g; });
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape().record("sub", a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { ga += g; });
    detail::accumulate(t, b, [&](Tensor& gb) { gb -= g; });
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * b.value()[k];
    });
    detail::accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[k] * a.value()[k];
    });
  });
}

inline Var scale(Var a, double s) {
  return a.tape().record("scale", a.value() * s, {a}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += s * g[k];
    });
  });
}

inline Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (auto& x : out.data()) x += s;
  return a.tape().record("add_scalar", std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { ga += g; });
  });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// a[r, c] * v[r] for an n x c matrix and an n x 1 column.
inline Var mul_col(Var a, Var v) {
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  if (vv.rows() != av.rows() || vv.cols() != 1) throw std::invalid_argument("mul_col: shape mismatch");
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (auto& x : out.row(r)) x *= vv[r];
  }
  return a.tape().record("mul_col", std::move(out), {a, v}, [a, v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < ga.rows(); ++r) axpy(v.value()[r], g.row(r), ga.row(r));
    });
    detail::accumulate(t, v, [&](Tensor& gv) {
      for (std::size_t r = 0; r < gv.rows(); ++r) gv[r] += dot(g.row(r), a.value().row(r));
    });
  });
}

/// a[r, c] + b[0, c]: row-vector broadcast (bias add).
inline Var add_row(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) axpy(1.0, bv.row(0), out.row(r));
  return a.tape().record("add_row", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { ga += g; });
    detail::accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t r = 0; r < g.rows(); ++r) axpy(1.0, g.row(r), gb.row(0));
    });
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation

namespace detail {

// out (m x n) += a (m x k) * b (k x n)
inline void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik != 0.0) axpy(aik, b.row(k), orow);
    }
  }
}

// out (m x n) += a (m x k) * b^T where b is n x k
inline void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) += dot(a.row(i), b.row(j));
  }
}

// out (k x n) += a^T * b where a is m x k, b is m x n
inline void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik != 0.0) axpy(aik, b.row(i), out.row(k));
    }
  }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tensor out(a.rows(), b.cols());
  detail::gemm_nn(a.value(), b.value(), out);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { detail::gemm_nt(g, b.value(), ga); });
    detail::accumulate(t, b, [&](Tensor& gb) { detail::gemm_tn(a.value(), g, gb); });
  });
}

/// a * b^T.
inline Var matmul_bt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: inner dimensions differ");
  Tensor out(a.rows(), b.rows());
  detail::gemm_nt(a.value(), b.value(), out);
  return a.tape().record("matmul_bt", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) { detail::gemm_nn(g, b.value(), ga); });
    detail::accumulate(t, b, [&](Tensor& gb) { detail::gemm_tn(g, a.value(), gb); });
  });
}

inline Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  return a.tape().record("transpose", std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(c, r);
    });
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(p.value().row(r).begin(), p.value().row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts.front().tape().record("concat_cols", std::move(out), parts, [saved](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    std::size_t off = 0;
    for (const Var& p : saved) {
      detail::accumulate(t, p, [&](Tensor& gp) {
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          auto src = g.row(r).subspan(off, gp.cols());
          axpy(1.0, src, gp.row(r));
        }
      });
      off += p.cols();
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

/// out[r] = a[index[r]]; duplicate indices accumulate in the backward pass.
inline Var gather_rows(Var a, std::vector<std::size_t> index) {
  const Tensor& av = a.value();
  Tensor out(index.size(), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy(av.row(index[r]).begin(), av.row(index[r]).end(), out.row(r).begin());
  }
  return a.tape().record("gather_rows", std::move(out), {a}, [a, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < index.size(); ++r) axpy(1.0, g.row(r), ga.row(index[r]));
    });
  });
}

/// out has n_rows rows; out[index[r]] += a[r]. Adjoint of gather_rows.
inline Var scatter_rows(Var a, std::vector<std::size_t> index, std::size_t n_rows) {
  const Tensor& av = a.value();
  if (index.size() != av.rows()) throw std::invalid_argument("scatter_rows: index length differs from rows");
  Tensor out(n_rows, av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n_rows) throw std::out_of_range("scatter_rows: index out of range");
    axpy(1.0, av.row(r), out.row(index[r]));
  }
  return a.tape().record("scatter_rows", std::move(out), {a}, [a, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < index.size(); ++r) axpy(1.0, g.row(index[r]), ga.row(r));
    });
  });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (begin + count > av.rows()) throw std::out_of_range("slice_rows: range exceeds rows");
  Tensor out(count, av.cols());
  std::copy(av.data().begin() + static_cast<std::ptrdiff_t>(begin * av.cols()),
            av.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * av.cols()), out.data().begin());
  return a.tape().record("slice_rows", std::move(out), {a}, [a, begin, count](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < count; ++r) axpy(1.0, g.row(r), ga.row(begin + r));
    });
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

namespace detail {

template <typename F, typename D>
Var unary(const char* op, Var a, F f, D dydx) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = f(x);
  return a.tape().record(op, std::move(out), {a}, [a, dydx](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * dydx(a.value()[k], y[k]);
    });
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var sigmoid(Var a) {
  return detail::unary("sigmoid", a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var log(Var a) {
  return detail::unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var exp(Var a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// log(sigmoid(x)) without overflow.
inline Var log_sigmoid(Var a) {
  return detail::unary(
      "log_sigmoid", a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return detail::stable_sigmoid(-x); });
}

inline Var square(Var a) { return mul(a, a); }

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad_ref(self).item();
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (auto& x : ga.data()) x += g;
    });
  });
}

inline Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape().record("mean", Tensor::scalar(s / n), {a}, [a, n](Tape& t, std::size_t self) {
    const double g = t.grad_ref(self).item() / n;
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (auto& x : ga.data()) x += g;
    });
  });
}

/// Per-row sums as an n x 1 column.
inline Var row_sum(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (double x : av.row(r)) out[r] += x;
  return a.tape().record("row_sum", std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (auto& x : ga.row(r)) x += g[r];
    });
  });
}

/// Per-row inner products <a_r, b_r> as an n x 1 column.
inline Var row_dot(Var a, Var b) {
  detail::require_same_shape(a, b, "row_dot");
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.value().row(r), b.value().row(r));
  return a.tape().record("row_dot", std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < ga.rows(); ++r) axpy(g[r], b.value().row(r), ga.row(r));
    });
    detail::accumulate(t, b, [&](Tensor& gb) {
      for (std::size_t r = 0; r < gb.rows(); ++r) axpy(g[r], a.value().row(r), gb.row(r));
    });
  });
}

/// Per-row Euclidean norms as an n x 1 column (zero rows get zero gradient).
inline Var row_norm(Var a) {
  Tensor out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = l2_norm(a.value().row(r));
  return a.tape().record("row_norm", std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    detail::accumulate(t, a, [&](Tensor& ga) {
      for (std::size_t r = 0; r < ga.rows(); ++r) {
        if (y[r] > 0.0) axpy(g[r] / y[r], a.value().row(r), ga.row(r));
      }
    });
  });
}

inline constexpr double kNormGuard = 1e-12;

/// x / (||x|| + eps) per row.
inline Var row_normalize(Var a, double eps = kNormGuard) {
  const Tensor& av = a.value();
  Tensor out = av;
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    norms[r] = l2_norm(av.row(r));
    const double s = norms[r] + eps;
    for (auto& x : out.row(r)) x /= s;
  }
  return a.tape().record("row_normalize", std::move(out), {a},
                         [a, eps, norms = std::move(norms)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_ref(self);
                           detail::accumulate(t, a, [&](Tensor& ga) {
                             for (std::size_t r = 0; r < ga.rows(); ++r) {
                               const double n = norms[r];
                               const double s = n + eps;
                               if (s == 0.0) continue;
                               axpy(1.0 / s, g.row(r), ga.row(r));
                               if (n > 0.0) {
                                 const double proj = dot(a.value().row(r), g.row(r));
                                 axpy(-proj / (s * s * n), a.value().row(r), ga.row(r));
                               }
                             }
                           });
                         });
}

/// Row-wise cosine similarity with each norm guarded by eps.
inline Var cosine_rows(Var a, Var b, double eps = kNormGuard) {
  return row_dot(row_normalize(a, eps), row_normalize(b, eps));
}

/// log(sum_c exp(a[r, c])) per row as an n x 1 column.
inline Var logsumexp_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  Tensor softmax = av;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto row = av.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double x : row) s += std::exp(x - m);
    out[r] = m + std::log(s);
    for (auto& x : softmax.row(r)) x = std::exp(x - out[r]);
  }
  return a.tape().record("logsumexp_rows", std::move(out), {a},
                         [a, softmax = std::move(softmax)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_ref(self);
                           detail::accumulate(t, a, [&](Tensor& ga) {
                             for (std::size_t r = 0; r < ga.rows(); ++r) axpy(g[r], softmax.row(r), ga.row(r));
                           });
                         });
}

}  // namespace debater::ad
