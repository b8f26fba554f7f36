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

#include <cstdint>
#include <span>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/core/rng.hpp"
#include "debater/graph/adjacency.hpp"
#include "debater/numerics/autodiff.hpp"
#include "debater/numerics/tensor.hpp"

namespace debater {

struct BackboneConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  double eps = 0.1;  // perturbation magnitude
  double tau = 0.2;  // contrastive temperature

  void validate(std::size_t n_time_fields) const {
    if (dim < n_time_fields || dim == 0) throw Error(ErrorKind::config, "backbone.dim must be >= number of time fields");
    if (layers < 1) throw Error(ErrorKind::config, "backbone.layers must be >= 1");
    if (eps < 0.0) throw Error(ErrorKind::config, "backbone.eps must be >= 0");
    if (!(tau > 0.0)) throw Error(ErrorKind::config, "backbone.tau must be > 0");
  }
};

/// out += A.row(r) * x
inline void spmm_row(const CsrMatrix& a, std::size_t r, const Tensor& x, std::span<double> out) {
  for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
    axpy(a.val[p], x.row(static_cast<std::size_t>(a.col[p])), out);
  }
}

inline Tensor spmm(const CsrMatrix& a, const Tensor& x) {
  Tensor out(a.rows, x.cols());
  for (std::size_t r = 0; r < a.rows; ++r) spmm_row(a, r, x, out.row(r));
  return out;
}

struct PropagationOutput {
  Tensor users;
  Tensor items;
};

/// Layer-mean of L alternating sparse products; layer 0 is not part of the mean.
inline PropagationOutput propagate(const BipartiteOperator& op, const Tensor& users0, const Tensor& items0,
                                   std::size_t layers) {
  Tensor users_prev = users0;
  Tensor items_prev = items0;
  PropagationOutput out{Tensor(users0.rows(), users0.cols()), Tensor(items0.rows(), items0.cols())};
  for (std::size_t l = 1; l <= layers; ++l) {
    Tensor users_next = spmm(op.user_items, items_prev);
    Tensor items_next = spmm(op.item_users, users_prev);
    out.users += users_next;
    out.items += items_next;
    users_prev = std::move(users_next);
    items_prev = std::move(items_next);
  }
  const double inv = 1.0 / static_cast<double>(layers);
  out.users *= inv;
  out.items *= inv;
  return out;
}

/// Row permutations for one perturbed view, drawn per layer and per side.
struct ShufflePlan {
  std::vector<std::vector<std::size_t>> user_perm;  // [layer - 1]
  std::vector<std::vector<std::size_t>> item_perm;
};

inline ShufflePlan draw_shuffle_plan(Rng& rng, std::size_t n_users, std::size_t n_items, std::size_t layers) {
  ShufflePlan plan;
  for (std::size_t l = 0; l < layers; ++l) {
    plan.user_perm.push_back(rng.permutation(n_users));
    plan.item_perm.push_back(rng.permutation(n_items));
  }
  return plan;
}

inline constexpr std::uint64_t kViewNoisePurpose = 0x5AFF1E;

/// dst = source.row(src) / (||source.row(src)|| + 1e-12)
inline void unit_row(const Tensor& source, std::size_t src, std::span<double> dst) {
  const auto row = source.row(src);
  const double s = l2_norm(row) + ad::kNormGuard;
  for (std::size_t c = 0; c < row.size(); ++c) dst[c] = row[c] / s;
}

/// Z with Z.row(r) = unit(X.row(perm[r])).
inline Tensor shuffled_unit_rows(const Tensor& x, std::span<const std::size_t> perm) {
  Tensor z(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) unit_row(x, perm[r], z.row(r));
  return z;
}

/// One perturbed view: every layer adds eps times the row-shuffled, row-normalized
/// product of that layer.
inline PropagationOutput propagate_perturbed(const BipartiteOperator& op, const Tensor& users0, const Tensor& items0,
                                             std::size_t layers, double eps, const ShufflePlan& plan) {
  Tensor users_prev = users0;
  Tensor items_prev = items0;
  PropagationOutput out{Tensor(users0.rows(), users0.cols()), Tensor(items0.rows(), items0.cols())};
  for (std::size_t l = 1; l <= layers; ++l) {
    Tensor users_next = spmm(op.user_items, items_prev);
    Tensor items_next = spmm(op.item_users, users_prev);
    if (eps != 0.0) {
      const Tensor zu = shuffled_unit_rows(users_next, plan.user_perm[l - 1]);
      const Tensor zi = shuffled_unit_rows(items_next, plan.item_perm[l - 1]);
      for (std::size_t k = 0; k < users_next.size(); ++k) users_next[k] += eps * zu[k];
      for (std::size_t k = 0; k < items_next.size(); ++k) items_next[k] += eps * zi[k];
    }
    out.users += users_next;
    out.items += items_next;
    users_prev = std::move(users_next);
    items_prev = std::move(items_next);
  }
  const double inv = 1.0 / static_cast<double>(layers);
  out.users *= inv;
  out.items *= inv;
  return out;
}

inline PropagationOutput propagate_perturbed(const BipartiteOperator& op, const Tensor& users0, const Tensor& items0,
                                             const BackboneConfig& cfg, std::uint64_t noise_seed) {
  Rng rng = Rng::stream(noise_seed, kViewNoisePurpose);
  const ShufflePlan plan = draw_shuffle_plan(rng, op.n_users(), op.n_items(), cfg.layers);
  return propagate_perturbed(op, users0, items0, cfg.layers, cfg.eps, plan);
}

// ---------------------------------------------------------------------------
// Batch path: full products for layers 1..L-1, last layer only on needed rows.

/// Clean layers 0..L-1 of one propagation. Layer 0 refers to the caller's tables.
class LayerCache {
 public:
  LayerCache(const BipartiteOperator& op, const Tensor& users0, const Tensor& items0, std::size_t layers)
      : users0_(&users0), items0_(&items0), layers_(layers) {
    for (std::size_t l = 1; l < layers; ++l) {
      Tensor u = spmm(op.user_items, item_layer(l - 1));
      Tensor i = spmm(op.item_users, user_layer(l - 1));
      users_.push_back(std::move(u));
      items_.push_back(std::move(i));
    }
  }

  std::size_t layers() const { return layers_; }
  const Tensor& user_layer(std::size_t l) const { return l == 0 ? *users0_ : users_[l - 1]; }
  const Tensor& item_layer(std::size_t l) const { return l == 0 ? *items0_ : items_[l - 1]; }

 private:
  const Tensor* users0_;
  const Tensor* items0_;
  std::size_t layers_;
  std::vector<Tensor> users_;
  std::vector<Tensor> items_;
};

struct RowSelection {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;

  std::size_t size() const { return users.size() + items.size(); }
};

/// Layer-mean rows [selected users; selected items], bitwise equal to the
/// matching rows of propagate().
inline Tensor propagate_selected(const BipartiteOperator& op, const LayerCache& cache, const RowSelection& sel) {
  const std::size_t layers = cache.layers();
  const std::size_t d = cache.user_layer(0).cols();
  Tensor out(sel.size(), d);
  std::vector<double> last(d);
  const double inv = 1.0 / static_cast<double>(layers);
  auto fill = [&](std::size_t out_row, std::size_t node, bool is_user) {
    auto dst = out.row(out_row);
    for (std::size_t l = 1; l < layers; ++l) {
      axpy(1.0, (is_user ? cache.user_layer(l) : cache.item_layer(l)).row(node), dst);
    }
    std::fill(last.begin(), last.end(), 0.0);
    if (is_user) {
      spmm_row(op.user_items, node, cache.item_layer(layers - 1), last);
    } else {
      spmm_row(op.item_users, node, cache.user_layer(layers - 1), last);
    }
    axpy(1.0, last, dst);
    for (auto& x : dst) x *= inv;
  };
  for (std::size_t r = 0; r < sel.users.size(); ++r) fill(r, sel.users[r], true);
  for (std::size_t r = 0; r < sel.items.size(); ++r) fill(sel.users.size() + r, sel.items[r], false);
  return out;
}

/// Adjoint of propagate_selected: accumulates d/d(users0) and d/d(items0)
/// given the gradient of the selected rows. Only rows with nonzero adjoint
/// are expanded.
inline void propagate_selected_backward(const BipartiteOperator& op, std::size_t layers, const RowSelection& sel,
                                        const Tensor& grad_rows, Tensor& grad_users0, Tensor& grad_items0) {
  const std::size_t d = grad_rows.cols();
  const std::size_t nu = op.n_users();
  const std::size_t ni = op.n_items();
  const double inv = 1.0 / static_cast<double>(layers);
  // adjoints for the current layer (l) and the one below (l - 1)
  Tensor adj_u(nu, d), adj_i(ni, d);
  std::vector<char> act_u(nu, 0), act_i(ni, 0);
  Tensor seed_u(nu, d), seed_i(ni, d);
  std::vector<char> seed_act_u(nu, 0), seed_act_i(ni, 0);
  for (std::size_t r = 0; r < sel.users.size(); ++r) {
    axpy(inv, grad_rows.row(r), seed_u.row(sel.users[r]));
    seed_act_u[sel.users[r]] = 1;
  }
  for (std::size_t r = 0; r < sel.items.size(); ++r) {
    axpy(inv, grad_rows.row(sel.users.size() + r), seed_i.row(sel.items[r]));
    seed_act_i[sel.items[r]] = 1;
  }
  adj_u = seed_u;
  adj_i = seed_i;
  act_u = seed_act_u;
  act_i = seed_act_i;
  for (std::size_t l = layers; l >= 1; --l) {
    Tensor below_u = (l - 1 >= 1) ? seed_u : Tensor(nu, d);
    Tensor below_i = (l - 1 >= 1) ? seed_i : Tensor(ni, d);
    std::vector<char> below_act_u = (l - 1 >= 1) ? seed_act_u : std::vector<char>(nu, 0);
    std::vector<char> below_act_i = (l - 1 >= 1) ? seed_act_i : std::vector<char>(ni, 0);
    // E_u^(l) = A E_i^(l-1)  =>  adj_i^(l-1) += A^T adj_u^(l)
    for (std::size_t u = 0; u < nu; ++u) {
      if (!act_u[u]) continue;
      const auto g = adj_u.row(u);
      for (std::size_t p = op.user_items.row_ptr[u]; p < op.user_items.row_ptr[u + 1]; ++p) {
        const auto i = static_cast<std::size_t>(op.user_items.col[p]);
        axpy(op.user_items.val[p], g, below_i.row(i));
        below_act_i[i] = 1;
      }
    }
    // E_i^(l) = A^T E_u^(l-1)  =>  adj_u^(l-1) += A adj_i^(l)
    for (std::size_t i = 0; i < ni; ++i) {
      if (!act_i[i]) continue;
      const auto g = adj_i.row(i);
      for (std::size_t p = op.item_users.row_ptr[i]; p < op.item_users.row_ptr[i + 1]; ++p) {
        const auto u = static_cast<std::size_t>(op.item_users.col[p]);
        axpy(op.item_users.val[p], g, below_u.row(u));
        below_act_u[u] = 1;
      }
    }
    adj_u = std::move(below_u);
    adj_i = std::move(below_i);
    act_u = std::move(below_act_u);
    act_i = std::move(below_act_i);
  }
  grad_users0 += adj_u;
  grad_items0 += adj_i;
}

/// Tape node for propagate_selected; gradients flow to the layer-0 tables.
inline ad::Var propagate_rows(const BipartiteOperator& op, ad::Var users0, ad::Var items0, const LayerCache& cache,
                              RowSelection sel) {
  Tensor value = propagate_selected(op, cache, sel);
  const std::size_t layers = cache.layers();
  return users0.tape().record(
      "propagate_rows", std::move(value), {users0, items0},
      [&op, users0, items0, layers, sel = std::move(sel)](ad::Tape& t, std::size_t self) {
        const Tensor& g = t.grad_ref(self);
        Tensor gu(op.n_users(), g.cols());
        Tensor gi(op.n_items(), g.cols());
        propagate_selected_backward(op, layers, sel, g, gu, gi);
        if (t.requires_grad(users0.id())) t.grad_ref(users0.id()) += gu;
        if (t.requires_grad(items0.id())) t.grad_ref(items0.id()) += gi;
      });
}

/// Tape node for the transpose map: selected-row gradients -> gradients of the
/// layer-0 tables, packed as [users; items]. Its own adjoint is propagate_selected.
inline ad::Var propagate_rows_adjoint(const BipartiteOperator& op, ad::Var rows, std::size_t layers, RowSelection sel) {
  const std::size_t d = rows.cols();
  const std::size_t nu = op.n_users();
  Tensor gu(nu, d);
  Tensor gi(op.n_items(), d);
  propagate_selected_backward(op, layers, sel, rows.value(), gu, gi);
  Tensor value(nu + op.n_items(), d);
  std::copy(gu.data().begin(), gu.data().end(), value.data().begin());
  std::copy(gi.data().begin(), gi.data().end(), value.data().begin() + static_cast<std::ptrdiff_t>(gu.size()));
  return rows.tape().record(
      "propagate_rows_adjoint", std::move(value), {rows},
      [&op, rows, layers, sel = std::move(sel)](ad::Tape& t, std::size_t self) {
        const Tensor& g = t.grad_ref(self);
        const std::size_t nu = op.n_users();
        const std::size_t d = g.cols();
        Tensor g_users(nu, d, std::vector<double>(g.data().begin(), g.data().begin() + static_cast<std::ptrdiff_t>(nu * d)));
        Tensor g_items(op.n_items(), d,
                       std::vector<double>(g.data().begin() + static_cast<std::ptrdiff_t>(nu * d), g.data().end()));
        const LayerCache cache(op, g_users, g_items, layers);
        t.grad_ref(rows.id()) += propagate_selected(op, cache, sel);
      });
}

/// Perturbed-view offset of the selected rows: with the shuffle noise held
/// constant, view rows = propagate_selected rows + offset.
inline Tensor perturbation_offset(const BipartiteOperator& op, const LayerCache& cache, double eps,
                                  const ShufflePlan& plan, const RowSelection& sel) {
  const std::size_t layers = cache.layers();
  const std::size_t d = cache.user_layer(0).cols();
  Tensor out(sel.size(), d);
  if (eps == 0.0) return out;
  const std::size_t nu = op.n_users();
  const std::size_t ni = op.n_items();
  // accumulated noise D^(l) of full layers, and its running layer sum
  Tensor du(nu, d), di(ni, d);
  Tensor sum_u(nu, d), sum_i(ni, d);
  for (std::size_t l = 1; l < layers; ++l) {
    Tensor pu = cache.user_layer(l);
    Tensor pi = cache.item_layer(l);
    Tensor carried_u = l > 1 ? spmm(op.user_items, di) : Tensor(nu, d);
    Tensor carried_i = l > 1 ? spmm(op.item_users, du) : Tensor(ni, d);
    pu += carried_u;
    pi += carried_i;
    const Tensor zu = shuffled_unit_rows(pu, plan.user_perm[l - 1]);
    const Tensor zi = shuffled_unit_rows(pi, plan.item_perm[l - 1]);
    du = std::move(carried_u);
    di = std::move(carried_i);
    for (std::size_t k = 0; k < du.size(); ++k) du[k] += eps * zu[k];
    for (std::size_t k = 0; k < di.size(); ++k) di[k] += eps * zi[k];
    sum_u += du;
    sum_i += di;
  }
  // perturbed inputs of the last layer
  Tensor in_items = cache.item_layer(layers - 1);
  Tensor in_users = cache.user_layer(layers - 1);
  in_items += di;
  in_users += du;
  const double inv = 1.0 / static_cast<double>(layers);
  std::vector<double> carried(d), product(d), unit(d);
  auto fill = [&](std::size_t out_row, std::size_t node, bool is_user) {
    const CsrMatrix& a = is_user ? op.user_items : op.item_users;
    const Tensor& noise_in = is_user ? di : du;
    const Tensor& full_in = is_user ? in_items : in_users;
    const std::size_t src = (is_user ? plan.user_perm : plan.item_perm)[layers - 1][node];
    std::fill(carried.begin(), carried.end(), 0.0);
    spmm_row(a, node, noise_in, carried);
    std::fill(product.begin(), product.end(), 0.0);
    spmm_row(a, src, full_in, product);
    const double s = l2_norm(product) + ad::kNormGuard;
    auto dst = out.row(out_row);
    const auto prev = (is_user ? sum_u : sum_i).row(node);
    for (std::size_t c = 0; c < d; ++c) dst[c] = (prev[c] + carried[c] + eps * product[c] / s) * inv;
  };
  for (std::size_t r = 0; r < sel.users.size(); ++r) fill(r, sel.users[r], true);
  for (std::size_t r = 0; r < sel.items.size(); ++r) fill(sel.users.size() + r, sel.items[r], false);
  return out;
}

}  // namespace debater
