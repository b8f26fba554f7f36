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

#include <cmath>
#include <utility>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/losses/sampler.hpp"
#include "debater/numerics/autodiff.hpp"

namespace debater {

struct LossWeights {
  double cl = 0.2;     // contrastive term
  double au = 1.0;     // alignment + uniformity term
  double gamma = 0.7;  // uniformity share inside the AU term

  void validate() const {
    if (cl < 0.0 || au < 0.0 || gamma < 0.0) throw Error(ErrorKind::config, "loss weights must be >= 0");
  }
};

inline ad::Var ones_column(ad::Tape& tape, std::size_t n) { return tape.constant(Tensor(n, 1, 1.0)); }

/// mean of -log sigmoid(w_pos * s_pos - w_neg * s_neg) with s = <user, item>
/// on time-aware rows.
inline ad::Var bpr_loss(ad::Var user_t, ad::Var pos_t, ad::Var neg_t, ad::Var w_pos, ad::Var w_neg) {
  const ad::Var margin = ad::sub(ad::mul(w_pos, ad::row_dot(user_t, pos_t)), ad::mul(w_neg, ad::row_dot(user_t, neg_t)));
  return ad::neg(ad::mean(ad::log_sigmoid(margin)));
}

inline ad::Var bpr_loss(ad::Var user_t, ad::Var pos_t, ad::Var neg_t) {
  ad::Var ones = ones_column(user_t.tape(), user_t.rows());
  return bpr_loss(user_t, pos_t, neg_t, ones, ones);
}

/// In-batch InfoNCE between two views of the same nodes (row r of each view
/// is node r), cosine similarity over temperature.
inline ad::Var info_nce(ad::Var view1, ad::Var view2, double tau) {
  const ad::Var z1 = ad::row_normalize(view1);
  const ad::Var z2 = ad::row_normalize(view2);
  const ad::Var logits = ad::scale(ad::matmul_bt(z1, z2), 1.0 / tau);
  const ad::Var positive = ad::scale(ad::row_dot(z1, z2), 1.0 / tau);
  return ad::mean(ad::sub(ad::logsumexp_rows(logits), positive));
}

inline ad::Var cl_loss(ad::Var users_view1, ad::Var users_view2, ad::Var items_view1, ad::Var items_view2,
                       double tau) {
  return ad::add(info_nce(users_view1, users_view2, tau), info_nce(items_view1, items_view2, tau));
}

/// Weighted mean of ||unit(user) - unit(item)||^2 over samples.
inline ad::Var alignment(ad::Var user_t, ad::Var pos_t, ad::Var w_pos) {
  const ad::Var diff = ad::sub(ad::row_normalize(user_t), ad::row_normalize(pos_t));
  return ad::mean(ad::mul(w_pos, ad::row_dot(diff, diff)));
}

/// mean over all ordered row pairs (self-pairs included) of
/// exp(-2 ||z_a - z_b||^2), for rows z already on the unit sphere.
inline ad::Var pairwise_gaussian_mean(ad::Var z) {
  const Tensor& zv = z.value();
  const std::size_t n = zv.rows();
  Tensor kernel(n, n);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double dist = 0.0;
      for (std::size_t c = 0; c < zv.cols(); ++c) {
        const double diff = zv(a, c) - zv(b, c);
        dist += diff * diff;
      }
      kernel(a, b) = std::exp(-2.0 * dist);
      total += kernel(a, b);
    }
  }
  const double nn = static_cast<double>(n * n);
  return z.tape().record("pairwise_gaussian_mean", Tensor::scalar(total / nn), {z},
                         [z, kernel = std::move(kernel), nn](ad::Tape& t, std::size_t self) {
                           const double g = t.grad_ref(self).item() * (-8.0 / nn);
                           const Tensor& zv = z.value();
                           Tensor& gz = t.grad_ref(z.id());
                           for (std::size_t a = 0; a < zv.rows(); ++a) {
                             for (std::size_t b = 0; b < zv.rows(); ++b) {
                               const double k = g * kernel(a, b);
                               for (std::size_t c = 0; c < zv.cols(); ++c) gz(a, c) += k * (zv(a, c) - zv(b, c));
                             }
                           }
                         });
}

inline ad::Var uniformity(ad::Var rows) { return pairwise_gaussian_mean(ad::row_normalize(rows)); }

/// alignment (weighted) + gamma * (uniformity of distinct users + of distinct items).
inline ad::Var au_loss(ad::Var user_t, ad::Var pos_t, ad::Var w_pos, ad::Var distinct_users_t,
                       ad::Var distinct_items_t, double gamma) {
  const ad::Var unif = ad::add(uniformity(distinct_users_t), uniformity(distinct_items_t));
  return ad::add(alignment(user_t, pos_t, w_pos), ad::scale(unif, gamma));
}

inline ad::Var au_loss(ad::Var user_t, ad::Var pos_t, ad::Var distinct_users_t, ad::Var distinct_items_t,
                       double gamma) {
  return au_loss(user_t, pos_t, ones_column(user_t.tape(), user_t.rows()), distinct_users_t, distinct_items_t, gamma);
}

inline ad::Var combined_loss(ad::Var bpr, ad::Var cl, ad::Var au, const LossWeights& w) {
  return ad::add(bpr, ad::add(ad::scale(cl, w.cl), ad::scale(au, w.au)));
}

// ---------------------------------------------------------------------------
// Gradient matching

inline constexpr double kActiveRowNorm = 1e-12;

/// Rows where both gradients have norm above the activity threshold.
inline std::vector<std::size_t> active_rows(const Tensor& g1, const Tensor& g2) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < g1.rows(); ++r) {
    if (l2_norm(g1.row(r)) > kActiveRowNorm && l2_norm(g2.row(r)) > kActiveRowNorm) out.push_back(r);
  }
  return out;
}

/// sum over active rows of (1 - cos(g1_r, g2_r)).
inline ad::Var gradient_matching_loss(ad::Var g1, ad::Var g2) {
  const auto rows = active_rows(g1.value(), g2.value());
  ad::Tape& tape = g1.tape();
  if (rows.empty()) return tape.constant(Tensor::scalar(0.0));
  const auto n = static_cast<double>(rows.size());
  const ad::Var cos = ad::cosine_rows(ad::gather_rows(g1, rows), ad::gather_rows(g2, rows), 0.0);
  return ad::add_scalar(ad::neg(ad::sum(cos)), n);
}

inline double gradient_matching_loss(const Tensor& g1, const Tensor& g2) {
  double total = 0.0;
  for (std::size_t r : active_rows(g1, g2)) {
    total += 1.0 - dot(g1.row(r), g2.row(r)) / (l2_norm(g1.row(r)) * l2_norm(g2.row(r)));
  }
  return total;
}

/// Constant time-aware rows of one batch (values only), as seen by the
/// weight generator's inner gradients.
struct BatchRows {
  Tensor user_t;  // B x d
  Tensor pos_t;
  Tensor neg_t;
  Tensor distinct_users_t;
  Tensor distinct_items_t;
};

/// d(weighted BPR)/d(packed rows) written on the tape as a function of the
/// per-sample weights. The rows themselves are constants.
inline ad::Var bpr_row_gradient(ad::Tape& tape, const BatchRows& rows, const BatchLayout& layout, ad::Var w_pos,
                                ad::Var w_neg) {
  const std::size_t n = rows.user_t.rows();
  const ad::Var user = tape.constant(rows.user_t);
  const ad::Var pos = tape.constant(rows.pos_t);
  const ad::Var neg = tape.constant(rows.neg_t);
  Tensor s_pos(n, 1), s_neg(n, 1);
  for (std::size_t b = 0; b < n; ++b) {
    s_pos[b] = dot(rows.user_t.row(b), rows.pos_t.row(b));
    s_neg[b] = dot(rows.user_t.row(b), rows.neg_t.row(b));
  }
  const ad::Var margin =
      ad::sub(ad::mul(w_pos, tape.constant(std::move(s_pos))), ad::mul(w_neg, tape.constant(std::move(s_neg))));
  // d/dm of -log sigmoid(m) / n = -(1 - sigmoid(m)) / n
  const ad::Var coef = ad::scale(ad::add_scalar(ad::sigmoid(margin), -1.0), 1.0 / static_cast<double>(n));
  const ad::Var cp = ad::mul(coef, w_pos);
  const ad::Var cn = ad::mul(coef, w_neg);
  const std::size_t packed = layout.rows.size();
  const ad::Var g_user = ad::sub(ad::mul_col(pos, cp), ad::mul_col(neg, cn));
  const ad::Var g_pos = ad::mul_col(user, cp);
  const ad::Var g_neg = ad::neg(ad::mul_col(user, cn));
  return ad::add(ad::add(ad::scatter_rows(g_user, layout.user_row, packed), ad::scatter_rows(g_pos, layout.pos_row, packed)),
                 ad::scatter_rows(g_neg, layout.neg_row, packed));
}

/// Per-sample gradients of ||unit(a) - unit(c)||^2 w.r.t. a and c, by reverse mode.
inline std::pair<Tensor, Tensor> alignment_row_terms(const Tensor& user_t, const Tensor& pos_t) {
  ad::Tape tape;
  const ad::Var a = tape.variable(user_t);
  const ad::Var c = tape.variable(pos_t);
  const ad::Var diff = ad::sub(ad::row_normalize(a), ad::row_normalize(c));
  tape.backward(ad::sum(ad::row_dot(diff, diff)));
  return {tape.grad(a), tape.grad(c)};
}

/// Gradient of gamma * (uniformity(users) + uniformity(items)) w.r.t. the distinct rows.
inline std::pair<Tensor, Tensor> uniformity_row_terms(const Tensor& distinct_users_t, const Tensor& distinct_items_t,
                                                      double gamma) {
  ad::Tape tape;
  const ad::Var u = tape.variable(distinct_users_t);
  const ad::Var i = tape.variable(distinct_items_t);
  tape.backward(ad::scale(ad::add(uniformity(u), uniformity(i)), gamma));
  return {tape.grad(u), tape.grad(i)};
}

/// d(weighted AU)/d(packed rows) as a function of the positive weights; the
/// uniformity part is unweighted and enters as a constant.
inline ad::Var au_row_gradient(ad::Tape& tape, const BatchRows& rows, const BatchLayout& layout, ad::Var w_pos,
                               double gamma) {
  const std::size_t n = rows.user_t.rows();
  const std::size_t packed = layout.rows.size();
  auto [ga, gc] = alignment_row_terms(rows.user_t, rows.pos_t);
  auto [gu, gi] = uniformity_row_terms(rows.distinct_users_t, rows.distinct_items_t, gamma);
  Tensor constant(packed, rows.user_t.cols());
  for (std::size_t r = 0; r < layout.distinct_user_rows.size(); ++r)
    axpy(1.0, gu.row(r), constant.row(layout.distinct_user_rows[r]));
  for (std::size_t r = 0; r < layout.distinct_pos_rows.size(); ++r)
    axpy(1.0, gi.row(r), constant.row(layout.distinct_pos_rows[r]));
  const ad::Var coef = ad::scale(w_pos, 1.0 / static_cast<double>(n));
  const ad::Var g_user = ad::mul_col(tape.constant(std::move(ga)), coef);
  const ad::Var g_pos = ad::mul_col(tape.constant(std::move(gc)), coef);
  return ad::add(ad::add(ad::scatter_rows(g_user, layout.user_row, packed), ad::scatter_rows(g_pos, layout.pos_row, packed)),
                 tape.constant(std::move(constant)));
}

}  // namespace debater
