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
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "debater/data/interactions.hpp"
#include "debater/data/time_scheme.hpp"

namespace debater {

struct Edge {
  UserId user = 0;
  ItemId item = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Weighted |U| x |I| interaction matrix in sorted coordinate form, with the
/// weighted degrees kept in sync by recompute_degrees().
struct SparseBipartiteAdjacency {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Edge> entries;
  std::vector<double> user_degree;
  std::vector<double> item_degree;

  std::size_t nnz() const { return entries.size(); }

  void recompute_degrees() {
    user_degree.assign(n_users, 0.0);
    item_degree.assign(n_items, 0.0);
    for (const auto& e : entries) {
      user_degree[static_cast<std::size_t>(e.user)] += e.weight;
      item_degree[static_cast<std::size_t>(e.item)] += e.weight;
    }
  }
};

/// Decomposed timestamp of every adjacency entry, aligned by position.
struct InteractionTimeIndex {
  std::vector<DecomposedTimestamp> times;
  std::vector<Epoch> epochs;

  std::size_t size() const { return times.size(); }
};

/// One unit-weight entry per distinct (user, item); repeated pairs keep their
/// earliest timestamp.
inline std::pair<SparseBipartiteAdjacency, InteractionTimeIndex> build_adjacency(
    std::span<const TemporalInteraction> train, std::size_t n_users, std::size_t n_items,
    const TimeScheme& scheme) {
  std::vector<TemporalInteraction> sorted(train.begin(), train.end());
  std::sort(sorted.begin(), sorted.end(), [](const TemporalInteraction& a, const TemporalInteraction& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.item != b.item) return a.item < b.item;
    return a.epoch < b.epoch;
  });
  SparseBipartiteAdjacency adj;
  adj.n_users = n_users;
  adj.n_items = n_items;
  InteractionTimeIndex index;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (k > 0 && sorted[k].user == sorted[k - 1].user && sorted[k].item == sorted[k - 1].item) continue;
    adj.entries.push_back({sorted[k].user, sorted[k].item, 1.0});
    index.epochs.push_back(sorted[k].epoch);
    index.times.push_back(decompose(sorted[k].epoch, scheme));
  }
  adj.recompute_degrees();
  return {std::move(adj), std::move(index)};
}

/// w(u,i) / sqrt(d_u * d_i) with the input's weighted degrees. Entries whose
/// endpoints have zero degree are dropped.
inline SparseBipartiteAdjacency normalize(const SparseBipartiteAdjacency& adj) {
  SparseBipartiteAdjacency out;
  out.n_users = adj.n_users;
  out.n_items = adj.n_items;
  out.entries.reserve(adj.entries.size());
  for (const auto& e : adj.entries) {
    const double du = adj.user_degree[static_cast<std::size_t>(e.user)];
    const double di = adj.item_degree[static_cast<std::size_t>(e.item)];
    if (du <= 0.0 || di <= 0.0) continue;
    out.entries.push_back({e.user, e.item, e.weight / std::sqrt(du * di)});
  }
  out.recompute_degrees();
  return out;
}

/// Hard-thresholded reweighting: weight := r if r > beta, otherwise the entry
/// is removed. `reliability` is aligned with adj.entries.
inline SparseBipartiteAdjacency reweight(const SparseBipartiteAdjacency& adj, std::span<const double> reliability,
                                         double beta) {
  SparseBipartiteAdjacency out;
  out.n_users = adj.n_users;
  out.n_items = adj.n_items;
  for (std::size_t k = 0; k < adj.entries.size(); ++k) {
    const double r = reliability[k];
    if (r > beta && r > 0.0) out.entries.push_back({adj.entries[k].user, adj.entries[k].item, r});
  }
  out.recompute_degrees();
  return out;
}

inline void write_adjacency_csv(std::ostream& out, const SparseBipartiteAdjacency& adj) {
  out << "u,i,w\n";
  out.precision(17);
  for (const auto& e : adj.entries) out << e.user << ',' << e.item << ',' << e.weight << '\n';
}

/// Compressed sparse rows.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
};

/// The normalized adjacency in both orientations, as consumed by propagation.
struct BipartiteOperator {
  CsrMatrix user_items;  // |U| x |I|
  CsrMatrix item_users;  // |I| x |U|

  std::size_t n_users() const { return user_items.rows; }
  std::size_t n_items() const { return item_users.rows; }
};

inline BipartiteOperator make_operator(const SparseBipartiteAdjacency& adj) {
  BipartiteOperator op;
  auto fill = [](CsrMatrix& m, std::size_t rows, std::size_t cols, const std::vector<Edge>& edges, bool by_user) {
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (const auto& e : edges) ++m.row_ptr[static_cast<std::size_t>(by_user ? e.user : e.item) + 1];
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    m.col.resize(edges.size());
    m.val.resize(edges.size());
    std::vector<std::size_t> cursor(m.row_ptr.begin(), m.row_ptr.end() - 1);
    for (const auto& e : edges) {
      const auto r = static_cast<std::size_t>(by_user ? e.user : e.item);
      const std::size_t p = cursor[r]++;
      m.col[p] = by_user ? e.item : e.user;
      m.val[p] = e.weight;
    }
  };
  fill(op.user_items, adj.n_users, adj.n_items, adj.entries, true);
  fill(op.item_users, adj.n_items, adj.n_users, adj.entries, false);
  return op;
}

}  // namespace debater
