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
#include <cstdint>
#include <vector>

#include "debater/core/rng.hpp"
#include "debater/data/time_scheme.hpp"
#include "debater/graph/adjacency.hpp"
#include "debater/model/propagation.hpp"

namespace debater {

/// Distinct train edges with their timestamps, plus per-user sorted item lists
/// for negative sampling.
struct TrainEdges {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  std::vector<DecomposedTimestamp> times;
  std::vector<std::vector<std::size_t>> items_of_user;

  std::size_t size() const { return users.size(); }

  bool has_edge(std::size_t u, std::size_t i) const {
    const auto& v = items_of_user[u];
    return std::binary_search(v.begin(), v.end(), i);
  }
};

inline TrainEdges make_train_edges(const SparseBipartiteAdjacency& adj, const InteractionTimeIndex& index) {
  TrainEdges out;
  out.n_users = adj.n_users;
  out.n_items = adj.n_items;
  out.items_of_user.resize(adj.n_users);
  for (std::size_t k = 0; k < adj.entries.size(); ++k) {
    const auto u = static_cast<std::size_t>(adj.entries[k].user);
    const auto i = static_cast<std::size_t>(adj.entries[k].item);
    out.users.push_back(u);
    out.items.push_back(i);
    out.times.push_back(index.times[k]);
    out.items_of_user[u].push_back(i);
  }
  for (auto& v : out.items_of_user) std::sort(v.begin(), v.end());
  return out;
}

/// (u, i, j, t_ui) samples; negatives share the positive's timestamp.
struct TrainingBatch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  std::vector<DecomposedTimestamp> times;
  std::vector<std::size_t> edge;  // index into TrainEdges

  std::size_t size() const { return users.size(); }
};

struct EpochBatches {
  std::vector<TrainingBatch> batches;
  std::size_t skipped = 0;  // positives whose user has no free negative
};

/// One shuffled pass over the train edges in batches, one uniform negative
/// per positive drawn by rejection against the user's train items.
inline EpochBatches sample_epoch(const TrainEdges& edges, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorKind::config, "batch size must be >= 1");
  EpochBatches out;
  const auto order = rng.permutation(edges.size());
  TrainingBatch current;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t e = order[pos];
    const std::size_t u = edges.users[e];
    if (edges.items_of_user[u].size() >= edges.n_items) {
      ++out.skipped;
    } else {
      std::size_t j = rng.uniform_index(edges.n_items);
      while (edges.has_edge(u, j)) j = rng.uniform_index(edges.n_items);
      current.users.push_back(u);
      current.pos.push_back(edges.items[e]);
      current.neg.push_back(j);
      current.times.push_back(edges.times[e]);
      current.edge.push_back(e);
    }
    if (current.size() == batch_size) {
      out.batches.push_back(std::move(current));
      current = TrainingBatch{};
    }
  }
  if (current.size() > 0) out.batches.push_back(std::move(current));
  return out;
}

/// Where each sample's rows live in the packed [users; items] selection.
struct BatchLayout {
  RowSelection rows;
  std::vector<std::size_t> user_row;  // per sample
  std::vector<std::size_t> pos_row;
  std::vector<std::size_t> neg_row;
  std::vector<std::size_t> distinct_user_rows;  // packed rows of distinct users
  std::vector<std::size_t> distinct_user_first;  // first sample of each distinct user
  std::vector<std::size_t> distinct_pos_rows;
  std::vector<std::size_t> distinct_pos_first;
};

inline BatchLayout make_layout(const TrainingBatch& batch, std::size_t n_users, std::size_t n_items) {
  BatchLayout out;
  std::vector<std::size_t> user_slot(n_users, SIZE_MAX), item_slot(n_items, SIZE_MAX);
  std::vector<char> pos_seen(n_items, 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t u = batch.users[b];
    if (user_slot[u] == SIZE_MAX) {
      user_slot[u] = out.rows.users.size();
      out.rows.users.push_back(u);
      out.distinct_user_first.push_back(b);
    }
    for (std::size_t item : {batch.pos[b], batch.neg[b]}) {
      if (item_slot[item] == SIZE_MAX) {
        item_slot[item] = out.rows.items.size();
        out.rows.items.push_back(item);
      }
    }
    if (!pos_seen[batch.pos[b]]) {
      pos_seen[batch.pos[b]] = 1;
      out.distinct_pos_first.push_back(b);
    }
  }
  const std::size_t nu = out.rows.users.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out.user_row.push_back(user_slot[batch.users[b]]);
    out.pos_row.push_back(nu + item_slot[batch.pos[b]]);
    out.neg_row.push_back(nu + item_slot[batch.neg[b]]);
  }
  for (std::size_t b : out.distinct_user_first) out.distinct_user_rows.push_back(out.user_row[b]);
  for (std::size_t b : out.distinct_pos_first) out.distinct_pos_rows.push_back(out.pos_row[b]);
  return out;
}

}  // namespace debater
