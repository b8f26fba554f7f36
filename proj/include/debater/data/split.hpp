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
#include <optional>
#include <span>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/data/interactions.hpp"
#include "debater/data/time_scheme.hpp"

namespace debater {

/// Chronological train/test partition with per-user evaluation query times.
struct SplitDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<TemporalInteraction> train;
  std::vector<TemporalInteraction> test;
  TimeScheme scheme;
  /// Earliest surviving test epoch per user (empty for users without test items).
  std::vector<std::optional<Epoch>> query_epoch;
  std::vector<std::optional<DecomposedTimestamp>> query_time;
  /// Test records removed because their user or item never occurs in train.
  std::size_t dropped_cold_test = 0;
};

inline void sort_chronologically(std::vector<TemporalInteraction>& data) {
  std::stable_sort(data.begin(), data.end(), [](const TemporalInteraction& a, const TemporalInteraction& b) {
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    if (a.user != b.user) return a.user < b.user;
    return a.item < b.item;
  });
}

/// Fills query times from the test records using the scheme already present.
inline void assign_query_times(SplitDataset& split) {
  split.query_epoch.assign(split.n_users, std::nullopt);
  split.query_time.assign(split.n_users, std::nullopt);
  for (const auto& rec : split.test) {
    auto& q = split.query_epoch[static_cast<std::size_t>(rec.user)];
    if (!q || rec.epoch < *q) q = rec.epoch;
  }
  for (std::size_t u = 0; u < split.n_users; ++u) {
    if (split.query_epoch[u]) split.query_time[u] = decompose(*split.query_epoch[u], split.scheme);
  }
}

/// Sorts by (epoch, user, item), keeps the first floor(fraction * n) records
/// as train and the rest as test, drops cold-start test records, fits the time
/// scheme on train and derives per-user query times.
inline SplitDataset sequential_split(std::vector<TemporalInteraction> data, double train_fraction,
                                     std::vector<TimeField> fields, std::size_t n_users,
                                     std::size_t n_items) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::split, "train fraction must lie in (0, 1)");
  }
  if (data.size() < 2) throw Error(ErrorKind::split, "need at least two records to split");
  sort_chronologically(data);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(data.size())));
  if (n_train == 0 || n_train == data.size()) {
    throw Error(ErrorKind::split, "split leaves an empty side");
  }

  SplitDataset split;
  split.n_users = n_users;
  split.n_items = n_items;
  split.train.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<char> user_seen(n_users, 0), item_seen(n_items, 0);
  for (const auto& rec : split.train) {
    user_seen[static_cast<std::size_t>(rec.user)] = 1;
    item_seen[static_cast<std::size_t>(rec.item)] = 1;
  }
  for (auto it = data.begin() + static_cast<std::ptrdiff_t>(n_train); it != data.end(); ++it) {
    if (user_seen[static_cast<std::size_t>(it->user)] && item_seen[static_cast<std::size_t>(it->item)]) {
      split.test.push_back(*it);
    } else {
      ++split.dropped_cold_test;
    }
  }
  split.scheme = fit_scheme(split.train, std::move(fields));
  assign_query_times(split);
  return split;
}

inline SplitDataset sequential_split(const InteractionLog& log, double train_fraction, std::vector<TimeField> fields) {
  return sequential_split(log.records, train_fraction, std::move(fields), log.n_users(), log.n_items());
}

/// Validation carve-out: the last `fraction` of the (chronological) train
/// records become the evaluation side; the time scheme of `data` is kept so
/// encoder tables stay compatible.
inline SplitDataset holdout_split(const SplitDataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorKind::split, "holdout fraction must lie in (0, 1)");
  std::vector<TemporalInteraction> records = data.train;
  sort_chronologically(records);
  const auto n_fit = static_cast<std::size_t>(std::floor((1.0 - fraction) * static_cast<double>(records.size())));
  if (n_fit == 0 || n_fit == records.size()) throw Error(ErrorKind::split, "holdout leaves an empty side");
  SplitDataset out;
  out.n_users = data.n_users;
  out.n_items = data.n_items;
  out.scheme = data.scheme;
  out.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_fit));
  std::vector<char> user_seen(out.n_users, 0), item_seen(out.n_items, 0);
  for (const auto& rec : out.train) {
    user_seen[static_cast<std::size_t>(rec.user)] = 1;
    item_seen[static_cast<std::size_t>(rec.item)] = 1;
  }
  for (auto it = records.begin() + static_cast<std::ptrdiff_t>(n_fit); it != records.end(); ++it) {
    if (user_seen[static_cast<std::size_t>(it->user)] && item_seen[static_cast<std::size_t>(it->item)]) {
      out.test.push_back(*it);
    } else {
      ++out.dropped_cold_test;
    }
  }
  assign_query_times(out);
  return out;
}

}  // namespace debater
