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
#include <span>
#include <vector>

#include "debater/numerics/tensor.hpp"

namespace debater {

/// (e_u + e_t) . (e_i + e_t)
inline double score(std::span<const double> user, std::span<const double> item, std::span<const double> time) {
  double s = 0.0;
  for (std::size_t c = 0; c < user.size(); ++c) s += (user[c] + time[c]) * (item[c] + time[c]);
  return s;
}

/// Scores of a user at time e_t against the given items (rows of item_table).
inline std::vector<double> score(std::span<const double> user, std::span<const std::size_t> items,
                                 std::span<const double> time, const Tensor& item_table) {
  std::vector<double> out;
  out.reserve(items.size());
  for (std::size_t i : items) out.push_back(score(user, item_table.row(i), time));
  return out;
}

/// Scores against every item of the table.
inline std::vector<double> score_all(std::span<const double> user, std::span<const double> time,
                                     const Tensor& item_table) {
  std::vector<double> shifted(user.begin(), user.end());
  for (std::size_t c = 0; c < shifted.size(); ++c) shifted[c] += time[c];
  const double bias = dot(shifted, time);
  std::vector<double> out(item_table.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(shifted, item_table.row(i)) + bias;
  return out;
}

struct TopK {
  std::vector<std::size_t> items;
  bool truncated = false;  // fewer than k candidates were available
};

/// Highest scores first, ties to the smaller item id. `excluded[i]` removes item i.
inline TopK rank_topk(std::span<const double> scores, std::size_t k, std::span<const char> excluded = {}) {
  std::vector<std::size_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (excluded.empty() || !excluded[i]) candidates.push_back(i);
  }
  TopK out;
  const std::size_t take = std::min(k, candidates.size());
  out.truncated = take < k;
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(), better);
  candidates.resize(take);
  out.items = std::move(candidates);
  return out;
}

}  // namespace debater
