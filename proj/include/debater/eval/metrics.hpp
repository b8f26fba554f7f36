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
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "debater/data/split.hpp"
#include "debater/graph/adjacency.hpp"
#include "debater/model/encoder.hpp"
#include "debater/model/propagation.hpp"
#include "debater/model/scoring.hpp"

namespace debater {

/// Binary-relevance NDCG with log2(rank + 1) discount; nullopt when there is
/// nothing relevant (such users are left out of means).
inline std::optional<double> ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                                       std::size_t k) {
  if (relevant.empty()) return std::nullopt;
  auto is_relevant = [&](std::size_t item) { return std::find(relevant.begin(), relevant.end(), item) != relevant.end(); };
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (is_relevant(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

inline std::size_t hits_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (std::find(relevant.begin(), relevant.end(), ranked[r]) != relevant.end()) ++hits;
  }
  return hits;
}

struct UserMetrics {
  std::size_t user = 0;
  std::size_t n_relevant = 0;
  std::vector<double> precision;  // aligned with MetricsReport::ks
  std::vector<double> recall;
  std::vector<double> ndcg;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::vector<UserMetrics> per_user;

  std::size_t index_of(std::size_t k) const {
    auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) throw std::out_of_range("k=" + std::to_string(k) + " not evaluated");
    return static_cast<std::size_t>(it - ks.begin());
  }
  double precision_at(std::size_t k) const { return precision[index_of(k)]; }
  double recall_at(std::size_t k) const { return recall[index_of(k)]; }
  double ndcg_at(std::size_t k) const { return ndcg[index_of(k)]; }
  double value(const std::string& metric, std::size_t k) const {
    if (metric == "precision") return precision_at(k);
    if (metric == "recall") return recall_at(k);
    if (metric == "ndcg") return ndcg_at(k);
    throw std::invalid_argument("unknown metric " + metric);
  }
};

/// Metrics of one user from a ranking and the relevant set.
inline UserMetrics user_metrics(std::size_t user, std::span<const std::size_t> ranked,
                                std::span<const std::size_t> relevant, std::span<const std::size_t> ks) {
  UserMetrics m;
  m.user = user;
  m.n_relevant = relevant.size();
  for (std::size_t k : ks) {
    const auto hits = static_cast<double>(hits_at_k(ranked, relevant, k));
    m.precision.push_back(hits / static_cast<double>(k));
    m.recall.push_back(hits / static_cast<double>(relevant.size()));
    m.ndcg.push_back(ndcg_at_k(ranked, relevant, k).value_or(0.0));
  }
  return m;
}

/// Means over users in ascending user order.
inline MetricsReport aggregate(std::vector<UserMetrics> per_user, std::vector<std::size_t> ks) {
  MetricsReport out;
  out.ks = std::move(ks);
  out.precision.assign(out.ks.size(), 0.0);
  out.recall.assign(out.ks.size(), 0.0);
  out.ndcg.assign(out.ks.size(), 0.0);
  std::sort(per_user.begin(), per_user.end(), [](const UserMetrics& a, const UserMetrics& b) { return a.user < b.user; });
  for (const auto& m : per_user) {
    for (std::size_t k = 0; k < out.ks.size(); ++k) {
      out.precision[k] += m.precision[k];
      out.recall[k] += m.recall[k];
      out.ndcg[k] += m.ndcg[k];
    }
  }
  if (!per_user.empty()) {
    const auto n = static_cast<double>(per_user.size());
    for (std::size_t k = 0; k < out.ks.size(); ++k) {
      out.precision[k] /= n;
      out.recall[k] /= n;
      out.ndcg[k] /= n;
    }
  }
  out.per_user = std::move(per_user);
  return out;
}

/// Worker count for evaluation: DEBATER_THREADS if set, else hardware concurrency.
inline std::size_t evaluation_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DEBATER_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

/// Everything needed to rank: final embeddings and the time encoder.
struct RankingModel {
  Tensor users;  // layer-mean embeddings
  Tensor items;
  const ParameterStore* params = nullptr;
  bool use_time = true;
};

/// Full ranking per evaluated user at their query time. Candidates are items
/// seen in train that the user has not interacted with in train.
inline MetricsReport evaluate(const RankingModel& model, const SplitDataset& split,
                              std::vector<std::size_t> ks = {10, 20}) {
  const std::size_t n_items = split.n_items;
  const std::size_t d = model.users.cols();
  std::vector<char> seen_item(n_items, 0);
  std::vector<std::vector<std::size_t>> train_items(split.n_users), test_items(split.n_users);
  for (const auto& r : split.train) {
    seen_item[static_cast<std::size_t>(r.item)] = 1;
    train_items[static_cast<std::size_t>(r.user)].push_back(static_cast<std::size_t>(r.item));
  }
  for (const auto& r : split.test) test_items[static_cast<std::size_t>(r.user)].push_back(static_cast<std::size_t>(r.item));
  std::vector<std::size_t> users;
  for (std::size_t u = 0; u < split.n_users; ++u) {
    auto& t = test_items[u];
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    if (!t.empty() && split.query_time[u]) users.push_back(u);
  }
  const std::size_t k_max = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  std::vector<UserMetrics> results(users.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    std::vector<char> excluded(n_items);
    for (std::size_t idx = begin; idx < users.size(); idx += stride) {
      const std::size_t u = users[idx];
      std::vector<double> time(d, 0.0);
      if (model.use_time) time = encode_time(*split.query_time[u], *model.params);
      const auto scores = score_all(model.users.row(u), time, model.items);
      for (std::size_t i = 0; i < n_items; ++i) excluded[i] = !seen_item[i];
      for (std::size_t i : train_items[u]) excluded[i] = 1;
      const TopK top = rank_topk(scores, k_max, excluded);
      results[idx] = user_metrics(u, top.items, test_items[u], ks);
    }
  };
  const std::size_t n_threads = std::min(evaluation_threads(), std::max<std::size_t>(1, users.size()));
  if (n_threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
  }
  return aggregate(std::move(results), std::move(ks));
}

}  // namespace debater
