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

#include <cstdlib>
#include <numeric>

#include "debater/data/split.hpp"
#include "debater/eval/metrics.hpp"
#include "support.hpp"

namespace debater {
namespace {

TEST(Ndcg, Examples) {
  const std::vector<std::size_t> rel{4, 7};
  EXPECT_DOUBLE_EQ(*ndcg_at_k(std::vector<std::size_t>{7, 4, 1}, rel, 3), 1.0);
  EXPECT_DOUBLE_EQ(*ndcg_at_k(std::vector<std::size_t>{1, 2, 3}, rel, 3), 0.0);
  const std::vector<std::size_t> a{0};
  EXPECT_NEAR(*ndcg_at_k(std::vector<std::size_t>{1, 0}, a, 2), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(*ndcg_at_k(std::vector<std::size_t>{1, 0}, a, 2), 0.63093, 1e-5);
  EXPECT_FALSE(ndcg_at_k(std::vector<std::size_t>{1, 0}, std::vector<std::size_t>{}, 2).has_value());
}

TEST(UserMetrics, SingleHit) {
  const std::vector<std::size_t> ranked{5, 1, 2, 3, 4, 6, 7, 8, 9, 10};
  const std::vector<std::size_t> rel{5};
  const std::vector<std::size_t> ks{10};
  const auto m = user_metrics(0, ranked, rel, ks);
  EXPECT_DOUBLE_EQ(m.precision[0], 0.1);
  EXPECT_DOUBLE_EQ(m.recall[0], 1.0);
  EXPECT_DOUBLE_EQ(m.ndcg[0], 1.0);
}

TEST(UserMetrics, PrecisionRecallConsistency) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto perm = rng.permutation(30);
    const std::vector<std::size_t> ranked(perm.begin(), perm.begin() + 25);
    std::vector<std::size_t> rel;
    for (std::size_t i = 0; i < 30; ++i)
      if (rng.uniform01() < 0.2) rel.push_back(i);
    if (rel.empty()) rel.push_back(3);
    const std::vector<std::size_t> ks{1, 5, 10, 20, 25};
    const auto m = user_metrics(0, ranked, rel, ks);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      EXPECT_NEAR(m.precision[j] * static_cast<double>(ks[j]), static_cast<double>(hits_at_k(ranked, rel, ks[j])), 1e-12);
      EXPECT_GE(m.ndcg[j], 0.0);
      EXPECT_LE(m.ndcg[j], 1.0 + 1e-12);
      if (j > 0) {
        EXPECT_GE(m.recall[j], m.recall[j - 1]);
      }
    }
  }
}

TEST(Aggregate, MeansInUserOrder) {
  const std::vector<std::size_t> ks{2};
  std::vector<UserMetrics> per{{3, 1, {0.5}, {1.0}, {1.0}}, {1, 2, {0.0}, {0.0}, {0.0}}};
  const auto r = aggregate(per, ks);
  EXPECT_DOUBLE_EQ(r.precision_at(2), 0.25);
  EXPECT_DOUBLE_EQ(r.value("recall", 2), 0.5);
  EXPECT_EQ(r.per_user.front().user, 1u);
  EXPECT_THROW(r.ndcg_at(5), std::out_of_range);
}

// ---- full evaluation against an exhaustive oracle ---------------------------

// Metrics of one user by enumerating every ordering of the candidates and
// keeping the one consistent with the score order (ties to the smaller id).
std::array<double, 3> brute_force(const std::vector<std::size_t>& candidates, const std::vector<double>& scores,
                                  const std::vector<std::size_t>& relevant, std::size_t k) {
  std::vector<std::size_t> order = candidates;
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> ranked;
  do {
    bool ok = true;
    for (std::size_t r = 0; r + 1 < order.size() && ok; ++r) {
      const auto a = order[r], b = order[r + 1];
      ok = scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    }
    if (ok) ranked = order;
  } while (std::next_permutation(order.begin(), order.end()));
  double hits = 0.0, dcg = 0.0, idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (std::count(relevant.begin(), relevant.end(), ranked[r])) {
      hits += 1.0;
      dcg += 1.0 / std::log2(r + 2.0);
    }
  }
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) idcg += 1.0 / std::log2(r + 2.0);
  return {hits / static_cast<double>(k), hits / static_cast<double>(relevant.size()), dcg / idcg};
}

TEST(Evaluate, MatchesExhaustiveOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t nu = 4, ni = 8, d = 3;
    SplitDataset split;
    split.n_users = nu;
    split.n_items = ni;
    split.scheme = TimeScheme{{TimeField::hour}, {{0}}};
    split.query_epoch.assign(nu, std::nullopt);
    split.query_time.assign(nu, std::nullopt);
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t i = 0; i < ni; ++i) {
        const double p = rng.uniform01();
        if (p < 0.3) split.train.push_back({static_cast<UserId>(u), static_cast<ItemId>(i), 0, std::nullopt});
        else if (p < 0.5 && i != ni - 1) split.test.push_back({static_cast<UserId>(u), static_cast<ItemId>(i), 10, std::nullopt});
      }
      split.query_epoch[u] = 10;
      split.query_time[u] = DecomposedTimestamp{{0}};
    }
    RankingModel model;
    model.users = testing::random_tensor(nu, d, rng);
    model.items = testing::random_tensor(ni, d, rng);
    for (std::size_t i = 0; i < ni; i += 3) model.items(i, 0) = model.items(i, 1) = model.items(i, 2) = 0.0;  // ties
    model.use_time = false;
    const std::vector<std::size_t> ks{1, 3, 5};
    const auto report = evaluate(model, split, ks);

    std::vector<char> seen(ni, 0);
    for (const auto& r : split.train) seen[r.item] = 1;
    std::vector<std::array<double, 3>> sums(ks.size(), {0.0, 0.0, 0.0});
    double n_users = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      std::vector<std::size_t> relevant, candidates;
      for (const auto& r : split.test)
        if (static_cast<std::size_t>(r.user) == u) relevant.push_back(r.item);
      if (relevant.empty()) continue;
      for (std::size_t i = 0; i < ni; ++i) {
        bool in_train = false;
        for (const auto& r : split.train) in_train |= static_cast<std::size_t>(r.user) == u && static_cast<std::size_t>(r.item) == i;
        if (seen[i] && !in_train) candidates.push_back(i);
      }
      std::vector<double> scores(ni);
      for (std::size_t i = 0; i < ni; ++i) scores[i] = dot(model.users.row(u), model.items.row(i));
      n_users += 1.0;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const auto m = brute_force(candidates, scores, relevant, ks[j]);
        for (int q = 0; q < 3; ++q) sums[j][q] += m[q];
      }
    }
    ASSERT_EQ(report.per_user.size(), static_cast<std::size_t>(n_users));
    for (std::size_t j = 0; j < ks.size(); ++j) {
      EXPECT_NEAR(report.precision[j], sums[j][0] / n_users, 1e-12) << "seed " << seed;
      EXPECT_NEAR(report.recall[j], sums[j][1] / n_users, 1e-12) << "seed " << seed;
      EXPECT_NEAR(report.ndcg[j], sums[j][2] / n_users, 1e-12) << "seed " << seed;
    }
  }
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  Rng rng(4);
  SplitDataset split;
  split.n_users = 40;
  split.n_items = 30;
  split.scheme = TimeScheme{{TimeField::hour}, {{0, 1}}};
  for (std::size_t u = 0; u < 40; ++u) {
    for (int k = 0; k < 6; ++k) split.train.push_back({static_cast<UserId>(u), static_cast<ItemId>(rng.uniform_index(30)), 0, std::nullopt});
    split.test.push_back({static_cast<UserId>(u), static_cast<ItemId>(rng.uniform_index(30)), 3600, std::nullopt});
    split.query_epoch.push_back(3600);
    split.query_time.push_back(DecomposedTimestamp{{1}});
  }
  ParameterStore params;
  params.add(time_table_name(0), testing::random_tensor(2, 4, rng));
  RankingModel model{testing::random_tensor(40, 4, rng), testing::random_tensor(30, 4, rng), &params, true};
  ::setenv("DEBATER_THREADS", "1", 1);
  const auto one = evaluate(model, split);
  ::setenv("DEBATER_THREADS", "4", 1);
  const auto four = evaluate(model, split);
  ::unsetenv("DEBATER_THREADS");
  EXPECT_EQ(one.precision, four.precision);
  EXPECT_EQ(one.recall, four.recall);
  EXPECT_EQ(one.ndcg, four.ndcg);
}

TEST(Evaluate, RandomModelOnMl100kIsNearChance) {
  REQUIRE_ML100K();
  const auto log = load_interactions(testing::ml100k_path(), DatasetFormat::ml100k_tab);
  const auto split = sequential_split(log.records, 0.7, {TimeField::hour}, log.n_users(), log.n_items());
  Rng rng(0);
  RankingModel model{testing::random_tensor(split.n_users, 8, rng), testing::random_tensor(split.n_items, 8, rng),
                     nullptr, false};
  const auto report = evaluate(model, split);
  const double chance = 20.0 / static_cast<double>(split.n_items);
  EXPECT_GT(report.recall_at(20), chance / 2.0);
  EXPECT_LT(report.recall_at(20), chance * 2.0);
}

}  // namespace
}  // namespace debater
