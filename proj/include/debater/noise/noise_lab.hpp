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
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/core/rng.hpp"
#include "debater/data/interactions.hpp"
#include "debater/data/split.hpp"
#include "debater/data/time_scheme.hpp"

namespace debater {

enum class NoiseStrategy { uniform, prop_pop, inv_pop, prop_hourly_pop, inv_hourly_pop };

inline NoiseStrategy parse_noise_strategy(std::string_view name) {
  if (name == "uniform") return NoiseStrategy::uniform;
  if (name == "prop-pop") return NoiseStrategy::prop_pop;
  if (name == "inv-pop") return NoiseStrategy::inv_pop;
  if (name == "prop-hourly-pop") return NoiseStrategy::prop_hourly_pop;
  if (name == "inv-hourly-pop") return NoiseStrategy::inv_hourly_pop;
  throw Error(ErrorKind::config, "unknown noise strategy '" + std::string(name) + "'");
}

inline const char* to_string(NoiseStrategy s) {
  switch (s) {
    case NoiseStrategy::uniform: return "uniform";
    case NoiseStrategy::prop_pop: return "prop-pop";
    case NoiseStrategy::inv_pop: return "inv-pop";
    case NoiseStrategy::prop_hourly_pop: return "prop-hourly-pop";
    case NoiseStrategy::inv_hourly_pop: return "inv-hourly-pop";
  }
  return "?";
}

struct NoiseSpec {
  double fraction = 0.2;
  NoiseStrategy strategy = NoiseStrategy::uniform;
  std::uint64_t seed = 0;
};

/// Clean plus injected training records in chronological order; mask[k] is
/// true when train[k] was injected.
struct NoisyDataset {
  std::vector<TemporalInteraction> train;
  std::vector<bool> noise_mask;

  std::size_t injected() const { return static_cast<std::size_t>(std::count(noise_mask.begin(), noise_mask.end(), true)); }
};

constexpr std::size_t kHoursPerDay = 24;
using HourlyCounts = std::array<std::int64_t, kHoursPerDay>;

inline int utc_hour(Epoch epoch) { return static_cast<int>((epoch % 86400) / 3600); }

inline std::vector<std::int64_t> item_popularity(std::span<const TemporalInteraction> train, std::size_t n_items) {
  std::vector<std::int64_t> counts(n_items, 0);
  for (const auto& rec : train) ++counts[static_cast<std::size_t>(rec.item)];
  return counts;
}

inline std::vector<HourlyCounts> hourly_item_popularity(std::span<const TemporalInteraction> train,
                                                        std::size_t n_items) {
  std::vector<HourlyCounts> counts(n_items);
  for (auto& row : counts) row.fill(0);
  for (const auto& rec : train) ++counts[static_cast<std::size_t>(rec.item)][static_cast<std::size_t>(utc_hour(rec.epoch))];
  return counts;
}

namespace detail {

/// Item sampler over a fixed non-negative weight vector (cumulative sums +
/// binary search; zero-weight items are never drawn).
class CumulativeSampler {
 public:
  CumulativeSampler() = default;
  explicit CumulativeSampler(std::span<const double> weights) : cdf_(weights.size()) {
    double acc = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      acc += weights[j];
      cdf_[j] = acc;
    }
  }

  bool empty() const { return cdf_.empty() || cdf_.back() <= 0.0; }

  std::size_t draw(Rng& rng) const {
    const double x = rng.uniform01() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
    if (it == cdf_.end()) --it;
    // Skip zero-width buckets that share the boundary value.
    std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
    while (j > 0 && cdf_[j] == cdf_[j - 1]) --j;
    return j;
  }

 private:
  std::vector<double> cdf_;
};

inline std::vector<double> strategy_weights(NoiseStrategy strategy, std::span<const std::int64_t> counts) {
  std::vector<double> w(counts.size(), 0.0);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    const auto c = static_cast<double>(counts[j]);
    if (strategy == NoiseStrategy::uniform) {
      w[j] = 1.0;
      continue;
    }
    if (c <= 0.0) continue;
    switch (strategy) {
      case NoiseStrategy::uniform: break;
      case NoiseStrategy::prop_pop:
      case NoiseStrategy::prop_hourly_pop: w[j] = c; break;
      case NoiseStrategy::inv_pop:
      case NoiseStrategy::inv_hourly_pop: w[j] = 1.0 / c; break;
    }
  }
  return w;
}

}  // namespace detail

/// Item-draw probability law of a strategy at a given UTC hour (hour is
/// ignored by the non-hourly strategies). Uniform covers the whole catalog;
/// the popularity-based laws give items absent from the clean train no mass.
inline std::vector<double> noise_item_law(std::span<const TemporalInteraction> clean_train, std::size_t n_items,
                                          NoiseStrategy strategy, int hour) {
  const bool hourly = strategy == NoiseStrategy::prop_hourly_pop || strategy == NoiseStrategy::inv_hourly_pop;
  std::vector<std::int64_t> counts;
  if (hourly) {
    const auto table = hourly_item_popularity(clean_train, n_items);
    counts.resize(n_items);
    for (std::size_t j = 0; j < n_items; ++j) counts[j] = table[j][static_cast<std::size_t>(hour)];
  } else {
    counts = item_popularity(clean_train, n_items);
  }
  auto w = detail::strategy_weights(strategy, counts);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total > 0.0) {
    for (auto& x : w) x /= total;
  }
  return w;
}

/// Adds floor(fraction * |train|) synthetic interactions. Each draw picks a
/// user uniformly among users active in train, one of that user's train
/// timestamps uniformly, then an item from the strategy's law; draws that
/// hit an existing or already injected (user, item) pair are redrawn.
inline NoisyDataset inject_noise(std::span<const TemporalInteraction> clean_train, std::size_t n_items,
                                 const NoiseSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction <= 1.0)) {
    throw Error(ErrorKind::config, "noise fraction must lie in (0, 1]");
  }
  if (clean_train.empty()) throw Error(ErrorKind::empty_dataset, "cannot inject noise into an empty train set");

  const auto required =
      static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(clean_train.size())));

  std::vector<std::vector<Epoch>> user_epochs;
  std::vector<UserId> active_users;
  std::unordered_set<std::uint64_t> taken;
  const auto key = [n_items](UserId u, ItemId i) {
    return static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(n_items) + static_cast<std::uint64_t>(i);
  };
  for (const auto& rec : clean_train) {
    const auto u = static_cast<std::size_t>(rec.user);
    if (u >= user_epochs.size()) user_epochs.resize(u + 1);
    if (user_epochs[u].empty()) active_users.push_back(rec.user);
    user_epochs[u].push_back(rec.epoch);
    taken.insert(key(rec.user, rec.item));
  }
  std::sort(active_users.begin(), active_users.end());

  const auto popularity = item_popularity(clean_train, n_items);
  const auto item_weights = detail::strategy_weights(spec.strategy, popularity);
  const std::size_t item_universe =
      static_cast<std::size_t>(std::count_if(item_weights.begin(), item_weights.end(), [](double w) { return w > 0.0; }));
  const std::size_t free_pairs = active_users.size() * item_universe - taken.size();
  if (required > free_pairs) {
    throw Error(ErrorKind::injection, "need " + std::to_string(required) + " noisy pairs but only " +
                                          std::to_string(free_pairs) + " free pairs exist (shortfall " +
                                          std::to_string(required - free_pairs) + ")");
  }

  const bool hourly =
      spec.strategy == NoiseStrategy::prop_hourly_pop || spec.strategy == NoiseStrategy::inv_hourly_pop;
  std::vector<detail::CumulativeSampler> samplers;
  if (hourly) {
    const auto table = hourly_item_popularity(clean_train, n_items);
    std::vector<std::int64_t> counts(n_items);
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
      for (std::size_t j = 0; j < n_items; ++j) counts[j] = table[j][h];
      const auto w = detail::strategy_weights(spec.strategy, counts);
      samplers.emplace_back(w);
    }
  } else {
    samplers.emplace_back(item_weights);
  }

  Rng rng = Rng::stream(spec.seed, 0x401CE);
  std::vector<TemporalInteraction> injected;
  injected.reserve(required);
  const std::size_t max_attempts = 200 * required + 100000;
  std::size_t attempts = 0;
  while (injected.size() < required) {
    if (++attempts > max_attempts) {
      throw Error(ErrorKind::injection, "placed " + std::to_string(injected.size()) + " of " +
                                            std::to_string(required) + " noisy pairs before saturating (shortfall " +
                                            std::to_string(required - injected.size()) + ")");
    }
    const UserId u = active_users[rng.uniform_index(active_users.size())];
    const auto& epochs = user_epochs[static_cast<std::size_t>(u)];
    const Epoch t = epochs[rng.uniform_index(epochs.size())];
    const auto& sampler = hourly ? samplers[static_cast<std::size_t>(utc_hour(t))] : samplers.front();
    if (sampler.empty()) continue;
    const auto item = static_cast<ItemId>(sampler.draw(rng));
    if (!taken.insert(key(u, item)).second) continue;
    injected.push_back({u, item, t, std::nullopt});
  }

  struct Tagged {
    TemporalInteraction rec;
    bool noisy;
  };
  std::vector<Tagged> merged;
  merged.reserve(clean_train.size() + injected.size());
  for (const auto& rec : clean_train) merged.push_back({rec, false});
  for (const auto& rec : injected) merged.push_back({rec, true});
  std::stable_sort(merged.begin(), merged.end(), [](const Tagged& a, const Tagged& b) {
    if (a.rec.epoch != b.rec.epoch) return a.rec.epoch < b.rec.epoch;
    if (a.rec.user != b.rec.user) return a.rec.user < b.rec.user;
    return a.rec.item < b.rec.item;
  });

  NoisyDataset out;
  out.train.reserve(merged.size());
  out.noise_mask.reserve(merged.size());
  for (const auto& t : merged) {
    out.train.push_back(t.rec);
    out.noise_mask.push_back(t.noisy);
  }
  return out;
}

inline NoisyDataset inject_noise(const SplitDataset& clean, const NoiseSpec& spec) {
  return inject_noise(clean.train, clean.n_items, spec);
}

/// The clean split with its train side replaced by the noisy one. Query
/// times and the time scheme stay those of the clean data.
inline SplitDataset with_noisy_train(const SplitDataset& clean, const NoisyDataset& noisy) {
  SplitDataset out = clean;
  out.train = noisy.train;
  return out;
}

inline void write_noise_mask(std::ostream& out, const NoisyDataset& noisy) {
  for (bool b : noisy.noise_mask) out << (b ? '1' : '0') << '\n';
}

}  // namespace debater
