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
#include <vector>

#include "debater/graph/adjacency.hpp"
#include "debater/model/encoder.hpp"
#include "debater/numerics/autodiff.hpp"

namespace debater {

/// (cos(a, b) + 1) / 2 with each norm guarded, clamped to [0, 1].
inline double shifted_cosine(std::span<const double> a, std::span<const double> b) {
  const double c = dot(a, b) / ((l2_norm(a) + ad::kNormGuard) * (l2_norm(b) + ad::kNormGuard));
  return std::clamp((c + 1.0) / 2.0, 0.0, 1.0);
}

/// Per-edge reliability from layer-0 embeddings, each shifted by the edge's own
/// time embedding unless use_time is off.
inline std::vector<double> reliability(const SparseBipartiteAdjacency& adj, const InteractionTimeIndex& index,
                                       const ParameterStore& params, bool use_time) {
  const Tensor& users = params.value(kUserEmbedding);
  const Tensor& items = params.value(kItemEmbedding);
  const std::size_t d = users.cols();
  std::vector<double> out(adj.entries.size());
  std::vector<double> a(d), b(d);
  for (std::size_t k = 0; k < adj.entries.size(); ++k) {
    const auto u = users.row(static_cast<std::size_t>(adj.entries[k].user));
    const auto i = items.row(static_cast<std::size_t>(adj.entries[k].item));
    std::copy(u.begin(), u.end(), a.begin());
    std::copy(i.begin(), i.end(), b.begin());
    if (use_time) {
      const auto t = encode_time(index.times[k], params);
      for (std::size_t c = 0; c < d; ++c) {
        a[c] += t[c];
        b[c] += t[c];
      }
    }
    out[k] = shifted_cosine(a, b);
  }
  return out;
}

/// Deciles (0%, 10%, ..., 100% order statistics) of a score vector.
inline std::array<double, 11> deciles(std::vector<double> values) {
  std::array<double, 11> out{};
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  for (std::size_t q = 0; q <= 10; ++q) {
    const std::size_t idx = (values.size() - 1) * q / 10;
    out[q] = values[idx];
  }
  return out;
}

}  // namespace debater
