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
#include <span>
#include <string>
#include <vector>

#include "debater/core/rng.hpp"
#include "debater/data/time_scheme.hpp"
#include "debater/numerics/autodiff.hpp"
#include "debater/numerics/params.hpp"

namespace debater {

inline const std::string kUserEmbedding = "user_emb";
inline const std::string kItemEmbedding = "item_emb";

inline std::string time_table_name(std::size_t field) { return "time_enc." + std::to_string(field); }

/// Per-field sub-embedding widths: the first (d mod d_t) fields get one extra column.
inline std::vector<std::size_t> encoder_widths(std::size_t d, std::size_t n_fields) {
  if (n_fields == 0 || d < n_fields) throw Error(ErrorKind::config, "embedding width must be at least the number of time fields");
  std::vector<std::size_t> widths(n_fields, d / n_fields);
  for (std::size_t k = 0; k < d % n_fields; ++k) ++widths[k];
  return widths;
}

inline std::vector<std::string> time_table_names(std::size_t n_fields) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n_fields; ++k) out.push_back(time_table_name(k));
  return out;
}

/// Slots trained by the backbone optimizer: both embedding tables and every encoder table.
inline std::vector<std::string> backbone_slots(const TimeScheme& scheme) {
  std::vector<std::string> out{kUserEmbedding, kItemEmbedding};
  for (auto& n : time_table_names(scheme.dims())) out.push_back(std::move(n));
  return out;
}

/// Adds the embedding and encoder tables, uniform in +-0.1/sqrt(d).
inline void init_backbone(ParameterStore& params, std::size_t n_users, std::size_t n_items, const TimeScheme& scheme,
                          std::size_t d, Rng& rng) {
  const double half_width = 0.1 / std::sqrt(static_cast<double>(d));
  Tensor users(n_users, d);
  Tensor items(n_items, d);
  fill_uniform(users, half_width, rng);
  fill_uniform(items, half_width, rng);
  params.add(kUserEmbedding, std::move(users));
  params.add(kItemEmbedding, std::move(items));
  const auto widths = encoder_widths(d, scheme.dims());
  for (std::size_t k = 0; k < scheme.dims(); ++k) {
    Tensor table(scheme.cardinality(k), widths[k]);
    fill_uniform(table, half_width, rng);
    params.add(time_table_name(k), std::move(table));
  }
}

/// e_t for one timestamp: row selection in each field table, concatenated.
inline std::vector<double> encode_time(const DecomposedTimestamp& t, const ParameterStore& params) {
  std::vector<double> out;
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    const Tensor& table = params.value(time_table_name(k));
    const auto row = static_cast<std::size_t>(t.values[k]);
    if (row >= table.rows()) throw std::out_of_range("time index outside encoder table " + std::to_string(k));
    const auto r = table.row(row);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

/// e_t for a batch of timestamps as an n x d matrix.
inline Tensor encode_times(std::span<const DecomposedTimestamp> times, const ParameterStore& params, std::size_t d) {
  Tensor out(times.size(), d);
  for (std::size_t r = 0; r < times.size(); ++r) {
    const auto e = encode_time(times[r], params);
    std::copy(e.begin(), e.end(), out.row(r).begin());
  }
  return out;
}

/// Differentiable batch encoding on a tape.
inline ad::Var encode_times(std::span<const DecomposedTimestamp> times, const SlotVars& vars, std::size_t n_fields) {
  std::vector<ad::Var> parts;
  for (std::size_t k = 0; k < n_fields; ++k) {
    std::vector<std::size_t> rows(times.size());
    for (std::size_t r = 0; r < times.size(); ++r) rows[r] = static_cast<std::size_t>(times[r].values[k]);
    parts.push_back(ad::gather_rows(vars[time_table_name(k)], std::move(rows)));
  }
  return ad::concat_cols(parts);
}

inline std::vector<double> compose_time_aware(std::span<const double> embedding, std::span<const double> time_embedding) {
  if (embedding.size() != time_embedding.size()) throw std::invalid_argument("embedding widths differ");
  std::vector<double> out(embedding.begin(), embedding.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += time_embedding[k];
  return out;
}

}  // namespace debater
