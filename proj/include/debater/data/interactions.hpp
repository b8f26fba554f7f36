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
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/core/rng.hpp"

namespace debater {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using Epoch = std::int64_t;

/// One implicit-feedback record after index densification.
struct TemporalInteraction {
  UserId user = 0;
  ItemId item = 0;
  Epoch epoch = 0;
  std::optional<double> rating;

  friend bool operator==(const TemporalInteraction&, const TemporalInteraction&) = default;
};

enum class DatasetFormat { ml100k_tab, csv_uirt };

inline DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "ml100k-tab") return DatasetFormat::ml100k_tab;
  if (name == "csv-uirt") return DatasetFormat::csv_uirt;
  throw Error(ErrorKind::config, "unknown dataset format '" + std::string(name) + "'");
}

inline const char* to_string(DatasetFormat format) {
  return format == DatasetFormat::ml100k_tab ? "ml100k-tab" : "csv-uirt";
}

/// Loaded records plus the dense-id -> original-id maps.
struct InteractionLog {
  std::vector<TemporalInteraction> records;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::size_t dropped_below_floor = 0;

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

struct RawRecord {
  std::string user;
  std::string item;
  Epoch epoch;
  std::optional<double> rating;
};

/// Dense ids follow numeric order when every id is an integer, else
/// lexicographic order, so the mapping never depends on file order.
inline std::vector<std::string> ordered_ids(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) {
    return parse_number<std::int64_t>(s).has_value();
  });
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      return *parse_number<std::int64_t>(a) < *parse_number<std::int64_t>(b);
    });
  }
  return ids;
}

}  // namespace detail

/// Parses `ml100k-tab` ("user\titem\trating\tepoch") or `csv-uirt`
/// (header line, then "user,item,rating,epoch"; rating may be empty).
/// Records rated below `rating_floor` are dropped before densification.
inline InteractionLog parse_interactions(std::istream& in, DatasetFormat format,
                                         std::optional<double> rating_floor = std::nullopt) {
  std::vector<detail::RawRecord> raw;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dropped = 0;
  const char sep = format == DatasetFormat::ml100k_tab ? '\t' : ',';
  bool header_pending = format == DatasetFormat::csv_uirt;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = detail::split(view, sep);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields, found " + std::to_string(fields.size()));
    }
    detail::RawRecord rec;
    rec.user = std::string(detail::trim(fields[0]));
    rec.item = std::string(detail::trim(fields[1]));
    if (rec.user.empty() || rec.item.empty()) throw ParseError(line_no, "empty user or item id");
    const std::string_view rating_field = detail::trim(fields[2]);
    if (!rating_field.empty()) {
      rec.rating = detail::parse_number<double>(rating_field);
      if (!rec.rating) throw ParseError(line_no, "bad rating '" + std::string(rating_field) + "'");
    } else if (format == DatasetFormat::ml100k_tab) {
      throw ParseError(line_no, "missing rating");
    }
    const auto epoch = detail::parse_number<Epoch>(fields[3]);
    if (!epoch) throw ParseError(line_no, "bad epoch '" + std::string(detail::trim(fields[3])) + "'");
    if (*epoch < 0) throw ParseError(line_no, "negative epoch");
    rec.epoch = *epoch;
    if (rating_floor && rec.rating && *rec.rating < *rating_floor) {
      ++dropped;
      continue;
    }
    raw.push_back(std::move(rec));
  }
  if (raw.empty()) throw Error(ErrorKind::empty_dataset, "no records left after filtering");

  InteractionLog log;
  log.dropped_below_floor = dropped;
  std::vector<std::string> users, items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& r : raw) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  log.user_ids = detail::ordered_ids(std::move(users));
  log.item_ids = detail::ordered_ids(std::move(items));
  std::unordered_map<std::string, UserId> user_index;
  std::unordered_map<std::string, ItemId> item_index;
  for (std::size_t i = 0; i < log.user_ids.size(); ++i) user_index.emplace(log.user_ids[i], static_cast<UserId>(i));
  for (std::size_t i = 0; i < log.item_ids.size(); ++i) item_index.emplace(log.item_ids[i], static_cast<ItemId>(i));
  log.records.reserve(raw.size());
  for (const auto& r : raw) {
    log.records.push_back({user_index.at(r.user), item_index.at(r.item), r.epoch, r.rating});
  }
  return log;
}

inline InteractionLog load_interactions(const std::string& path, DatasetFormat format,
                                        std::optional<double> rating_floor = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return parse_interactions(in, format, rating_floor);
}

/// Writes records as csv-uirt using the original ids when available.
inline void write_csv_uirt(std::ostream& out, const std::vector<TemporalInteraction>& records,
                           const std::vector<std::string>* user_ids = nullptr,
                           const std::vector<std::string>* item_ids = nullptr) {
  out << "user,item,rating,epoch\n";
  for (const auto& r : records) {
    if (user_ids) out << (*user_ids)[static_cast<std::size_t>(r.user)];
    else out << r.user;
    out << ',';
    if (item_ids) out << (*item_ids)[static_cast<std::size_t>(r.item)];
    else out << r.item;
    out << ',';
    if (r.rating) out << *r.rating;
    out << ',' << r.epoch << '\n';
  }
}

inline std::string fingerprint(const std::vector<TemporalInteraction>& records) {
  Fnv1a h;
  for (const auto& r : records) {
    h.update_value(r.user);
    h.update_value(r.item);
    h.update_value(r.epoch);
  }
  return h.hex();
}

}  // namespace debater
