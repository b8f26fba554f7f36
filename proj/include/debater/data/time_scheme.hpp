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
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/data/interactions.hpp"

namespace debater {

enum class TimeField { year, month, day_of_month, day_of_week, hour, minute, second };

inline TimeField parse_time_field(std::string_view name) {
  if (name == "year") return TimeField::year;
  if (name == "month") return TimeField::month;
  if (name == "day-of-month") return TimeField::day_of_month;
  if (name == "day-of-week") return TimeField::day_of_week;
  if (name == "hour") return TimeField::hour;
  if (name == "minute") return TimeField::minute;
  if (name == "second") return TimeField::second;
  throw Error(ErrorKind::config, "unknown time field '" + std::string(name) + "'");
}

inline const char* to_string(TimeField field) {
  switch (field) {
    case TimeField::year: return "year";
    case TimeField::month: return "month";
    case TimeField::day_of_month: return "day-of-month";
    case TimeField::day_of_week: return "day-of-week";
    case TimeField::hour: return "hour";
    case TimeField::minute: return "minute";
    case TimeField::second: return "second";
  }
  return "?";
}

/// UTC calendar fields of an epoch. Day-of-week counts from Sunday = 0.
struct CalendarFields {
  int year;
  int month;
  int day_of_month;
  int day_of_week;
  int hour;
  int minute;
  int second;

  int get(TimeField field) const {
    switch (field) {
      case TimeField::year: return year;
      case TimeField::month: return month;
      case TimeField::day_of_month: return day_of_month;
      case TimeField::day_of_week: return day_of_week;
      case TimeField::hour: return hour;
      case TimeField::minute: return minute;
      case TimeField::second: return second;
    }
    return 0;
  }
};

inline CalendarFields calendar_fields(Epoch epoch) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{epoch}};
  const sys_days day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  return {static_cast<int>(ymd.year()),
          static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())),
          static_cast<int>(weekday{day}.c_encoding()),
          static_cast<int>(hms.hours().count()),
          static_cast<int>(hms.minutes().count()),
          static_cast<int>(hms.seconds().count())};
}

inline std::vector<int> raw_fields(Epoch epoch, std::span<const TimeField> fields) {
  const CalendarFields cal = calendar_fields(epoch);
  std::vector<int> out;
  out.reserve(fields.size());
  for (TimeField f : fields) out.push_back(cal.get(f));
  return out;
}

/// Dense per-field indices of one timestamp.
struct DecomposedTimestamp {
  std::vector<int> values;

  friend bool operator==(const DecomposedTimestamp&, const DecomposedTimestamp&) = default;
};

/// Ordered calendar fields with the sorted raw values seen in training;
/// the cardinality of field i is vocab[i].size().
struct TimeScheme {
  std::vector<TimeField> fields;
  std::vector<std::vector<int>> vocab;

  std::size_t dims() const { return fields.size(); }
  std::size_t cardinality(std::size_t i) const { return vocab[i].size(); }

  std::vector<std::size_t> cardinalities() const {
    std::vector<std::size_t> out;
    for (const auto& v : vocab) out.push_back(v.size());
    return out;
  }
};

/// Out-of-vocabulary raw values map to the nearest seen value (the lower one
/// on ties), so decomposition never fails once the scheme is fitted.
inline DecomposedTimestamp decompose(Epoch epoch, const TimeScheme& scheme) {
  const CalendarFields cal = calendar_fields(epoch);
  DecomposedTimestamp out;
  out.values.reserve(scheme.dims());
  for (std::size_t i = 0; i < scheme.dims(); ++i) {
    const auto& vocab = scheme.vocab[i];
    const int raw = cal.get(scheme.fields[i]);
    auto it = std::lower_bound(vocab.begin(), vocab.end(), raw);
    std::size_t idx;
    if (it == vocab.end()) {
      idx = vocab.size() - 1;
    } else if (*it == raw || it == vocab.begin()) {
      idx = static_cast<std::size_t>(it - vocab.begin());
    } else {
      const int above = *it;
      const int below = *(it - 1);
      idx = static_cast<std::size_t>(it - vocab.begin());
      if (raw - below <= above - raw) --idx;
    }
    out.values.push_back(static_cast<int>(idx));
  }
  return out;
}

inline TimeScheme fit_scheme(std::span<const TemporalInteraction> train, std::vector<TimeField> fields) {
  if (train.empty()) throw Error(ErrorKind::empty_dataset, "cannot fit a time scheme on no records");
  if (fields.empty()) throw Error(ErrorKind::config, "time scheme needs at least one field");
  TimeScheme scheme;
  scheme.fields = std::move(fields);
  scheme.vocab.resize(scheme.fields.size());
  for (const auto& rec : train) {
    const CalendarFields cal = calendar_fields(rec.epoch);
    for (std::size_t i = 0; i < scheme.fields.size(); ++i) scheme.vocab[i].push_back(cal.get(scheme.fields[i]));
  }
  for (auto& v : scheme.vocab) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return scheme;
}

}  // namespace debater
