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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/numerics/params.hpp"

namespace debater {

inline constexpr char kCheckpointMagic[8] = {'D', 'B', 'T', 'R', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  std::string metadata;  // free-form JSON (config, dataset fingerprint, epoch)
  std::string rng_state;
  ParameterStore params;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  write_u64(out, t.rows());
  write_u64(out, t.cols());
  out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorKind::checkpoint, "truncated checkpoint");
  return v;
}

inline std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1ULL << 32)) throw Error(ErrorKind::checkpoint, "implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error(ErrorKind::checkpoint, "truncated checkpoint");
  return s;
}

inline Tensor read_tensor(std::istream& in) {
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  if (rows * cols > (1ULL << 32)) throw Error(ErrorKind::checkpoint, "implausible tensor shape");
  Tensor t(rows, cols);
  in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::checkpoint, "truncated checkpoint");
  return t;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u64(out, kCheckpointVersion);
  detail::write_string(out, ckpt.metadata);
  detail::write_string(out, ckpt.rng_state);
  detail::write_u64(out, ckpt.params.slots().size());
  for (const auto& slot : ckpt.params.slots()) {
    detail::write_string(out, slot.name);
    detail::write_u64(out, static_cast<std::uint64_t>(slot.steps));
    detail::write_tensor(out, slot.value);
    detail::write_tensor(out, slot.first_moment);
    detail::write_tensor(out, slot.second_moment);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw Error(ErrorKind::checkpoint, "not a checkpoint file (bad magic)");
  }
  const std::uint64_t version = detail::read_u64(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::checkpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata = detail::read_string(in);
  ckpt.rng_state = detail::read_string(in);
  const std::uint64_t n = detail::read_u64(in);
  for (std::uint64_t k = 0; k < n; ++k) {
    std::string name = detail::read_string(in);
    const auto steps = static_cast<std::int64_t>(detail::read_u64(in));
    ParameterSlot& slot = ckpt.params.add(name, detail::read_tensor(in));
    slot.steps = steps;
    slot.first_moment = detail::read_tensor(in);
    slot.second_moment = detail::read_tensor(in);
    if (!slot.first_moment.same_shape(slot.value) || !slot.second_moment.same_shape(slot.value)) {
      throw Error(ErrorKind::checkpoint, "moment shape mismatch in slot '" + name + "'");
    }
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace debater
