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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace debater {

enum class ErrorKind {
  parse,
  empty_dataset,
  split,
  injection,
  config,
  numerical_fault,
  empty_graph,
  io,
  checkpoint,
  divergence,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::empty_dataset: return "empty dataset";
    case ErrorKind::split: return "split error";
    case ErrorKind::injection: return "injection error";
    case ErrorKind::config: return "config error";
    case ErrorKind::numerical_fault: return "numerical fault";
    case ErrorKind::empty_graph: return "empty graph";
    case ErrorKind::io: return "io error";
    case ErrorKind::checkpoint: return "checkpoint error";
    case ErrorKind::divergence: return "divergence";
  }
  return "error";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace debater
