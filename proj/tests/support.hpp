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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "debater/numerics/autodiff.hpp"
#include "debater/numerics/params.hpp"

namespace debater::testing {

inline std::string ml100k_path() { return DEBATER_ML100K_PATH; }

inline bool have_ml100k() { return std::filesystem::exists(ml100k_path()); }

#define REQUIRE_ML100K() \
  if (!::debater::testing::have_ml100k()) GTEST_SKIP() << "ML-100K not found at " << ::debater::testing::ml100k_path()

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double half_width = 1.0) {
  Tensor t(rows, cols);
  fill_uniform(t, half_width, rng);
  return t;
}

/// Relative error with an absolute floor so near-zero entries do not blow up.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central-difference check of d f / d inputs against the tape gradient.
/// f builds a scalar from variables bound to `inputs`.
using TapeFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

inline double max_fd_error(std::vector<Tensor> inputs, const TapeFn& f, double step = 1e-4, double floor = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& x : xs) vars.push_back(tape.variable(x));
    return f(tape, vars).value().item();
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  const ad::Var out = f(tape, vars);
  tape.backward(out);
  double worst = 0.0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor analytic = tape.grad(vars[a]);
    for (std::size_t k = 0; k < inputs[a].size(); ++k) {
      auto plus = inputs, minus = inputs;
      plus[a].data()[k] += step;
      minus[a].data()[k] -= step;
      const double numeric = (eval(plus) - eval(minus)) / (2.0 * step);
      worst = std::max(worst, rel_error(analytic.data()[k], numeric, floor));
    }
  }
  return worst;
}

}  // namespace debater::testing
