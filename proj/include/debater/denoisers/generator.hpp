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
#include <string>
#include <vector>

#include "debater/core/rng.hpp"
#include "debater/numerics/autodiff.hpp"
#include "debater/numerics/params.hpp"

namespace debater {

inline const std::string kGeneratorPrefix = "gen.";

inline std::vector<std::string> generator_slots() {
  return {"gen.w1", "gen.b1", "gen.w2", "gen.b2", "gen.w3", "gen.b3"};
}

/// 3d -> d -> d -> 1 MLP with tanh hidden units and a sigmoid output.
/// Weights are uniform in +-1/sqrt(fan_in), biases start at zero.
inline void init_generator(ParameterStore& params, std::size_t d, Rng& rng) {
  auto layer = [&](const std::string& w, const std::string& b, std::size_t fan_in, std::size_t fan_out) {
    Tensor weight(fan_in, fan_out);
    fill_uniform(weight, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    params.add(w, std::move(weight));
    params.add(b, Tensor(1, fan_out));
  };
  layer("gen.w1", "gen.b1", 3 * d, d);
  layer("gen.w2", "gen.b2", d, d);
  layer("gen.w3", "gen.b3", d, 1);
}

/// Weights for each row of inputs (n x 3d), as an n x 1 column in (0, 1).
inline ad::Var generator_forward(ad::Var inputs, const SlotVars& vars) {
  const ad::Var h1 = ad::tanh(ad::add_row(ad::matmul(inputs, vars["gen.w1"]), vars["gen.b1"]));
  const ad::Var h2 = ad::tanh(ad::add_row(ad::matmul(h1, vars["gen.w2"]), vars["gen.b2"]));
  return ad::sigmoid(ad::add_row(ad::matmul(h2, vars["gen.w3"]), vars["gen.b3"]));
}

/// Value-only forward for one (e_u, e_i, e_t) triple.
inline double generator_forward(const ParameterStore& params, std::span<const double> user, std::span<const double> item,
                                std::span<const double> time) {
  ad::Tape tape;
  SlotVars vars;
  for (const auto& name : generator_slots()) vars.bind(name, tape.constant(params.value(name)));
  std::vector<double> x(user.begin(), user.end());
  x.insert(x.end(), item.begin(), item.end());
  x.insert(x.end(), time.begin(), time.end());
  return generator_forward(tape.constant(Tensor::row_vector(std::move(x))), vars).value().item();
}

}  // namespace debater
