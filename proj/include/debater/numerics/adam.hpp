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

#include "debater/numerics/params.hpp"

namespace debater {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam update with decoupled weight decay, applied to the slots present in
/// the bundle only. The shrinkage uses the pre-update parameter value.
inline void step(ParameterStore& params, const GradientBundle& grads, double lr, double weight_decay,
                 const AdamOptions& opt = {}) {
  if (!(lr > 0.0)) throw Error(ErrorKind::config, "learning rate must be positive");
  if (weight_decay < 0.0) throw Error(ErrorKind::config, "weight decay must be non-negative");
  for (const auto& [name, g] : grads) {
    ParameterSlot& slot = params.slot(name);
    if (!g.same_shape(slot.value)) throw std::invalid_argument("gradient shape differs for slot '" + name + "'");
    ++slot.steps;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(slot.steps));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(slot.steps));
    auto p = slot.value.data();
    auto m = slot.first_moment.data();
    auto v = slot.second_moment.data();
    const auto gd = g.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * gd[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * gd[k] * gd[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      const double decay = lr * weight_decay * p[k];
      p[k] -= lr * mhat / (std::sqrt(vhat) + opt.eps) + decay;
    }
  }
}

}  // namespace debater
