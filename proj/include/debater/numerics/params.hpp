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
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "debater/core/error.hpp"
#include "debater/core/rng.hpp"
#include "debater/numerics/autodiff.hpp"
#include "debater/numerics/tensor.hpp"

namespace debater {

/// One trainable tensor plus its optimizer moments.
struct ParameterSlot {
  std::string name;
  Tensor value;
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t steps = 0;
};

/// Named, ordered collection of every trainable tensor of a model.
class ParameterStore {
 public:
  ParameterSlot& add(std::string name, Tensor value) {
    if (contains(name)) throw Error(ErrorKind::config, "duplicate parameter slot '" + name + "'");
    ParameterSlot slot;
    slot.name = std::move(name);
    slot.first_moment = Tensor::zeros_like(value);
    slot.second_moment = Tensor::zeros_like(value);
    slot.value = std::move(value);
    index_.emplace(slot.name, slots_.size());
    slots_.push_back(std::move(slot));
    return slots_.back();
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  ParameterSlot& slot(std::string_view name) { return slots_[position(name)]; }
  const ParameterSlot& slot(std::string_view name) const { return slots_[position(name)]; }
  Tensor& value(std::string_view name) { return slot(name).value; }
  const Tensor& value(std::string_view name) const { return slot(name).value; }

  std::span<ParameterSlot> slots() { return slots_; }
  std::span<const ParameterSlot> slots() const { return slots_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& s : slots_) out.push_back(s.name);
    return out;
  }

  /// Names of slots whose name starts with prefix, in insertion order.
  std::vector<std::string> names_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& s : slots_) {
      if (std::string_view(s.name).substr(0, prefix.size()) == prefix) out.push_back(s.name);
    }
    return out;
  }

  /// Hash of the values of the given slots; used to assert that an update
  /// left a group of slots untouched.
  std::string digest(std::span<const std::string> names) const {
    Fnv1a h;
    for (const auto& n : names) {
      const auto& v = value(n);
      h.update(n.data(), n.size());
      h.update(v.data().data(), v.size() * sizeof(double));
    }
    return h.hex();
  }

  std::string digest() const { return digest(names()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.value.size();
    return n;
  }

 private:
  std::size_t position(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter slot '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<ParameterSlot> slots_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Gradients keyed by slot name, each shaped like its parameter.
class GradientBundle {
 public:
  void set(std::string name, Tensor g) { grads_[std::move(name)] = std::move(g); }
  bool contains(std::string_view name) const { return grads_.find(name) != grads_.end(); }
  const Tensor& operator[](std::string_view name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::out_of_range("no gradient for slot '" + std::string(name) + "'");
    return it->second;
  }
  Tensor& at(std::string_view name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::out_of_range("no gradient for slot '" + std::string(name) + "'");
    return it->second;
  }
  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

  bool all_zero() const {
    for (const auto& [_, g] : grads_)
      if (max_abs(g) != 0.0) return false;
    return true;
  }

 private:
  std::map<std::string, Tensor, std::less<>> grads_;
};

/// Tape handles for every slot of a store during one objective evaluation.
/// Requested slots are variables, the rest are constants.
class SlotVars {
 public:
  ad::Var operator[](std::string_view name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("slot '" + std::string(name) + "' not bound on tape");
    return it->second;
  }
  void bind(std::string name, ad::Var v) { vars_[std::move(name)] = v; }

 private:
  std::map<std::string, ad::Var, std::less<>> vars_;
};

using Objective = std::function<ad::Var(ad::Tape&, const SlotVars&)>;

struct ValueAndGradient {
  double value = 0.0;
  GradientBundle grads;
};

inline ValueAndGradient value_and_grad(const ParameterStore& params, std::span<const std::string> wrt,
                                       const Objective& objective, ad::TapeOptions options = {}) {
  ad::Tape tape(options);
  SlotVars vars;
  std::vector<std::pair<std::string, ad::Var>> requested;
  for (const auto& slot : params.slots()) {
    const bool want = std::find(wrt.begin(), wrt.end(), slot.name) != wrt.end();
    ad::Var v = want ? tape.variable(slot.value) : tape.constant(slot.value);
    vars.bind(slot.name, v);
    if (want) requested.emplace_back(slot.name, v);
  }
  for (const auto& name : wrt) {
    if (!params.contains(name)) throw std::out_of_range("unknown parameter slot '" + name + "'");
  }
  ad::Var out = objective(tape, vars);
  if (out.value().size() != 1) throw std::logic_error("objective must be scalar");
  if (!std::isfinite(out.value().item())) {
    throw Error(ErrorKind::numerical_fault, "objective is not finite");
  }
  tape.backward(out);
  ValueAndGradient result;
  result.value = out.value().item();
  for (auto& [name, v] : requested) result.grads.set(name, tape.grad(v));
  return result;
}

/// Exact reverse-mode gradient of a scalar objective w.r.t. the named slots.
inline GradientBundle grad(const ParameterStore& params, std::span<const std::string> wrt,
                           const Objective& objective, ad::TapeOptions options = {}) {
  return value_and_grad(params, wrt, objective, options).grads;
}

/// Inner first-order gradients written as differentiable tape expressions of
/// the outer (generator) slots, e.g. d(loss)/d(embeddings) as a function of
/// per-sample weights.
using InnerGradients = std::function<std::vector<ad::Var>(ad::Tape&, const SlotVars&)>;
/// Scalar that consumes the inner gradients.
using GradientObjective = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Derivative of an objective defined on first-order gradients with respect to
/// the generator slots. The inner gradients must already be expressed on the
/// tape (analytically), so one reverse sweep yields the second-order term.
inline ValueAndGradient grad_of_grad_objective(const ParameterStore& params, std::span<const std::string> wrt,
                                               const InnerGradients& inner, const GradientObjective& outer,
                                               ad::TapeOptions options = {}) {
  return value_and_grad(
      params, wrt,
      [&](ad::Tape& tape, const SlotVars& vars) {
        const std::vector<ad::Var> g = inner(tape, vars);
        return outer(tape, g);
      },
      options);
}

}  // namespace debater
