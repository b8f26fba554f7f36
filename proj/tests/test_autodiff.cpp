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

#include <string>

#include "support.hpp"

namespace debater {
namespace {

using ad::Tape;
using ad::Var;
using testing::max_fd_error;
using testing::random_tensor;

constexpr double kTol = 1e-4;

struct PrimitiveCase {
  const char* name;
  std::vector<std::array<std::size_t, 2>> shapes;
  testing::TapeFn f;
  double half_width = 1.0;
};

// Weighted sum with fixed coefficients so every output entry gets a distinct
// upstream gradient.
Var probe(Tape& t, Var v) {
  Tensor w(v.rows(), v.cols());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 0.3 + 0.17 * static_cast<double>(k % 7);
  return ad::sum(ad::mul(v, t.constant(std::move(w))));
}

std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"add", {{3, 4}, {3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::add(x[0], x[1])); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::sub(x[0], x[1])); }},
      {"mul", {{3, 4}, {3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::mul(x[0], x[1])); }},
      {"scale", {{2, 5}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::scale(x[0], -1.7)); }},
      {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::matmul(x[0], x[1])); }},
      {"matmul_bt", {{3, 4}, {5, 4}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::matmul_bt(x[0], x[1])); }},
      {"transpose", {{3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::transpose(x[0])); }},
      {"concat_cols", {{3, 2}, {3, 3}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::concat_cols({x[0], x[1]})); }},
      {"gather_rows", {{4, 3}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::gather_rows(x[0], {2, 0, 2, 3})); }},
      {"scatter_rows", {{3, 2}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::scatter_rows(x[0], {4, 1, 4}, 5)); }},
      {"slice_rows", {{5, 2}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::slice_rows(x[0], 1, 3)); }},
      {"mul_col", {{3, 4}, {3, 1}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::mul_col(x[0], x[1])); }},
      {"add_row", {{3, 4}, {1, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::add_row(x[0], x[1])); }},
      {"sigmoid", {{3, 3}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::sigmoid(x[0])); }, 3.0},
      {"tanh", {{3, 3}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::tanh(x[0])); }, 2.0},
      {"log", {{3, 3}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::log(ad::add_scalar(ad::square(x[0]), 0.5))); }},
      {"exp", {{3, 3}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::exp(x[0])); }},
      {"log_sigmoid", {{3, 3}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::log_sigmoid(x[0])); }, 4.0},
      {"sum", {{2, 3}}, [](Tape&, std::span<const Var> x) { return ad::sum(ad::square(x[0])); }},
      {"mean", {{2, 3}}, [](Tape&, std::span<const Var> x) { return ad::mean(ad::square(x[0])); }},
      {"row_sum", {{3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::row_sum(x[0])); }},
      {"row_dot", {{3, 4}, {3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::row_dot(x[0], x[1])); }},
      {"row_norm", {{3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::row_norm(x[0])); }},
      {"row_normalize", {{3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::row_normalize(x[0])); }},
      {"cosine_rows", {{3, 4}, {3, 4}},
       [](Tape& t, std::span<const Var> x) { return probe(t, ad::cosine_rows(x[0], x[1])); }},
      {"logsumexp_rows", {{3, 4}}, [](Tape& t, std::span<const Var> x) { return probe(t, ad::logsumexp_rows(x[0])); }},
  };
}

class Primitive : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(Primitive, MatchesCentralDifferences) {
  const auto& c = GetParam();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    std::vector<Tensor> inputs;
    for (const auto& s : c.shapes) inputs.push_back(random_tensor(s[0], s[1], rng, c.half_width));
    EXPECT_LT(max_fd_error(inputs, c.f), kTol) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(All, Primitive, ::testing::ValuesIn(primitive_cases()),
                         [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

TEST(Composite, RandomFiveParameterExpression) {
  // Five parameter tensors threaded through most of the primitive set.
  const testing::TapeFn f = [](Tape& t, std::span<const Var> x) {
    Var h = ad::tanh(ad::add_row(ad::matmul(x[0], x[1]), x[2]));
    Var n = ad::row_normalize(ad::concat_cols({h, x[3]}));
    Var c = ad::cosine_rows(ad::gather_rows(n, {0, 2, 1}), ad::gather_rows(n, {1, 1, 0}));
    Var s = ad::mul_col(ad::sigmoid(ad::matmul(h, x[4])), ad::exp(c));
    return ad::add(ad::mean(ad::log_sigmoid(s)), probe(t, ad::logsumexp_rows(s)));
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    std::vector<Tensor> inputs{random_tensor(3, 4, rng), random_tensor(4, 3, rng), random_tensor(1, 3, rng),
                               random_tensor(3, 2, rng), random_tensor(3, 2, rng)};
    EXPECT_LT(max_fd_error(inputs, f), kTol) << "seed " << seed;
  }
}

TEST(Grad, HalfSquaredNormGivesIdentity) {
  ParameterStore params;
  params.add("x", Tensor::row_vector({1.0, 2.0}));
  const std::vector<std::string> wrt{"x"};
  const auto g = grad(params, wrt, [](Tape&, const SlotVars& v) { return ad::scale(ad::sum(ad::square(v["x"])), 0.5); });
  EXPECT_EQ(g["x"], Tensor::row_vector({1.0, 2.0}));
}

TEST(Grad, ConstantObjectiveGivesZeroBundle) {
  ParameterStore params;
  params.add("x", Tensor::row_vector({1.0, 2.0}));
  params.add("y", Tensor(2, 2, 3.0));
  const std::vector<std::string> wrt{"x", "y"};
  const auto g = grad(params, wrt, [](Tape& t, const SlotVars&) { return t.constant(Tensor::scalar(4.0)); });
  EXPECT_EQ(g.size(), 2u);
  EXPECT_TRUE(g.all_zero());
  EXPECT_EQ(g["y"].shape(), (std::array<std::size_t, 2>{2, 2}));
}

TEST(Grad, OnlyRequestedSlotsAreMaterialized) {
  ParameterStore params;
  params.add("a", Tensor::scalar(1.0));
  params.add("b", Tensor::scalar(2.0));
  const std::vector<std::string> wrt{"a"};
  const auto g = grad(params, wrt, [](Tape&, const SlotVars& v) { return ad::mul(v["a"], v["b"]); });
  EXPECT_TRUE(g.contains("a"));
  EXPECT_FALSE(g.contains("b"));
  EXPECT_DOUBLE_EQ(g["a"].item(), 2.0);
}

TEST(Grad, IsLinearInTheObjective) {
  Rng rng(3);
  ParameterStore params;
  params.add("x", random_tensor(3, 4, rng));
  params.add("w", random_tensor(4, 2, rng));
  const std::vector<std::string> wrt{"x", "w"};
  const Objective f = [](Tape&, const SlotVars& v) { return ad::mean(ad::sigmoid(ad::matmul(v["x"], v["w"]))); };
  const Objective g = [](Tape&, const SlotVars& v) { return ad::sum(ad::row_norm(v["x"])); };
  const double a = 0.7, b = -2.3;
  const auto gf = grad(params, wrt, f);
  const auto gg = grad(params, wrt, g);
  const auto gc = grad(params, wrt, [&](Tape& t, const SlotVars& v) {
    return ad::add(ad::scale(f(t, v), a), ad::scale(g(t, v), b));
  });
  for (const auto& name : wrt) {
    const Tensor expect = gf[name] * a + gg[name] * b;
    for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR(gc[name][k], expect[k], 1e-12);
  }
}

TEST(Grad, NonFiniteIntermediateNamesTheOperation) {
  Tape tape(ad::TapeOptions{true});
  const Var x = tape.variable(Tensor::row_vector({-1.0, 0.0}));
  try {
    (void)ad::log(x);
    FAIL() << "expected a numerical fault";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numerical_fault);
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Grad, NonFiniteObjectiveIsRejected) {
  ParameterStore params;
  params.add("x", Tensor::scalar(0.0));
  const std::vector<std::string> wrt{"x"};
  EXPECT_THROW(grad(params, wrt, [](Tape&, const SlotVars& v) { return ad::log(v["x"]); }, ad::TapeOptions{false}),
               Error);
}

// Inner gradient g(w) = d/dx [ w * 0.5 * ||x||^2 ] = w * x, written on the tape;
// the outer objective is 0.5 * ||g - target||^2.
TEST(GradOfGrad, MatchesFiniteDifferencesOverOuterSlots) {
  Rng rng(9);
  ParameterStore params;
  params.add("theta", random_tensor(1, 3, rng));
  params.add("x", random_tensor(2, 3, rng));
  const Tensor target = random_tensor(2, 3, rng);
  const std::vector<std::string> wrt{"theta"};
  const InnerGradients inner = [](Tape&, const SlotVars& v) {
    Var w = ad::sigmoid(ad::matmul_bt(v["x"], v["theta"]));  // 2 x 1 per-row weights
    return std::vector<Var>{ad::mul_col(v["x"], w)};
  };
  const GradientObjective outer = [&](Tape& t, std::span<const Var> g) {
    return ad::scale(ad::sum(ad::square(ad::sub(g[0], t.constant(target)))), 0.5);
  };
  const auto analytic = grad_of_grad_objective(params, wrt, inner, outer);
  auto value_at = [&](const Tensor& theta) {
    ParameterStore p = params;
    p.value("theta") = theta;
    return grad_of_grad_objective(p, wrt, inner, outer).value;
  };
  const Tensor theta = params.value("theta");
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Tensor plus = theta, minus = theta;
    plus[k] += 1e-4;
    minus[k] -= 1e-4;
    const double numeric = (value_at(plus) - value_at(minus)) / 2e-4;
    EXPECT_LT(testing::rel_error(analytic.grads["theta"][k], numeric), 1e-3);
  }
}

TEST(GradOfGrad, ExactMatchIsStationary) {
  ParameterStore params;
  params.add("theta", Tensor::row_vector({0.4, -0.2}));
  params.add("x", Tensor(2, 2, 0.5));
  const std::vector<std::string> wrt{"theta"};
  // Both inner gradients are the same expression, so their difference is zero
  // for any theta and the outer squared mismatch is flat.
  const InnerGradients inner = [](Tape&, const SlotVars& v) {
    Var w = ad::sigmoid(ad::matmul_bt(v["x"], v["theta"]));
    return std::vector<Var>{ad::mul_col(v["x"], w), ad::mul_col(v["x"], w)};
  };
  const GradientObjective outer = [](Tape&, std::span<const Var> g) {
    return ad::sum(ad::square(ad::sub(g[0], g[1])));
  };
  EXPECT_TRUE(grad_of_grad_objective(params, wrt, inner, outer).grads.all_zero());
}

}  // namespace
}  // namespace debater
