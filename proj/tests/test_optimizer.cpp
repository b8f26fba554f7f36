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

#include <filesystem>
#include <sstream>

#include "debater/numerics/adam.hpp"
#include "debater/numerics/checkpoint.hpp"
#include "support.hpp"

namespace debater {
namespace {

GradientBundle bundle(const std::string& name, Tensor g) {
  GradientBundle b;
  b.set(name, std::move(g));
  return b;
}

TEST(Adam, ZeroGradientNoDecayIsFixedPoint) {
  ParameterStore p;
  p.add("x", Tensor::row_vector({1.0, -2.0, 0.5}));
  for (int k = 0; k < 3; ++k) step(p, bundle("x", Tensor(1, 3, 0.0)), 0.1, 0.0);
  EXPECT_EQ(p.value("x"), Tensor::row_vector({1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore p;
  p.add("x", Tensor::scalar(1.0));
  step(p, bundle("x", Tensor::scalar(1.0)), 0.1, 0.0);
  // lr * g / (|g| + eps) with bias-corrected moments.
  EXPECT_NEAR(p.value("x").item(), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value("x").item(), 0.9, 1e-8);
}

TEST(Adam, DecoupledShrinkage) {
  ParameterStore p;
  p.add("x", Tensor::scalar(1.0));
  step(p, bundle("x", Tensor::scalar(0.0)), 1e-3, 1e-4);
  EXPECT_NEAR(p.value("x").item(), 0.9999999, 1e-15);
}

TEST(Adam, MatchesScalarReference) {
  Rng rng(2);
  ParameterStore p;
  p.add("x", Tensor::scalar(0.3));
  double x = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = rng.uniform(-1.0, 1.0);
    step(p, bundle("x", Tensor::scalar(g)), 0.01, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * 0.01 * x;
    EXPECT_NEAR(p.value("x").item(), x, 1e-14);
  }
}

TEST(Adam, OnlyBundledSlotsMove) {
  ParameterStore p;
  p.add("a", Tensor::scalar(1.0));
  p.add("b", Tensor::scalar(1.0));
  step(p, bundle("a", Tensor::scalar(1.0)), 0.1, 0.5);
  EXPECT_NE(p.value("a").item(), 1.0);
  EXPECT_EQ(p.value("b").item(), 1.0);
  EXPECT_EQ(p.slot("b").steps, 0);
}

TEST(Adam, BitReproducible) {
  Rng rng(5);
  ParameterStore base;
  base.add("w", testing::random_tensor(4, 3, rng));
  std::vector<Tensor> grads;
  for (int k = 0; k < 10; ++k) grads.push_back(testing::random_tensor(4, 3, rng));
  ParameterStore a = base, b = base;
  for (const auto& g : grads) {
    step(a, bundle("w", g), 1e-3, 1e-4);
    step(b, bundle("w", g), 1e-3, 1e-4);
  }
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.value("w"), b.value("w"));
}

TEST(Adam, RejectsInvalidHyperparameters) {
  ParameterStore p;
  p.add("x", Tensor::scalar(1.0));
  EXPECT_THROW(step(p, bundle("x", Tensor::scalar(1.0)), 0.0, 0.0), Error);
  EXPECT_THROW(step(p, bundle("x", Tensor::scalar(1.0)), 0.1, -1.0), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(7);
  Checkpoint ckpt;
  ckpt.metadata = R"({"epoch":3})";
  ckpt.params.add("user", testing::random_tensor(5, 4, rng));
  ckpt.params.add("item", testing::random_tensor(6, 4, rng));
  step(ckpt.params, bundle("user", testing::random_tensor(5, 4, rng)), 1e-3, 1e-4);
  ckpt.rng_state = rng.state();

  std::stringstream buf;
  write_checkpoint(buf, ckpt);
  const Checkpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.metadata, ckpt.metadata);
  EXPECT_EQ(back.rng_state, ckpt.rng_state);
  EXPECT_EQ(back.params.names(), ckpt.params.names());
  for (const auto& name : ckpt.params.names()) {
    EXPECT_EQ(back.params.value(name), ckpt.params.value(name));
    EXPECT_EQ(back.params.slot(name).first_moment, ckpt.params.slot(name).first_moment);
    EXPECT_EQ(back.params.slot(name).second_moment, ckpt.params.slot(name).second_moment);
    EXPECT_EQ(back.params.slot(name).steps, ckpt.params.slot(name).steps);
  }
  Rng restored;
  restored.restore(back.rng_state);
  EXPECT_EQ(restored, rng);
}

TEST(Checkpoint, FileRoundTripAndCorruption) {
  const auto dir = std::filesystem::temp_directory_path() / "debater_ckpt_test";
  std::filesystem::create_directories(dir);
  Checkpoint ckpt;
  ckpt.params.add("x", Tensor::row_vector({1.5, -2.5}));
  save_checkpoint(dir / "a.bin", ckpt);
  EXPECT_EQ(load_checkpoint(dir / "a.bin").params.value("x"), Tensor::row_vector({1.5, -2.5}));

  std::stringstream junk("not a checkpoint");
  try {
    (void)read_checkpoint(junk);
    FAIL() << "expected a checkpoint error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::checkpoint);
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace debater
