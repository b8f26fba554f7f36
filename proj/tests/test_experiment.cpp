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


#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "debater/eval/experiment.hpp"

namespace debater {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("debater_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// A tab-separated log of 40 users x 30 items with spread-out timestamps.
fs::path write_tiny_log(const fs::path& dir) {
  const fs::path file = dir / "tiny.data";
  std::ofstream out(file);
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> item(1, 30), rating(1, 5);
  std::uniform_int_distribution<long> ts(880000000, 890000000);
  for (int u = 1; u <= 40; ++u) {
    for (int n = 0; n < 15; ++n) out << u << '\t' << item(gen) << '\t' << rating(gen) << '\t' << ts(gen) << '\n';
  }
  return file;
}

json tiny_config(const fs::path& data) {
  return json{{"dataset", {{"path", data.string()}, {"time_fields", {"day-of-week", "hour"}}}},
              {"trainer", {{"kind", "debater-a"}, {"epochs", 1}, {"batch_size", 64}}},
              {"backbone", {{"d", 8}, {"layers", 2}}},
              {"eval", {{"ks", {10, 20}}}},
              {"seeds", 2}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const json& doc) {
  try {
    parse_experiment_config(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << doc.dump();
  return {};
}

json minimal() { return json{{"dataset", {{"path", "x.data"}}}}; }

TEST(ConfigSchema, MinimalDocumentTakesDefaults) {
  const ExperimentConfig cfg = parse_experiment_config(minimal());
  EXPECT_EQ(cfg.dataset.path, "x.data");
  EXPECT_EQ(cfg.dataset.format, DatasetFormat::ml100k_tab);
  EXPECT_DOUBLE_EQ(cfg.dataset.train_fraction, 0.7);
  EXPECT_FALSE(cfg.noise.has_value());
  EXPECT_EQ(cfg.seeds.size(), 4u);
  EXPECT_EQ(cfg.ks, (std::vector<std::size_t>{10, 20}));
}

TEST(ConfigSchema, UnknownKeysNameTheirPath) {
  json doc = minimal();
  doc["bogus"] = 1;
  EXPECT_NE(config_error(doc).find("/bogus: unknown key"), std::string::npos);
  doc = minimal();
  doc["trainer"] = {{"epochz", 3}};
  EXPECT_NE(config_error(doc).find("/trainer/epochz: unknown key"), std::string::npos);
  doc = minimal();
  doc["trainer"] = {{"ablation", {{"time", false}}}};
  EXPECT_NE(config_error(doc).find("/trainer/ablation/time: unknown key"), std::string::npos);
}

TEST(ConfigSchema, WrongTypesAreRejected) {
  json doc = minimal();
  doc["backbone"] = {{"d", "sixty-four"}};
  EXPECT_NE(config_error(doc).find("/backbone/d"), std::string::npos);
  doc = minimal();
  doc["optimizer"] = {{"lr", true}};
  EXPECT_NE(config_error(doc).find("/optimizer/lr: expected a number"), std::string::npos);
  doc = minimal();
  doc["checkpoints"] = "yes";
  EXPECT_NE(config_error(doc).find("/checkpoints: expected a boolean"), std::string::npos);
  doc = minimal();
  doc["trainer"] = {{"epochs", -1}};
  EXPECT_NE(config_error(doc).find("/trainer/epochs"), std::string::npos);
}

TEST(ConfigSchema, DatasetIsRequired) {
  EXPECT_NE(config_error(json::object()).find("/dataset"), std::string::npos);
  EXPECT_NE(config_error(json{{"dataset", json::object()}}).find("/dataset/path"), std::string::npos);
  EXPECT_NE(config_error(json{{"dataset", {{"path", "a"}, {"train_fraction", 1.0}}}}).find("/dataset/train_fraction"),
            std::string::npos);
  EXPECT_NE(config_error(json{{"dataset", {{"path", "a"}, {"format", "parquet"}}}}).find("/dataset/format"),
            std::string::npos);
}

TEST(ConfigSchema, EnumeratedValues) {
  json doc = minimal();
  doc["trainer"] = {{"kind", "debater-z"}};
  EXPECT_NE(config_error(doc).find("/trainer/kind"), std::string::npos);
  doc = minimal();
  doc["dataset"]["time_fields"] = {"hour", "fortnight"};
  EXPECT_NE(config_error(doc).find("/dataset/time_fields/1"), std::string::npos);
  doc = minimal();
  doc["noise"] = {{"strategy", "sideways"}};
  EXPECT_NE(config_error(doc).find("/noise/strategy"), std::string::npos);
  doc = minimal();
  doc["noise"] = {{"fraction", 0.0}};
  EXPECT_NE(config_error(doc).find("/noise/fraction"), std::string::npos);
}

TEST(ConfigSchema, EvalKsAndSeeds) {
  json doc = minimal();
  doc["eval"] = {{"ks", {10, 0}}};
  EXPECT_NE(config_error(doc).find("/eval/ks"), std::string::npos);
  doc = minimal();
  doc["eval"] = {{"ks", json::array()}};
  EXPECT_NE(config_error(doc).find("/eval/ks"), std::string::npos);
  doc = minimal();
  doc["seeds"] = 0;
  EXPECT_NE(config_error(doc).find("/seeds"), std::string::npos);
  doc = minimal();
  doc["seeds"] = {1, -2};
  EXPECT_NE(config_error(doc).find("/seeds"), std::string::npos);

  doc = minimal();
  doc["seeds"] = 3;
  EXPECT_EQ(parse_experiment_config(doc).seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  doc["seeds"] = {7, 3};
  EXPECT_EQ(parse_experiment_config(doc).seeds, (std::vector<std::uint64_t>{7, 3}));
}

TEST(ConfigSchema, HyperparameterValidationIsReportedAsConfig) {
  json doc = minimal();
  doc["optimizer"] = {{"lr", -1.0}};
  EXPECT_NE(config_error(doc).find("/trainer: "), std::string::npos);
  doc = minimal();
  doc["backbone"] = {{"d", 0}};
  config_error(doc);
}

TEST(ConfigSchema, ValuesAreCarriedThrough) {
  json doc = minimal();
  doc["trainer"] = {{"kind", "debater-l"}, {"epochs", 3}, {"beta", 0.25}, {"ablation", {{"time_in_scorer", false}}}};
  doc["backbone"] = {{"d", 16}, {"layers", 3}, {"eps", 0.2}, {"tau", 0.5}};
  doc["loss_weights"] = {{"lambda1", 0.3}, {"lambda2", 0.4}, {"gamma", 2.0}};
  doc["optimizer"] = {{"lr", 0.005}, {"weight_decay", 1e-4}};
  doc["noise"] = {{"fraction", 0.1}, {"strategy", "prop-pop"}, {"seed", 9}};
  const ExperimentConfig cfg = parse_experiment_config(doc);
  EXPECT_EQ(cfg.train.trainer, TrainerKind::debater_l);
  EXPECT_EQ(cfg.train.epochs, 3u);
  EXPECT_DOUBLE_EQ(cfg.train.beta, 0.25);
  EXPECT_FALSE(cfg.train.ablation.time_in_scorer);
  EXPECT_TRUE(cfg.train.ablation.time_in_loss_and_pred);
  EXPECT_EQ(cfg.train.backbone.dim, 16u);
  EXPECT_EQ(cfg.train.backbone.layers, 3u);
  EXPECT_DOUBLE_EQ(cfg.train.backbone.eps, 0.2);
  EXPECT_DOUBLE_EQ(cfg.train.backbone.tau, 0.5);
  EXPECT_DOUBLE_EQ(cfg.train.loss.cl, 0.3);
  EXPECT_DOUBLE_EQ(cfg.train.loss.au, 0.4);
  EXPECT_DOUBLE_EQ(cfg.train.loss.gamma, 2.0);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.005);
  EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 1e-4);
  ASSERT_TRUE(cfg.noise.has_value());
  EXPECT_EQ(cfg.noise->strategy, NoiseStrategy::prop_pop);
  EXPECT_EQ(cfg.noise->seed, 9u);
}

TEST(ConfigFile, ShippedConfigsParse) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(DEBATER_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    EXPECT_NO_THROW(load_experiment_config(entry.path())) << entry.path();
  }
  EXPECT_GT(seen, 0u);
}

TEST(ConfigHash, IgnoresKeyOrderAndTracksValues) {
  const json a = json::parse(R"({"dataset":{"path":"p","train_fraction":0.7},"seeds":2})");
  const json b = json::parse(R"({"seeds":2,"dataset":{"train_fraction":0.7,"path":"p"}})");
  const json c = json::parse(R"({"seeds":3,"dataset":{"train_fraction":0.7,"path":"p"}})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(ConfigFile, MissingAndMalformed) {
  TempDir dir("cfgfile");
  try {
    load_experiment_config(dir.path() / "absent.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  std::ofstream(dir.path() / "bad.json") << "{ \"dataset\": ";
  try {
    load_experiment_config(dir.path() / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  std::ofstream(dir.path() / "good.json") << minimal().dump();
  EXPECT_EQ(load_experiment_config(dir.path() / "good.json").dataset.path, "x.data");
}

TEST(RunExperiment, WritesReportsForEverySeed) {
  TempDir dir("run");
  const fs::path data = write_tiny_log(dir.path());
  const ExperimentConfig cfg = parse_experiment_config(tiny_config(data));
  const ExperimentResult result = run_experiment(cfg, dir.path() / "out");

  ASSERT_EQ(result.seeds.size(), 2u);
  const std::string csv = slurp(dir.path() / "out" / "report.csv");
  // header + 2 seeds x 3 metrics x 2 ks + mean and std rows
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12 + 12);
  EXPECT_EQ(csv.rfind("seed,metric,k,value\n", 0), 0u);

  const json report = json::parse(slurp(dir.path() / "out" / "report.json"));
  for (const char* key : {"metadata", "seeds", "mean", "std"}) EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report["metadata"]["config_hash"], config_hash(cfg.source));
  EXPECT_EQ(report["seeds"].size(), 2u);
  for (const auto& s : report["seeds"]) {
    const double p10 = s["metrics"]["precision@10"];
    EXPECT_GE(p10, 0.0);
    EXPECT_LE(p10, 1.0);
  }
  const double mean_n20 = report["mean"]["ndcg@20"];
  EXPECT_NEAR(mean_n20, result.mean("ndcg", 20), 1e-15);

  EXPECT_TRUE(fs::exists(dir.path() / "out" / "timing.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "run_log_seed0.ndjson"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "run_log_seed1.ndjson"));
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "manifest.json"));
}

TEST(RunExperiment, RerunsAreByteIdentical) {
  TempDir dir("rerun");
  const fs::path data = write_tiny_log(dir.path());
  json doc = tiny_config(data);
  doc["trainer"]["kind"] = "debater-l";
  doc["noise"] = {{"fraction", 0.2}, {"strategy", "uniform"}};
  const ExperimentConfig cfg = parse_experiment_config(doc);
  run_experiment(cfg, dir.path() / "a");
  run_experiment(cfg, dir.path() / "b");
  for (const char* f : {"report.csv", "report.json", "run_log_seed0.ndjson", "run_log_seed1.ndjson"}) {
    EXPECT_EQ(slurp(dir.path() / "a" / f), slurp(dir.path() / "b" / f)) << f;
  }
}

TEST(RunExperiment, NoiseIsCountedPerSeed) {
  TempDir dir("noise");
  const fs::path data = write_tiny_log(dir.path());
  json doc = tiny_config(data);
  doc["trainer"]["kind"] = "backbone-only";
  doc["noise"] = {{"fraction", 0.1}, {"strategy", "uniform"}};
  const ExperimentResult result = run_experiment(parse_experiment_config(doc), std::nullopt);
  const SplitDataset clean = prepare_split(parse_experiment_config(doc).dataset);
  for (const auto& s : result.seeds) {
    EXPECT_EQ(s.noise_injected,
              static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(clean.train.size()))));
  }
}

TEST(RunExperiment, CheckpointsAreOptIn) {
  TempDir dir("ckpt");
  const fs::path data = write_tiny_log(dir.path());
  json doc = tiny_config(data);
  doc["seeds"] = {4};
  doc["checkpoints"] = true;
  const ExperimentConfig cfg = parse_experiment_config(doc);
  const ExperimentResult result = run_experiment(cfg, dir.path() / "out");
  const fs::path ckpt = dir.path() / "out" / "checkpoint_seed4.bin";
  ASSERT_TRUE(fs::exists(ckpt));
  const Checkpoint loaded = load_checkpoint(ckpt);
  EXPECT_EQ(json::parse(loaded.metadata)["seed"], 4);
  EXPECT_FALSE(loaded.params.slots().empty());
  EXPECT_EQ(result.seeds.front().seed, 4u);
}

TEST(RunExperiment, FailureLeavesManifest) {
  TempDir dir("fail");
  const fs::path data = write_tiny_log(dir.path());
  json doc = tiny_config(data);
  doc["optimizer"] = {{"lr", 1e300}};
  doc["trainer"]["check_finite"] = true;
  const ExperimentConfig cfg = parse_experiment_config(doc);
  EXPECT_ANY_THROW(run_experiment(cfg, dir.path() / "out"));
  ASSERT_TRUE(fs::exists(dir.path() / "out" / "manifest.json"));
  const json manifest = json::parse(slurp(dir.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_TRUE(manifest["completed_seeds"].empty());
}

}  // namespace
}  // namespace debater
