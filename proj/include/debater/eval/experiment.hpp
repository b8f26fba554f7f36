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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "debater/core/error.hpp"
#include "debater/data/interactions.hpp"
#include "debater/data/split.hpp"
#include "debater/denoisers/trainer.hpp"
#include "debater/eval/metrics.hpp"
#include "debater/noise/noise_lab.hpp"
#include "debater/numerics/checkpoint.hpp"

namespace debater {

using nlohmann::json;

struct DatasetConfig {
  std::string path;
  DatasetFormat format = DatasetFormat::ml100k_tab;
  std::optional<double> rating_floor;
  std::vector<TimeField> time_fields{TimeField::day_of_week, TimeField::hour, TimeField::minute, TimeField::second};
  double train_fraction = 0.7;
};

struct NoiseConfig {
  double fraction = 0.2;
  NoiseStrategy strategy = NoiseStrategy::uniform;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::optional<NoiseConfig> noise;
  TrainConfig train;
  std::vector<std::size_t> ks{10, 20};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  bool save_checkpoints = false;
  json source;  // the document as given, echoed into reports
};

namespace detail {

/// Reads typed fields from a JSON object, reporting bad input by JSON path.
class ConfigReader {
 public:
  ConfigReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw Error(ErrorKind::config, (key.empty() ? path_ : path_ + "/" + key) + ": " + what);
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, _] : node_.items()) {
      bool known = false;
      for (const char* allowed : keys) known = known || k == allowed;
      if (!known) fail(k, "unknown key");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  ConfigReader child(const std::string& key) const { return ConfigReader(node_.at(key), path_ + "/" + key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) fail(key, "expected a boolean");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  template <typename F>
  auto parsed(const std::string& key, const std::string& fallback, F parse) const {
    const std::string s = text(key, fallback);
    try {
      return parse(s);
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

  const json& raw(const std::string& key) const { return node_.at(key); }

 private:
  const json& node_;
  std::string path_;
};

}  // namespace detail

/// Validates and converts a config document; errors name the offending path.
inline ExperimentConfig parse_experiment_config(const json& doc) {
  detail::ConfigReader root(doc, "");
  root.allow_only({"dataset", "noise", "trainer", "backbone", "loss_weights", "optimizer", "eval", "seeds", "checkpoints"});
  ExperimentConfig cfg;
  cfg.source = doc;

  if (!root.has("dataset")) root.fail("dataset", "required block missing");
  {
    const auto ds = root.child("dataset");
    ds.allow_only({"path", "format", "rating_floor", "time_fields", "train_fraction"});
    cfg.dataset.path = ds.text("path", "");
    if (cfg.dataset.path.empty()) ds.fail("path", "required");
    cfg.dataset.format = ds.parsed("format", "ml100k-tab", parse_dataset_format);
    if (ds.has("rating_floor")) cfg.dataset.rating_floor = ds.number("rating_floor", 0.0);
    if (ds.has("time_fields")) {
      const json& tf = ds.raw("time_fields");
      if (!tf.is_array() || tf.empty()) ds.fail("time_fields", "expected a non-empty array of field names");
      cfg.dataset.time_fields.clear();
      for (std::size_t k = 0; k < tf.size(); ++k) {
        if (!tf[k].is_string()) ds.fail("time_fields/" + std::to_string(k), "expected a string");
        try {
          cfg.dataset.time_fields.push_back(parse_time_field(tf[k].get<std::string>()));
        } catch (const Error& e) {
          ds.fail("time_fields/" + std::to_string(k), e.what());
        }
      }
    }
    cfg.dataset.train_fraction = ds.number("train_fraction", 0.7);
    if (!(cfg.dataset.train_fraction > 0.0 && cfg.dataset.train_fraction < 1.0)) {
      ds.fail("train_fraction", "must lie in (0, 1)");
    }
  }

  if (root.has("noise")) {
    const auto nz = root.child("noise");
    nz.allow_only({"fraction", "strategy", "seed"});
    NoiseConfig noise;
    noise.fraction = nz.number("fraction", 0.2);
    if (!(noise.fraction > 0.0 && noise.fraction <= 1.0)) nz.fail("fraction", "must lie in (0, 1]");
    noise.strategy = nz.parsed("strategy", "uniform", parse_noise_strategy);
    if (nz.has("seed")) noise.seed = nz.count("seed", 0);
    cfg.noise = noise;
  }

  TrainConfig& tc = cfg.train;
  if (root.has("trainer")) {
    const auto tr = root.child("trainer");
    tr.allow_only({"kind", "epochs", "batch_size", "beta", "ablation", "early_stopping", "check_finite"});
    tc.trainer = tr.parsed("kind", "debater-a", parse_trainer_kind);
    tc.epochs = tr.count("epochs", tc.epochs);
    tc.batch_size = tr.count("batch_size", tc.batch_size);
    tc.beta = tr.number("beta", tc.beta);
    tc.check_finite = tr.flag("check_finite", tc.check_finite);
    if (tr.has("ablation")) {
      const auto ab = tr.child("ablation");
      ab.allow_only({"time_in_scorer", "time_in_loss_and_pred"});
      tc.ablation.time_in_scorer = ab.flag("time_in_scorer", true);
      tc.ablation.time_in_loss_and_pred = ab.flag("time_in_loss_and_pred", true);
    }
    if (tr.has("early_stopping")) {
      const auto es = tr.child("early_stopping");
      es.allow_only({"enabled", "patience", "holdout_fraction"});
      tc.early_stopping.enabled = es.flag("enabled", tc.early_stopping.enabled);
      tc.early_stopping.patience = es.count("patience", tc.early_stopping.patience);
      tc.early_stopping.holdout_fraction = es.number("holdout_fraction", tc.early_stopping.holdout_fraction);
    }
  }
  if (root.has("backbone")) {
    const auto bb = root.child("backbone");
    bb.allow_only({"d", "layers", "eps", "tau"});
    tc.backbone.dim = bb.count("d", tc.backbone.dim);
    tc.backbone.layers = bb.count("layers", tc.backbone.layers);
    tc.backbone.eps = bb.number("eps", tc.backbone.eps);
    tc.backbone.tau = bb.number("tau", tc.backbone.tau);
  }
  if (root.has("loss_weights")) {
    const auto lw = root.child("loss_weights");
    lw.allow_only({"lambda1", "lambda2", "gamma"});
    tc.loss.cl = lw.number("lambda1", tc.loss.cl);
    tc.loss.au = lw.number("lambda2", tc.loss.au);
    tc.loss.gamma = lw.number("gamma", tc.loss.gamma);
  }
  if (root.has("optimizer")) {
    const auto op = root.child("optimizer");
    op.allow_only({"lr", "weight_decay"});
    tc.lr = op.number("lr", tc.lr);
    tc.weight_decay = op.number("weight_decay", tc.weight_decay);
  }
  if (root.has("eval")) {
    const auto ev = root.child("eval");
    ev.allow_only({"ks"});
    if (ev.has("ks")) {
      const json& ks = ev.raw("ks");
      if (!ks.is_array() || ks.empty()) ev.fail("ks", "expected a non-empty array");
      cfg.ks.clear();
      for (const auto& k : ks) {
        if (!k.is_number_integer() || k.get<std::int64_t>() < 1) ev.fail("ks", "every k must be a positive integer");
        cfg.ks.push_back(k.get<std::size_t>());
      }
    }
  }
  if (root.has("seeds")) {
    const json& seeds = doc.at("seeds");
    if (seeds.is_number_integer()) {
      const auto n = root.count("seeds", 4);
      if (n == 0) root.fail("seeds", "need at least one seed");
      cfg.seeds.clear();
      for (std::uint64_t s = 0; s < n; ++s) cfg.seeds.push_back(s);
    } else if (seeds.is_array() && !seeds.empty()) {
      cfg.seeds.clear();
      for (const auto& s : seeds) {
        if (!s.is_number_integer() || s.get<std::int64_t>() < 0) root.fail("seeds", "seeds must be non-negative integers");
        cfg.seeds.push_back(s.get<std::uint64_t>());
      }
    } else {
      root.fail("seeds", "expected a seed count or a non-empty array of seeds");
    }
  }
  cfg.save_checkpoints = root.flag("checkpoints", false);
  try {
    tc.validate(cfg.dataset.time_fields.size());
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("/trainer: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, path.string() + ": " + e.what());
  }
  return parse_experiment_config(doc);
}

/// Hex hash of the canonical (sorted-key) dump of a config document.
inline std::string config_hash(const json& doc) {
  const std::string s = doc.dump();
  Fnv1a h;
  h.update(s.data(), s.size());
  return h.hex();
}

/// The clean split of the configured dataset.
inline SplitDataset prepare_split(const DatasetConfig& ds) {
  const InteractionLog log = load_interactions(ds.path, ds.format, ds.rating_floor);
  return sequential_split(log, ds.train_fraction, ds.time_fields);
}

struct SeedResult {
  std::uint64_t seed = 0;
  MetricsReport metrics;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t noise_injected = 0;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  std::vector<std::size_t> ks;
  std::string config_hash;
  std::string dataset_fingerprint;

  /// Mean over seeds of one metric.
  double mean(const std::string& metric, std::size_t k) const {
    double s = 0.0;
    for (const auto& r : seeds) s += r.metrics.value(metric, k);
    return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
  }

  /// Sample standard deviation over seeds (0 for a single seed).
  double stddev(const std::string& metric, std::size_t k) const {
    if (seeds.size() < 2) return 0.0;
    const double m = mean(metric, k);
    double s = 0.0;
    for (const auto& r : seeds) s += (r.metrics.value(metric, k) - m) * (r.metrics.value(metric, k) - m);
    return std::sqrt(s / static_cast<double>(seeds.size() - 1));
  }
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"precision", "recall", "ndcg"};
  return names;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// seed,metric,k,value rows for every seed, then mean and std rows.
inline void write_report_csv(std::ostream& out, const ExperimentResult& result) {
  out << "seed,metric,k,value\n";
  for (const auto& r : result.seeds) {
    for (const auto& m : metric_names())
      for (std::size_t k : result.ks) out << r.seed << ',' << m << ',' << k << ',' << format_number(r.metrics.value(m, k)) << '\n';
  }
  for (const char* row : {"mean", "std"}) {
    for (const auto& m : metric_names()) {
      for (std::size_t k : result.ks) {
        const double v = std::string(row) == "mean" ? result.mean(m, k) : result.stddev(m, k);
        out << row << ',' << m << ',' << k << ',' << format_number(v) << '\n';
      }
    }
  }
}

inline json report_json(const ExperimentResult& result, const ExperimentConfig& cfg) {
  json seeds = json::array();
  for (const auto& r : result.seeds) {
    json metrics = json::object();
    for (const auto& m : metric_names())
      for (std::size_t k : result.ks) metrics[m + "@" + std::to_string(k)] = r.metrics.value(m, k);
    json users = json::array();
    for (const auto& u : r.metrics.per_user) {
      users.push_back({{"user", u.user}, {"relevant", u.n_relevant}, {"precision", u.precision}, {"recall", u.recall}, {"ndcg", u.ndcg}});
    }
    seeds.push_back({{"seed", r.seed},
                     {"epochs_run", r.epochs_run},
                     {"best_epoch", r.best_epoch},
                     {"noise_injected", r.noise_injected},
                     {"evaluated_users", r.metrics.per_user.size()},
                     {"metrics", metrics},
                     {"per_user", users}});
  }
  json mean = json::object(), stddev = json::object();
  for (const auto& m : metric_names()) {
    for (std::size_t k : result.ks) {
      mean[m + "@" + std::to_string(k)] = result.mean(m, k);
      stddev[m + "@" + std::to_string(k)] = result.stddev(m, k);
    }
  }
  return {{"metadata",
           {{"config_hash", result.config_hash},
            {"dataset_fingerprint", result.dataset_fingerprint},
            {"trainer", to_string(cfg.train.trainer)},
            {"ks", result.ks},
            {"config", cfg.source},
            {"train_config", to_json(cfg.train)}}},
          {"seeds", seeds},
          {"mean", mean},
          {"std", stddev}};
}

/// Runs every seed of an experiment. When out_dir is given, writes
/// report.csv, report.json, per-seed run logs, timing.json (wall times are
/// kept out of the reports so reruns compare byte-for-byte) and, on failure,
/// manifest.json describing the partial results.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  namespace fs = std::filesystem;
  if (out_dir) fs::create_directories(*out_dir);
  const SplitDataset clean = prepare_split(cfg.dataset);
  ExperimentResult result;
  result.ks = cfg.ks;
  result.config_hash = config_hash(cfg.source);
  result.dataset_fingerprint = fingerprint(clean.train) + fingerprint(clean.test);
  json timing = json::object();
  try {
    for (std::uint64_t seed : cfg.seeds) {
      const auto start = std::chrono::steady_clock::now();
      SeedResult sr;
      sr.seed = seed;
      std::optional<SplitDataset> noisy;
      if (cfg.noise) {
        const NoiseSpec spec{cfg.noise->fraction, cfg.noise->strategy, cfg.noise->seed.value_or(seed)};
        const NoisyDataset injected = inject_noise(clean, spec);
        sr.noise_injected = injected.injected();
        noisy = with_noisy_train(clean, injected);
      }
      const SplitDataset& data = noisy ? *noisy : clean;
      std::ofstream log_file;
      if (out_dir) log_file.open(*out_dir / ("run_log_seed" + std::to_string(seed) + ".ndjson"));
      TrainResult trained;
      try {
        trained = train(data, cfg.train, seed, out_dir ? &log_file : nullptr);
      } catch (const TrainingDiverged& e) {
        if (out_dir) {
          Checkpoint ckpt{json{{"seed", seed}, {"diverged_in_epoch", e.epoch()}}.dump(), "", e.last_finite()};
          save_checkpoint(*out_dir / ("checkpoint_seed" + std::to_string(seed) + "_last_finite.bin"), ckpt);
        }
        throw;
      }
      const RankingModel model = make_ranking_model(trained.params, cfg.train, data, data.train);
      sr.metrics = evaluate(model, data, cfg.ks);
      sr.epochs_run = trained.epochs_run;
      sr.best_epoch = trained.best_epoch;
      sr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (out_dir && cfg.save_checkpoints) {
        json meta = {{"seed", seed}, {"config", cfg.source}, {"epochs_run", trained.epochs_run}};
        save_checkpoint(*out_dir / ("checkpoint_seed" + std::to_string(seed) + ".bin"),
                        Checkpoint{meta.dump(), "", trained.params});
      }
      timing[std::to_string(seed)] = sr.wall_seconds;
      result.seeds.push_back(std::move(sr));
    }
  } catch (const std::exception& e) {
    if (out_dir) {
      json done = json::array();
      for (const auto& r : result.seeds) done.push_back(r.seed);
      std::ofstream(*out_dir / "manifest.json") << json{{"status", "failed"}, {"error", e.what()}, {"completed_seeds", done}}.dump(2)
                                                << '\n';
      if (!result.seeds.empty()) {
        std::ofstream csv(*out_dir / "partial_report.csv");
        write_report_csv(csv, result);
      }
    }
    throw;
  }
  if (out_dir) {
    std::ofstream csv(*out_dir / "report.csv");
    write_report_csv(csv, result);
    std::ofstream(*out_dir / "report.json") << report_json(result, cfg).dump(2) << '\n';
    std::ofstream(*out_dir / "timing.json") << timing.dump(2) << '\n';
  }
  return result;
}

}  // namespace debater
