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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "debater/eval/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(debater::ErrorKind kind) {
  switch (kind) {
    case debater::ErrorKind::config: return 2;
    case debater::ErrorKind::parse:
    case debater::ErrorKind::empty_dataset:
    case debater::ErrorKind::split: return 3;
    case debater::ErrorKind::io:
    case debater::ErrorKind::checkpoint: return 4;
    default: return 5;
  }
}

void print_summary(const debater::ExperimentResult& result) {
  for (const auto& metric : debater::metric_names()) {
    for (std::size_t k : result.ks) {
      std::printf("%-9s @%-3zu mean %.4f  std %.4f\n", metric.c_str(), k, result.mean(metric, k), result.stddev(metric, k));
    }
  }
}

int cmd_run(const std::string& config, const std::string& out) {
  const auto cfg = debater::load_experiment_config(config);
  const auto result = debater::run_experiment(cfg, fs::path(out));
  print_summary(result);
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, const std::string& out) {
  const debater::Checkpoint ckpt = debater::load_checkpoint(checkpoint);
  json meta = json::parse(ckpt.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.contains("config")) {
    throw debater::Error(debater::ErrorKind::checkpoint, "metadata carries no experiment config");
  }
  json doc = meta.at("config");
  if (!data.empty()) doc["dataset"]["path"] = data;
  const auto cfg = debater::parse_experiment_config(doc);
  const debater::SplitDataset split = debater::prepare_split(cfg.dataset);
  const auto model = debater::make_ranking_model(ckpt.params, cfg.train, split, split.train);
  debater::ExperimentResult result;
  result.ks = cfg.ks;
  result.config_hash = debater::config_hash(doc);
  result.dataset_fingerprint = debater::fingerprint(split.train) + debater::fingerprint(split.test);
  result.seeds.push_back({meta.value("seed", std::uint64_t{0}), debater::evaluate(model, split, cfg.ks)});
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / "report.csv");
    debater::write_report_csv(csv, result);
    std::ofstream(fs::path(out) / "report.json") << debater::report_json(result, cfg).dump(2) << '\n';
  }
  print_summary(result);
  return 0;
}

int cmd_inject(const std::string& in, const std::string& spec_path, const std::string& out, double train_fraction) {
  std::ifstream spec_file(spec_path);
  if (!spec_file) throw debater::Error(debater::ErrorKind::io, "cannot open noise spec '" + spec_path + "'");
  const json spec_doc = json::parse(spec_file, nullptr, false);
  if (spec_doc.is_discarded()) throw debater::Error(debater::ErrorKind::config, spec_path + ": not valid JSON");
  debater::detail::ConfigReader reader(spec_doc, "");
  reader.allow_only({"fraction", "strategy", "seed", "format"});
  debater::NoiseSpec spec;
  spec.fraction = reader.number("fraction", spec.fraction);
  spec.strategy = reader.parsed("strategy", "uniform", debater::parse_noise_strategy);
  spec.seed = reader.count("seed", 0);
  const auto format = reader.parsed("format", "ml100k-tab", debater::parse_dataset_format);

  const auto log = debater::load_interactions(in, format, std::nullopt);
  const auto split = debater::sequential_split(log, train_fraction, {debater::TimeField::day_of_week, debater::TimeField::hour});
  const auto noisy = debater::inject_noise(split, spec);
  std::ofstream records(out);
  if (!records) throw debater::Error(debater::ErrorKind::io, "cannot write '" + out + "'");
  debater::write_csv_uirt(records, noisy.train, &log.user_ids, &log.item_ids);
  std::ofstream mask(out + ".mask");
  debater::write_noise_mask(mask, noisy);
  std::printf("wrote %zu records (%zu injected) to %s\n", noisy.train.size(), noisy.injected(), out.c_str());
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  const fs::path path = fs::path(dir) / (format == "csv" ? "report.csv" : "report.json");
  std::ifstream in(path);
  if (!in) throw debater::Error(debater::ErrorKind::io, "no report at '" + path.string() + "'");
  std::cout << in.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal graph collaborative filtering with denoising"};
  app.require_subcommand(1);

  std::string config, out_dir = "runs/latest";
  auto* run = app.add_subcommand("run", "Train and evaluate every seed of an experiment");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");

  std::string checkpoint, data, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved checkpoint");
  evaluate->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data, "Override the dataset path stored in the checkpoint");
  evaluate->add_option("--out", eval_out, "Write report.csv/report.json here");

  std::string in, spec, out;
  double train_fraction = 0.7;
  auto* inject = app.add_subcommand("inject-noise", "Write a noisy copy of the train split");
  inject->add_option("--in", in)->required()->check(CLI::ExistingFile);
  inject->add_option("--spec", spec, "Noise JSON: fraction, strategy, seed")->required()->check(CLI::ExistingFile);
  inject->add_option("--out", out)->required();
  inject->add_option("--train-fraction", train_fraction);

  std::string report_dir, report_format = "csv";
  auto* report = app.add_subcommand("report", "Print a finished report");
  report->add_option("--dir", report_dir)->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", report_format)->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out_dir);
    if (*evaluate) return cmd_evaluate(checkpoint, data, eval_out);
    if (*inject) return cmd_inject(in, spec, out, train_fraction);
    if (*report) return cmd_report(report_dir, report_format);
  } catch (const debater::Error& e) {
    std::fprintf(stderr, "debater: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "debater: %s\n", e.what());
    return 1;
  }
  return 0;
}
