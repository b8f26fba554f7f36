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
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "debater/data/split.hpp"
#include "debater/denoisers/generator.hpp"
#include "debater/denoisers/reliability.hpp"
#include "debater/eval/metrics.hpp"
#include "debater/graph/adjacency.hpp"
#include "debater/losses/losses.hpp"
#include "debater/losses/sampler.hpp"
#include "debater/model/encoder.hpp"
#include "debater/model/propagation.hpp"
#include "debater/numerics/adam.hpp"
#include "debater/numerics/params.hpp"

namespace debater {

enum class TrainerKind { backbone, debater_a, debater_l };

inline TrainerKind parse_trainer_kind(std::string_view name) {
  if (name == "backbone-only") return TrainerKind::backbone;
  if (name == "debater-a") return TrainerKind::debater_a;
  if (name == "debater-l") return TrainerKind::debater_l;
  throw Error(ErrorKind::config, "unknown trainer '" + std::string(name) + "'");
}

inline const char* to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::backbone: return "backbone-only";
    case TrainerKind::debater_a: return "debater-a";
    case TrainerKind::debater_l: return "debater-l";
  }
  return "?";
}

/// Where the time embedding is used. Disabled sites substitute e_t = 0.
struct AblationFlags {
  bool time_in_scorer = true;         // reliability score / weight generator input
  bool time_in_loss_and_pred = true;  // training losses and ranking scores
};

enum class AblationSwitch { time_in_scorer, time_in_loss_and_pred };

struct EarlyStopping {
  bool enabled = false;
  std::size_t patience = 10;
  double holdout_fraction = 0.1;
};

struct TrainConfig {
  TrainerKind trainer = TrainerKind::debater_a;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta = 0.35;
  LossWeights loss;
  BackboneConfig backbone;
  AblationFlags ablation;
  EarlyStopping early_stopping;
  bool check_finite = false;

  void validate(std::size_t n_time_fields) const {
    if (epochs < 1) throw Error(ErrorKind::config, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::config, "batch_size must be >= 1");
    if (!(lr > 0.0)) throw Error(ErrorKind::config, "lr must be > 0");
    if (weight_decay < 0.0) throw Error(ErrorKind::config, "weight_decay must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::config, "beta must lie in [0, 1]");
    loss.validate();
    backbone.validate(n_time_fields);
  }
};

/// Returns cfg with the named time sites switched off.
inline TrainConfig ablate(TrainConfig cfg, std::initializer_list<AblationSwitch> disabled) {
  for (AblationSwitch s : disabled) {
    if (s == AblationSwitch::time_in_scorer) cfg.ablation.time_in_scorer = false;
    if (s == AblationSwitch::time_in_loss_and_pred) cfg.ablation.time_in_loss_and_pred = false;
  }
  return cfg;
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"trainer", to_string(cfg.trainer)},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"lr", cfg.lr},
      {"weight_decay", cfg.weight_decay},
      {"beta", cfg.beta},
      {"loss_weights", {{"lambda1", cfg.loss.cl}, {"lambda2", cfg.loss.au}, {"gamma", cfg.loss.gamma}}},
      {"backbone", {{"d", cfg.backbone.dim}, {"layers", cfg.backbone.layers}, {"eps", cfg.backbone.eps}, {"tau", cfg.backbone.tau}}},
      {"ablation",
       {{"time_in_scorer", cfg.ablation.time_in_scorer}, {"time_in_loss_and_pred", cfg.ablation.time_in_loss_and_pred}}},
      {"early_stopping",
       {{"enabled", cfg.early_stopping.enabled},
        {"patience", cfg.early_stopping.patience},
        {"holdout_fraction", cfg.early_stopping.holdout_fraction}}},
  };
}

/// Adjacency used for propagation by a trained model: reliability-reweighted
/// for DeBaTeR-A, the plain graph otherwise; always degree-normalized.
struct PropagationGraph {
  BipartiteOperator op;
  std::size_t edges = 0;
  std::size_t pruned = 0;
  std::vector<double> scores;  // reliability per original edge (DeBaTeR-A only)
};

inline PropagationGraph build_propagation_graph(const SparseBipartiteAdjacency& adj, const InteractionTimeIndex& index,
                                                const ParameterStore& params, const TrainConfig& cfg) {
  PropagationGraph out;
  if (cfg.trainer == TrainerKind::debater_a) {
    out.scores = reliability(adj, index, params, cfg.ablation.time_in_scorer);
    const SparseBipartiteAdjacency kept = reweight(adj, out.scores, cfg.beta);
    if (kept.nnz() == 0) {
      throw Error(ErrorKind::empty_graph, "every edge fell at or below the reliability threshold " + std::to_string(cfg.beta));
    }
    out.edges = kept.nnz();
    out.pruned = adj.nnz() - kept.nnz();
    out.op = make_operator(normalize(kept));
  } else {
    out.edges = adj.nnz();
    out.op = make_operator(normalize(adj));
  }
  return out;
}

/// Final embeddings of a trained store over the graph built from `records`.
inline RankingModel make_ranking_model(const ParameterStore& params, const TrainConfig& cfg, const SplitDataset& data,
                                       std::span<const TemporalInteraction> records) {
  auto [adj, index] = build_adjacency(records, data.n_users, data.n_items, data.scheme);
  const PropagationGraph graph = build_propagation_graph(adj, index, params, cfg);
  PropagationOutput emb =
      propagate(graph.op, params.value(kUserEmbedding), params.value(kItemEmbedding), cfg.backbone.layers);
  RankingModel model;
  model.users = std::move(emb.users);
  model.items = std::move(emb.items);
  model.params = &params;
  model.use_time = cfg.ablation.time_in_loss_and_pred;
  return model;
}

struct StepLosses {
  double bpr = 0.0;
  double cl = 0.0;
  double au = 0.0;
  double total = 0.0;
  double gm = 0.0;
};

/// Raised when a loss turns non-finite; carries the parameters as they were
/// at the start of the failing epoch.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, ParameterStore last_finite, std::size_t epoch)
      : Error(ErrorKind::divergence, message), last_finite_(std::move(last_finite)), epoch_(epoch) {}

  const ParameterStore& last_finite() const { return last_finite_; }
  std::size_t epoch() const { return epoch_; }

 private:
  ParameterStore last_finite_;
  std::size_t epoch_;
};

struct TrainResult {
  ParameterStore params;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<nlohmann::json> log;
};

inline constexpr std::uint64_t kInitPurpose = 11;
inline constexpr std::uint64_t kGeneratorInitPurpose = 12;
inline constexpr std::uint64_t kSamplerPurpose = 13;
inline constexpr std::uint64_t kViewPurpose = 14;

/// One training run of the backbone, DeBaTeR-A or DeBaTeR-L.
///
/// All three share the batch step; DeBaTeR-A swaps the propagation graph
/// each epoch and DeBaTeR-L adds per-sample weights plus an alternating
/// generator update.
class Trainer {
 public:
  /// Trains on data.train. The caller owns data and must keep it alive.
  Trainer(const SplitDataset& data, TrainConfig cfg, std::uint64_t seed)
      : data_(data), cfg_(std::move(cfg)), seed_(seed),
        sampler_rng_(Rng::stream(seed, kSamplerPurpose)), view_rng_(Rng::stream(seed, kViewPurpose)) {
    cfg_.validate(data_.scheme.dims());
    if (data_.train.empty()) throw Error(ErrorKind::empty_dataset, "no training records");
    Rng init = Rng::stream(seed, kInitPurpose);
    init_backbone(params_, data_.n_users, data_.n_items, data_.scheme, cfg_.backbone.dim, init);
    if (cfg_.trainer == TrainerKind::debater_l) {
      Rng gen = Rng::stream(seed, kGeneratorInitPurpose);
      init_generator(params_, cfg_.backbone.dim, gen);
    }
    auto [adj, index] = build_adjacency(data_.train, data_.n_users, data_.n_items, data_.scheme);
    adj_ = std::move(adj);
    index_ = std::move(index);
    edges_ = make_train_edges(adj_, index_);
    if (cfg_.trainer != TrainerKind::debater_a) graph_ = build_propagation_graph(adj_, index_, params_, cfg_);
  }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const PropagationGraph& graph() const { return graph_; }
  const SparseBipartiteAdjacency& adjacency() const { return adj_; }
  const InteractionTimeIndex& time_index() const { return index_; }
  const TrainEdges& edges() const { return edges_; }
  std::string rng_state() const { return sampler_rng_.state() + "|" + view_rng_.state(); }

  /// Rebuilds the DeBaTeR-A graph from the current parameters.
  void refresh_graph() {
    if (cfg_.trainer == TrainerKind::debater_a) graph_ = build_propagation_graph(adj_, index_, params_, cfg_);
  }

  /// One pass over the train edges. Returns the epoch log record.
  nlohmann::json train_epoch(std::size_t epoch) {
    refresh_graph();
    const EpochBatches plan = sample_epoch(edges_, cfg_.batch_size, sampler_rng_);
    StepLosses sum;
    for (const auto& batch : plan.batches) {
      const StepLosses s = train_batch(batch);
      sum.bpr += s.bpr;
      sum.cl += s.cl;
      sum.au += s.au;
      sum.total += s.total;
      sum.gm += s.gm;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, plan.batches.size()));
    nlohmann::json rec = {
        {"epoch", epoch},
        {"loss", {{"bpr", sum.bpr / n}, {"cl", sum.cl / n}, {"au", sum.au / n}, {"total", sum.total / n}}},
        {"batches", plan.batches.size()},
        {"negatives_skipped", plan.skipped},
    };
    if (cfg_.trainer == TrainerKind::debater_l) rec["loss"]["gm"] = sum.gm / n;
    if (cfg_.trainer == TrainerKind::debater_a) {
      const auto dec = deciles(graph_.scores);
      rec["reliability_deciles"] = std::vector<double>(dec.begin(), dec.end());
      rec["edges_pruned"] = graph_.pruned;
    }
    return rec;
  }

  /// Backbone step (and, for DeBaTeR-L, the generator step) on one batch.
  StepLosses train_batch(const TrainingBatch& batch) {
    const std::size_t d = cfg_.backbone.dim;
    const std::size_t n = batch.size();
    const BipartiteOperator& op = graph_.op;
    const BatchLayout layout = make_layout(batch, data_.n_users, data_.n_items);
    const Tensor time_values =
        cfg_.ablation.time_in_loss_and_pred ? encode_times(batch.times, params_, d) : Tensor(n, d);

    std::optional<LayerCache> cache;
    cache.emplace(op, params_.value(kUserEmbedding), params_.value(kItemEmbedding), cfg_.backbone.layers);

    ShufflePlan plan1, plan2;
    Tensor offset1, offset2;
    if (cfg_.loss.cl > 0.0) {
      plan1 = draw_shuffle_plan(view_rng_, data_.n_users, data_.n_items, cfg_.backbone.layers);
      plan2 = draw_shuffle_plan(view_rng_, data_.n_users, data_.n_items, cfg_.backbone.layers);
      offset1 = perturbation_offset(op, *cache, cfg_.backbone.eps, plan1, layout.rows);
      offset2 = perturbation_offset(op, *cache, cfg_.backbone.eps, plan2, layout.rows);
    }

    // Per-sample weights: ones, or the generator's output held constant.
    Tensor w_pos(n, 1, 1.0), w_neg(n, 1, 1.0);
    Tensor packed_values;
    if (cfg_.trainer == TrainerKind::debater_l) {
      packed_values = propagate_selected(op, *cache, layout.rows);
      const Tensor inputs = generator_inputs(packed_values, layout, batch);
      ad::Tape tape;
      SlotVars vars;
      for (const auto& name : generator_slots()) vars.bind(name, tape.constant(params_.value(name)));
      const Tensor w = generator_forward(tape.constant(inputs), vars).value();
      for (std::size_t b = 0; b < n; ++b) {
        w_pos[b] = w[b];
        w_neg[b] = w[n + b];
      }
    }

    StepLosses out;
    const auto slots = backbone_slots(data_.scheme);
    auto objective = [&](ad::Tape& tape, const SlotVars& vars) {
      const ad::Var packed = propagate_rows(op, vars[kUserEmbedding], vars[kItemEmbedding], *cache, layout.rows);
      const ad::Var et = cfg_.ablation.time_in_loss_and_pred ? encode_times(batch.times, vars, data_.scheme.dims())
                                                             : tape.constant(Tensor(n, d));
      const ad::Var user_t = ad::add(ad::gather_rows(packed, layout.user_row), et);
      const ad::Var pos_t = ad::add(ad::gather_rows(packed, layout.pos_row), et);
      const ad::Var neg_t = ad::add(ad::gather_rows(packed, layout.neg_row), et);
      const ad::Var wp = tape.constant(w_pos);
      const ad::Var wn = tape.constant(w_neg);
      const ad::Var bpr = bpr_loss(user_t, pos_t, neg_t, wp, wn);
      ad::Var cl = tape.constant(Tensor::scalar(0.0));
      if (cfg_.loss.cl > 0.0) {
        const ad::Var et_users = ad::gather_rows(et, layout.distinct_user_first);
        const ad::Var et_items = ad::gather_rows(et, layout.distinct_pos_first);
        auto view = [&](const Tensor& offset) {
          const ad::Var v = ad::add(packed, tape.constant(offset));
          return std::pair{ad::add(ad::gather_rows(v, layout.distinct_user_rows), et_users),
                           ad::add(ad::gather_rows(v, layout.distinct_pos_rows), et_items)};
        };
        const auto [u1, i1] = view(offset1);
        const auto [u2, i2] = view(offset2);
        cl = cl_loss(u1, u2, i1, i2, cfg_.backbone.tau);
      }
      const ad::Var du = ad::gather_rows(user_t, layout.distinct_user_first);
      const ad::Var di = ad::gather_rows(pos_t, layout.distinct_pos_first);
      const ad::Var au = au_loss(user_t, pos_t, wp, du, di, cfg_.loss.gamma);
      const ad::Var total = combined_loss(bpr, cl, au, cfg_.loss);
      out.bpr = bpr.value().item();
      out.cl = cl.value().item();
      out.au = au.value().item();
      return total;
    };
    ValueAndGradient vg;
    try {
      vg = value_and_grad(params_, slots, objective, ad::TapeOptions{cfg_.check_finite});
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numerical_fault) throw Error(ErrorKind::divergence, e.what());
      throw;
    }
    out.total = vg.value;
    cache.reset();

    BatchRows rows;
    if (cfg_.trainer == TrainerKind::debater_l) rows = batch_rows(packed_values, time_values, layout);
    step(params_, vg.grads, cfg_.lr, cfg_.weight_decay);
    if (cfg_.trainer == TrainerKind::debater_l) out.gm = generator_step(op, rows, layout, packed_values, batch);
    return out;
  }

  /// Generator inputs [e_u | e_j | e_t] for positives (first n rows) then negatives.
  Tensor generator_inputs(const Tensor& packed, const BatchLayout& layout, const TrainingBatch& batch) const {
    const std::size_t d = cfg_.backbone.dim;
    const std::size_t n = batch.size();
    const Tensor time = cfg_.ablation.time_in_scorer ? encode_times(batch.times, params_, d) : Tensor(n, d);
    Tensor x(2 * n, 3 * d);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t half = 0; half < 2; ++half) {
        auto dst = x.row(half * n + b);
        const auto u = packed.row(layout.user_row[b]);
        const auto i = packed.row(half == 0 ? layout.pos_row[b] : layout.neg_row[b]);
        const auto t = time.row(b);
        std::copy(u.begin(), u.end(), dst.begin());
        std::copy(i.begin(), i.end(), dst.begin() + static_cast<std::ptrdiff_t>(d));
        std::copy(t.begin(), t.end(), dst.begin() + static_cast<std::ptrdiff_t>(2 * d));
      }
    }
    return x;
  }

  BatchRows batch_rows(const Tensor& packed, const Tensor& time, const BatchLayout& layout) const {
    const std::size_t n = layout.user_row.size();
    const std::size_t d = packed.cols();
    BatchRows rows{Tensor(n, d), Tensor(n, d), Tensor(n, d), Tensor(layout.distinct_user_first.size(), d),
                   Tensor(layout.distinct_pos_first.size(), d)};
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < d; ++c) {
        rows.user_t(b, c) = packed(layout.user_row[b], c) + time(b, c);
        rows.pos_t(b, c) = packed(layout.pos_row[b], c) + time(b, c);
        rows.neg_t(b, c) = packed(layout.neg_row[b], c) + time(b, c);
      }
    }
    for (std::size_t r = 0; r < layout.distinct_user_first.size(); ++r) {
      const auto src = rows.user_t.row(layout.distinct_user_first[r]);
      std::copy(src.begin(), src.end(), rows.distinct_users_t.row(r).begin());
    }
    for (std::size_t r = 0; r < layout.distinct_pos_first.size(); ++r) {
      const auto src = rows.pos_t.row(layout.distinct_pos_first[r]);
      std::copy(src.begin(), src.end(), rows.distinct_items_t.row(r).begin());
    }
    return rows;
  }

  /// Gradient-matching update of the generator slots only.
  double generator_step(const BipartiteOperator& op, const BatchRows& rows, const BatchLayout& layout,
                        const Tensor& packed, const TrainingBatch& batch) {
    const std::size_t n = batch.size();
    const Tensor inputs = generator_inputs(packed, layout, batch);
    const auto slots = generator_slots();
    const std::size_t layers = cfg_.backbone.layers;
    auto inner = [&](ad::Tape& tape, const SlotVars& vars) {
      const ad::Var w = generator_forward(tape.constant(inputs), vars);
      const ad::Var w_pos = ad::slice_rows(w, 0, n);
      const ad::Var w_neg = ad::slice_rows(w, n, n);
      const ad::Var s_bpr = bpr_row_gradient(tape, rows, layout, w_pos, w_neg);
      const ad::Var s_au = au_row_gradient(tape, rows, layout, w_pos, cfg_.loss.gamma);
      return std::vector<ad::Var>{propagate_rows_adjoint(op, s_bpr, layers, layout.rows),
                                  propagate_rows_adjoint(op, s_au, layers, layout.rows)};
    };
    auto outer = [](ad::Tape&, std::span<const ad::Var> g) { return gradient_matching_loss(g[0], g[1]); };
    ValueAndGradient vg;
    try {
      vg = grad_of_grad_objective(params_, slots, inner, outer, ad::TapeOptions{cfg_.check_finite});
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numerical_fault) throw Error(ErrorKind::divergence, e.what());
      throw;
    }
    step(params_, vg.grads, cfg_.lr, cfg_.weight_decay);
    return vg.value;
  }

 private:
  const SplitDataset& data_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  ParameterStore params_;
  SparseBipartiteAdjacency adj_;
  InteractionTimeIndex index_;
  TrainEdges edges_;
  PropagationGraph graph_;
  Rng sampler_rng_;
  Rng view_rng_;
};

/// Full training loop with optional early stopping on a sequential holdout
/// carved from the end of the train records. The holdout is only used for
/// model selection.
inline TrainResult train(const SplitDataset& data, const TrainConfig& cfg, std::uint64_t seed,
                         std::ostream* run_log = nullptr) {
  std::optional<SplitDataset> fit;
  if (cfg.early_stopping.enabled) fit = holdout_split(data, cfg.early_stopping.holdout_fraction);
  const SplitDataset& train_on = fit ? *fit : data;
  Trainer trainer(train_on, cfg, seed);
  TrainResult result;
  std::optional<ParameterStore> best;
  double best_score = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const ParameterStore last_finite = trainer.params();
    nlohmann::json rec;
    try {
      rec = trainer.train_epoch(epoch);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergence) throw;
      throw TrainingDiverged(std::string(e.what()) + " in epoch " + std::to_string(epoch), last_finite, epoch);
    }
    result.epochs_run = epoch;
    if (fit) {
      const RankingModel model = make_ranking_model(trainer.params(), cfg, *fit, fit->train);
      const MetricsReport val = evaluate(model, *fit, {20});
      const double score = val.ndcg_at(20);
      rec["validation"] = {{"ndcg@20", score}};
      if (score > best_score) {
        best_score = score;
        best = trainer.params();
        result.best_epoch = epoch;
      }
    } else {
      result.best_epoch = epoch;
    }
    if (run_log) *run_log << rec.dump() << '\n';
    result.log.push_back(std::move(rec));
    if (fit && epoch - result.best_epoch >= cfg.early_stopping.patience) break;
  }
  result.params = best ? std::move(*best) : trainer.params();
  return result;
}

}  // namespace debater
