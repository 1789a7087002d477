/*
 * Copyright 2026 The Twostage Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twostage/data/task.hpp"
#include "twostage/error.hpp"
#include "twostage/learning/losses.hpp"
#include "twostage/learning/scorers.hpp"
#include "twostage/numerics/optim.hpp"
#include "twostage/pipeline/metrics.hpp"

namespace twostage::learning {

/// Hyper-parameters for single-model and mutual training. Defaults follow the
/// published setup except the learning rate, which is sized for small models
/// trained from scratch.
struct TrainConfig {
  MimicryWeights mimicry;  // alpha = 1.0, tau = 3.0
  std::size_t delta_r = 32;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double peak_lr = 1e-3;
  double warmup_fraction = 0.1;
  double clip = 10.0;
  std::uint64_t seed = 0;
  /// Epochs without validation hits@1 improvement before stopping; 0 disables.
  std::size_t patience = 3;
  bool shuffle = true;

  void validate() const {
    if (!(mimicry.alpha >= 0.0)) throw std::invalid_argument("TrainConfig: alpha must be >= 0");
    if (!(mimicry.tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be > 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("TrainConfig: peak_lr must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
      throw std::invalid_argument("TrainConfig: warmup_fraction must lie in [0, 1]");
    if (!(clip > 0.0)) throw std::invalid_argument("TrainConfig: clip must be positive");
  }
};

using MutualConfig = TrainConfig;

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double retriever_nll = kAbsent;
  double retriever_kl = kAbsent;
  double selector_nll = kAbsent;
  double selector_kl = kAbsent;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double retriever_hits1 = kAbsent;
  double selector_hits1 = kAbsent;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// One JSON object per line: every step record, then every epoch record.
  std::string to_jsonl() const {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    std::string out;
    for (const auto& s : steps)
      out += nlohmann::json{{"type", "step"},
                            {"step", s.step},
                            {"epoch", s.epoch},
                            {"lr", s.lr},
                            {"retriever_nll", num(s.retriever_nll)},
                            {"retriever_kl", num(s.retriever_kl)},
                            {"selector_nll", num(s.selector_nll)},
                            {"selector_kl", num(s.selector_kl)}}
                 .dump() +
             "\n";
    for (const auto& e : epochs)
      out += nlohmann::json{{"type", "epoch"},
                            {"epoch", e.epoch},
                            {"retriever_val_hits@1", num(e.retriever_hits1)},
                            {"selector_val_hits@1", num(e.selector_hits1)}}
                 .dump() +
             "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << to_jsonl();
  }
};

/// Points in one mutual-learning iteration, in the order they occur.
enum class Phase {
  kComputePredictions,  // p and q from the current parameters
  kUpdateRetriever,     // Theta_g step against constant q
  kRefreshRetriever,    // p recomputed with the updated Theta_g
  kUpdateSelector,      // Theta_s step against constant (refreshed) p
  kRefreshSelector,     // q recomputed with the updated Theta_s
};

struct TraceEvent {
  Phase phase;
  std::uint64_t step = 0;
  /// Softened distributions relevant to the phase, one per batch row: p for
  /// kComputePredictions/kRefreshRetriever/kUpdateSelector, q for
  /// kUpdateRetriever/kRefreshSelector. kComputePredictions also fills `other`
  /// with q.
  std::vector<std::vector<double>> distributions;
  std::vector<std::vector<double>> other;
};

using TraceFn = std::function<void(const TraceEvent&)>;

namespace detail {

/// Forward state of one batch row kept alive until its backward pass.
struct RowPass {
  std::unique_ptr<numerics::Tape> tape;
  std::unique_ptr<encoders::ParamBinding> bind;
  numerics::Var logits;
};

struct LossMeans {
  double supervised = 0.0;
  double mimicry = 0.0;
};

template <typename Scorer>
class Learner {
 public:
  Learner(Scorer& scorer, const TrainConfig& cfg, numerics::ScheduleConfig schedule)
      : scorer_(&scorer), cfg_(&cfg), schedule_(schedule),
        adam_(numerics::AdamState::like(scorer.params().values())) {}

  Scorer& scorer() { return *scorer_; }

  RowPass forward(std::size_t row, std::uint64_t step) const {
    const data::CandidateSet& set = scorer_->task().sets[row];
    RowPass pass;
    pass.tape = std::make_unique<numerics::Tape>();
    pass.bind = std::make_unique<encoders::ParamBinding>(*pass.tape, scorer_->params(), true);
    numerics::Rng rng = numerics::stream(cfg_->seed, {Scorer::kStreamTag, step, row});
    pass.logits = scorer_->logits(*pass.bind, set, true, rng);
    return pass;
  }

  /// Loss of one row (targets may be empty), backpropagated and added to
  /// `grads`.
  void backward(RowPass& pass, std::size_t row, std::span<const double> target, std::size_t batch_rows,
                std::vector<numerics::Array>& grads, LossMeans& means, std::uint64_t step,
                const char* who) const {
    const data::CandidateSet& set = scorer_->task().sets[row];
    RowLoss loss = row_loss(pass.logits, set.positive_slot, target, cfg_->mimicry, batch_rows);
    if (!std::isfinite(loss.total.item()))
      throw NonFiniteLoss(std::string(who) + " loss is not finite at step " + std::to_string(step) +
                          " (row " + std::to_string(row) + ")");
    pass.tape->backward(loss.total);
    pass.bind->accumulate_into(grads);
    means.supervised += loss.supervised / static_cast<double>(batch_rows);
    means.mimicry += loss.mimicry / static_cast<double>(batch_rows);
  }

  std::vector<numerics::Array> zero_grads() const {
    std::vector<numerics::Array> g;
    for (const auto& p : scorer_->params().values()) g.emplace_back(p.shape(), 0.0);
    return g;
  }

  double update(std::vector<numerics::Array>& grads, std::uint64_t step) {
    numerics::clip_global_norm(grads, cfg_->clip);
    const double lr = numerics::lr_at(step, schedule_);
    numerics::adam_step(scorer_->params().values(), grads, adam_, lr);
    return lr;
  }

  /// Eval-mode tau-softened distribution for a row.
  std::vector<double> predict(std::size_t row) const {
    return numerics::softmax_temp(scorer_->scores(scorer_->task().sets[row]), cfg_->mimicry.tau);
  }

 private:
  Scorer* scorer_;
  const TrainConfig* cfg_;
  numerics::ScheduleConfig schedule_;
  numerics::AdamState adam_;
};

template <typename Scorer>
double validation_hits1(const Scorer& scorer, const std::vector<data::CandidateSet>& sets) {
  if (sets.empty()) return kAbsent;
  const auto all = scorer.scores_all(sets);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (pipeline::rank_of_positive(all[i], sets[i].candidates, sets[i].positive_slot) == 1) ++hits;
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

inline numerics::ScheduleConfig schedule_for(const TrainConfig& cfg, std::size_t rows) {
  const std::size_t per_epoch = (rows + cfg.batch_size - 1) / cfg.batch_size;
  numerics::ScheduleConfig s;
  s.peak_lr = cfg.peak_lr;
  s.total_steps = std::max<std::uint64_t>(1, per_epoch * cfg.epochs);
  s.warmup_steps = static_cast<std::uint64_t>(cfg.warmup_fraction * static_cast<double>(s.total_steps));
  return s;
}

/// Best-epoch bookkeeping for validation-driven early stopping.
class EarlyStopper {
 public:
  EarlyStopper(const encoders::ParamSet& params, std::size_t patience)
      : patience_(patience), best_(params.values()) {}

  void observe(double hits1, const encoders::ParamSet& params) {
    if (std::isnan(hits1)) return;
    if (hits1 > best_score_) {
      best_score_ = hits1;
      best_ = params.values();
      stale_ = 0;
    } else {
      ++stale_;
    }
  }
  bool exhausted() const { return patience_ > 0 && stale_ >= patience_; }
  bool tracked() const { return best_score_ > -1.0; }
  void restore(encoders::ParamSet& params) const {
    if (patience_ > 0 && tracked()) params.values() = best_;
  }

 private:
  std::size_t patience_;
  std::vector<numerics::Array> best_;
  double best_score_ = -2.0;
  std::size_t stale_ = 0;
};

}  // namespace detail

/// Supervised candidate-NLL training of one scorer. The model behind
/// `scorer` is updated in place. With `validation`, hits@1 is logged per
/// epoch, training stops after `patience` stale epochs, and the best epoch's
/// parameters are restored.
template <typename Scorer>
TrainReport train_single(Scorer& scorer, const TrainConfig& cfg, const Scorer* validation = nullptr) {
  cfg.validate();
  const data::RankingTask& task = scorer.task();
  TrainReport report;
  if (cfg.epochs == 0 || task.size() == 0) return report;
  detail::Learner<Scorer> learner(scorer, cfg, detail::schedule_for(cfg, task.size()));
  detail::EarlyStopper stopper(scorer.params(), cfg.patience);
  constexpr bool is_retriever = std::is_same_v<Scorer, RetrieverScorer>;

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = data::epoch_order(task.size(), cfg.seed, epoch, cfg.shuffle);
    for (const auto& batch : data::make_batches(order, cfg.batch_size)) {
      auto grads = learner.zero_grads();
      detail::LossMeans means;
      for (std::size_t row : batch) {
        detail::RowPass pass = learner.forward(row, step);
        learner.backward(pass, row, {}, batch.size(), grads, means, step, is_retriever ? "retriever" : "selector");
      }
      StepRecord rec{step, epoch, learner.update(grads, step)};
      (is_retriever ? rec.retriever_nll : rec.selector_nll) = means.supervised;
      report.steps.push_back(rec);
      ++step;
    }
    EpochRecord er{epoch};
    if (validation) {
      const double h = detail::validation_hits1(*validation, validation->task().sets);
      (is_retriever ? er.retriever_hits1 : er.selector_hits1) = h;
      stopper.observe(h, scorer.params());
    }
    report.epochs.push_back(er);
    if (stopper.exhausted()) break;
  }
  stopper.restore(scorer.params());
  return report;
}

/// Alternating mutual learning. Per batch: compute p and q; update Theta_g on
/// nll + alpha * D(q || p) with q constant; refresh p; update Theta_s on
/// nll + alpha * D(p || q) with the refreshed p constant; refresh q. Both
/// scorers must view the same RankingTask rows.
inline TrainReport train_mutual(RetrieverScorer& retriever, SelectorScorer& selector, const TrainConfig& cfg,
                                const RetrieverScorer* retriever_validation = nullptr,
                                const SelectorScorer* selector_validation = nullptr,
                                const TraceFn& trace = nullptr) {
  cfg.validate();
  const data::RankingTask& task = retriever.task();
  if (task.size() != selector.task().size())
    throw ContractViolation("train_mutual: scorers view different tasks");
  TrainReport report;
  if (cfg.epochs == 0 || task.size() == 0) return report;
  const auto schedule = detail::schedule_for(cfg, task.size());
  detail::Learner<RetrieverScorer> g(retriever, cfg, schedule);
  detail::Learner<SelectorScorer> s(selector, cfg, schedule);
  detail::EarlyStopper g_stop(retriever.params(), cfg.patience);
  detail::EarlyStopper s_stop(selector.params(), cfg.patience);
  const bool mimic = cfg.mimicry.alpha != 0.0;
  const double tau = cfg.mimicry.tau;

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = data::epoch_order(task.size(), cfg.seed, epoch, cfg.shuffle);
    for (const auto& batch : data::make_batches(order, cfg.batch_size)) {
      const std::size_t n = batch.size();

      // Selector forward passes stay alive until its own update.
      std::vector<detail::RowPass> s_pass;
      std::vector<std::vector<double>> q(n);
      for (std::size_t i = 0; i < n; ++i) {
        s_pass.push_back(s.forward(batch[i], step));
        q[i] = numerics::softmax_temp(s_pass[i].logits.value().span(), tau);
      }

      auto g_grads = g.zero_grads();
      detail::LossMeans g_means;
      std::vector<std::vector<double>> p(n);
      for (std::size_t i = 0; i < n; ++i) {
        detail::RowPass pass = g.forward(batch[i], step);
        p[i] = numerics::softmax_temp(pass.logits.value().span(), tau);
        g.backward(pass, batch[i], mimic ? std::span<const double>(q[i]) : std::span<const double>(), n,
                   g_grads, g_means, step, "retriever");
      }
      if (trace) trace({Phase::kComputePredictions, step, p, q});
      const double lr = g.update(g_grads, step);
      if (trace) trace({Phase::kUpdateRetriever, step, q, {}});

      if (mimic || trace) {
        for (std::size_t i = 0; i < n; ++i) p[i] = g.predict(batch[i]);
        if (trace) trace({Phase::kRefreshRetriever, step, p, {}});
      }

      auto s_grads = s.zero_grads();
      detail::LossMeans s_means;
      for (std::size_t i = 0; i < n; ++i)
        s.backward(s_pass[i], batch[i], mimic ? std::span<const double>(p[i]) : std::span<const double>(), n,
                   s_grads, s_means, step, "selector");
      s_pass.clear();
      s.update(s_grads, step);
      if (trace) {
        trace({Phase::kUpdateSelector, step, p, {}});
        for (std::size_t i = 0; i < n; ++i) q[i] = s.predict(batch[i]);
        trace({Phase::kRefreshSelector, step, q, {}});
      }

      report.steps.push_back({step, epoch, lr, g_means.supervised, mimic ? g_means.mimicry : 0.0,
                              s_means.supervised, mimic ? s_means.mimicry : 0.0});
      ++step;
    }
    EpochRecord er{epoch};
    if (retriever_validation) {
      er.retriever_hits1 = detail::validation_hits1(*retriever_validation, retriever_validation->task().sets);
      g_stop.observe(er.retriever_hits1, retriever.params());
    }
    if (selector_validation) {
      er.selector_hits1 = detail::validation_hits1(*selector_validation, selector_validation->task().sets);
      s_stop.observe(er.selector_hits1, selector.params());
    }
    report.epochs.push_back(er);
    const bool g_done = !retriever_validation || g_stop.exhausted();
    const bool s_done = !selector_validation || s_stop.exhausted();
    if ((retriever_validation || selector_validation) && g_done && s_done) break;
  }
  g_stop.restore(retriever.params());
  s_stop.restore(selector.params());
  return report;
}

}  // namespace twostage::learning
