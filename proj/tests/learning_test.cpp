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

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "twostage/data/synthetic.hpp"
#include "twostage/learning/trainer.hpp"
#include "twostage/text/vocab.hpp"

namespace twostage::learning {
namespace {

using encoders::BiEncoder;
using encoders::CrossEncoder;
using encoders::EncoderConfig;
using numerics::Array;

TEST(NllLoss, UniformIsLogM) {
  const std::vector<double> flat(33, 0.7);
  EXPECT_NEAR(nll_loss(flat, 12), std::log(33.0), 1e-9);
  EXPECT_NEAR(nll_loss(flat, 0), 3.4965, 5e-5);
}

TEST(NllLoss, ConfidentCase) {
  const double loss = nll_loss(std::vector<double>{10.0, -10.0}, 0);
  EXPECT_NEAR(loss, std::log1p(std::exp(-20.0)), 1e-14);
  EXPECT_NEAR(loss, 2.06e-9, 1e-11);
}

TEST(NllLoss, ShiftInvariantAndChecked) {
  const std::vector<double> s{0.3, -1.1, 2.4, 0.0};
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 123.25;
  EXPECT_LT(std::abs(nll_loss(s, 2) - nll_loss(shifted, 2)), 1e-12);
  EXPECT_THROW(nll_loss(s, 4), ContractViolation);
}

TEST(KlDiv, Examples) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  EXPECT_EQ(kl_div(p, p), 0.0);
  EXPECT_NEAR(kl_div(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}),
              0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-12);
  EXPECT_NEAR(kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}), 0.5108, 1e-4);
}

TEST(KlDiv, NonNegativeAndZeroOnlyWhenEqual) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const auto q = numerics::softmax_temp(a, 1.0);
    const auto p = numerics::softmax_temp(b, 1.0);
    EXPECT_GE(kl_div(q, p), 0.0);
    EXPECT_GT(kl_div(q, p), 1e-9);
    EXPECT_LT(std::abs(kl_div(q, q)), 1e-9);
  }
}

TEST(KlDiv, Errors) {
  EXPECT_THROW(kl_div(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), ContractViolation);
  EXPECT_THROW(kl_div(std::vector<double>{0.7, 0.7}, std::vector<double>{0.5, 0.5}), ContractViolation);
  EXPECT_THROW(kl_div(std::vector<double>{1.5, -0.5}, std::vector<double>{0.5, 0.5}), ContractViolation);
}

TEST(MutualLosses, AlphaZeroIsPlainNll) {
  const std::vector<double> g{0.4, -0.2, 1.3}, s{2.0, 0.1, -0.5};
  const auto [lg, ls] = mutual_losses(g, s, 1, {0.0, 3.0});
  EXPECT_EQ(lg, nll_loss(g, 1));
  EXPECT_EQ(ls, nll_loss(s, 1));
}

TEST(MutualLosses, IdenticalLogits) {
  const std::vector<double> g{0.4, -0.2, 1.3};
  const auto [lg, ls] = mutual_losses(g, g, 2, {1.0, 3.0});
  EXPECT_NEAR(lg, nll_loss(g, 2), 1e-15);
  EXPECT_EQ(lg, ls);
  const auto [lg0, ls0] = mutual_losses(g, g, 0, {1.0, 3.0});
  EXPECT_NE(lg0, ls);
  (void)ls0;
}

TEST(MutualLosses, CompositionalOracle) {
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> g(33), s(33);
    for (auto& v : g) v = n(rng);
    for (auto& v : s) v = n(rng);
    const std::size_t slot = static_cast<std::size_t>(t % 33);
    const auto [lg, ls] = mutual_losses(g, s, slot, {1.0, 3.0});
    const auto p = numerics::softmax_temp(g, 3.0);
    const auto q = numerics::softmax_temp(s, 3.0);
    EXPECT_NEAR(lg, nll_loss(g, slot) + kl_div(q, p), 1e-12);
    EXPECT_NEAR(ls, nll_loss(s, slot) + kl_div(p, q), 1e-12);
  }
  EXPECT_THROW(mutual_losses(std::vector<double>{1, 2}, std::vector<double>{1}, 0, {}), ContractViolation);
}

TEST(MutualLosses, MimicryGradientMatchesFiniteDifference) {
  const std::vector<double> target = numerics::softmax_temp(std::vector<double>{0.3, 1.0, -0.4, 0.0}, 3.0);
  const std::vector<double> z{0.9, -0.3, 0.2, 1.7};
  auto value = [&](const std::vector<double>& logits) {
    return kl_div(target, numerics::softmax_temp(logits, 3.0));
  };
  Tape tape;
  Var v = tape.variable(Array::vector(z));
  Var kl = numerics::kl_to_target(target, v, 3.0);
  EXPECT_NEAR(kl.item(), value(z), 1e-14);
  tape.backward(kl);
  const Array g = tape.grad(v);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto up = z, down = z;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(g[i], (value(up) - value(down)) / 2e-6, 1e-8);
  }
}

// Small synthetic setup shared by the training tests.
struct Fixture {
  data::SyntheticCorpus syn;
  data::Corpus train;
  text::Vocabulary vocab;
  data::RankingTask task;
  EncoderConfig cfg;

  Fixture(std::size_t n, std::size_t delta_r, std::uint64_t seed = 1) {
    Rng rng(seed);
    syn = data::make_synthetic_corpus(n, 80, 3, rng);
    train = syn.corpus;
    vocab = text::build_vocab(train.all_sequences(), 1, 100000);
    task = data::RankingTask::with_sampled_negatives(train, delta_r, seed);
    cfg.vocab_size = vocab.size();
    cfg.model_dim = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_dim = 32;
    cfg.projection_dim = 16;
    cfg.head_dim = 16;
  }
};

TrainConfig quick_config(std::size_t epochs, std::size_t batch) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.delta_r = 3;
  c.warmup_fraction = 0.0;
  c.patience = 0;
  c.seed = 5;
  return c;
}

double max_abs_diff(const encoders::ParamSet& a, const encoders::ParamSet& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

TEST(TrainMutual, ZeroEpochsLeavesParameters) {
  Fixture f(12, 3);
  BiEncoder bi(f.cfg, 1);
  CrossEncoder cr(f.cfg, 2);
  const auto bi0 = bi.params(), cr0 = cr.params();
  RetrieverScorer rs(bi, f.vocab, f.task);
  SelectorScorer ss(cr, f.vocab, f.task);
  const TrainReport r = train_mutual(rs, ss, quick_config(0, 4));
  EXPECT_TRUE(r.steps.empty());
  EXPECT_TRUE(bi.params() == bi0);
  EXPECT_TRUE(cr.params() == cr0);
}

TEST(TrainMutual, AlphaZeroMatchesIndependentRuns) {
  Fixture f(20, 3);
  TrainConfig c = quick_config(2, 4);
  c.mimicry.alpha = 0.0;
  BiEncoder bi_m(f.cfg, 1), bi_s(f.cfg, 1);
  CrossEncoder cr_m(f.cfg, 2), cr_s(f.cfg, 2);
  RetrieverScorer rs_m(bi_m, f.vocab, f.task), rs_s(bi_s, f.vocab, f.task);
  SelectorScorer ss_m(cr_m, f.vocab, f.task), ss_s(cr_s, f.vocab, f.task);
  const TrainReport mutual = train_mutual(rs_m, ss_m, c);
  const TrainReport g_only = train_single(rs_s, c);
  const TrainReport s_only = train_single(ss_s, c);
  EXPECT_LE(max_abs_diff(bi_m.params(), bi_s.params()), 1e-12);
  EXPECT_LE(max_abs_diff(cr_m.params(), cr_s.params()), 1e-12);
  EXPECT_FALSE(bi_m.params() == BiEncoder(f.cfg, 1).params());
  ASSERT_EQ(mutual.steps.size(), g_only.steps.size());
  for (std::size_t i = 0; i < mutual.steps.size(); ++i) {
    EXPECT_EQ(mutual.steps[i].retriever_nll, g_only.steps[i].retriever_nll);
    EXPECT_EQ(mutual.steps[i].selector_nll, s_only.steps[i].selector_nll);
    EXPECT_EQ(mutual.steps[i].retriever_kl, 0.0);
  }
}

TEST(TrainMutual, AlphaZeroRetrieverIgnoresSelectorData) {
  Fixture f(16, 3);
  Fixture other(16, 3, 9);
  TrainConfig c = quick_config(1, 4);
  c.mimicry.alpha = 0.0;
  BiEncoder bi_a(f.cfg, 1), bi_b(f.cfg, 1);
  EncoderConfig oc = other.cfg;
  CrossEncoder cr_a(f.cfg, 2), cr_b(oc, 2);
  RetrieverScorer rs_a(bi_a, f.vocab, f.task), rs_b(bi_b, f.vocab, f.task);
  SelectorScorer ss_a(cr_a, f.vocab, f.task), ss_b(cr_b, other.vocab, other.task);
  train_mutual(rs_a, ss_a, c);
  train_mutual(rs_b, ss_b, c);
  EXPECT_TRUE(bi_a.params() == bi_b.params());
}

TEST(TrainMutual, NoGradientCrossesModels) {
  Fixture f(4, 3);
  BiEncoder bi(f.cfg, 1);
  CrossEncoder cr(f.cfg, 2);
  RetrieverScorer rs(bi, f.vocab, f.task);
  SelectorScorer ss(cr, f.vocab, f.task);
  const auto& set = f.task.sets[0];
  Tape g_tape, s_tape;
  encoders::ParamBinding g_bind(g_tape, bi.params(), true), s_bind(s_tape, cr.params(), true);
  Rng r1(1), r2(2);
  Var g_logits = rs.logits(g_bind, set, true, r1);
  Var s_logits = ss.logits(s_bind, set, true, r2);
  const auto q = numerics::softmax_temp(s_logits.value().span(), 3.0);
  const RowLoss lg = row_loss(g_logits, set.positive_slot, q, {1.0, 3.0}, 1);
  g_tape.backward(lg.total);
  EXPECT_GT(lg.mimicry, 0.0);
  for (const Array& grad : s_bind.gradients())
    for (double v : grad.values()) ASSERT_EQ(v, 0.0);
  double g_norm = 0.0;
  for (const Array& grad : g_bind.gradients())
    for (double v : grad.values()) g_norm += v * v;
  EXPECT_GT(g_norm, 0.0);
}

TEST(TrainMutual, RefreshOrderFollowsAlgorithm) {
  Fixture f(8, 3);
  TrainConfig c = quick_config(1, 8);
  BiEncoder bi(f.cfg, 1);
  CrossEncoder cr(f.cfg, 2);
  const CrossEncoder cr0 = cr;
  RetrieverScorer rs(bi, f.vocab, f.task);
  SelectorScorer ss(cr, f.vocab, f.task);
  std::vector<Phase> phases;
  std::vector<std::vector<double>> p_before, p_refreshed, p_used, q_initial;
  std::vector<std::vector<double>> p_live;
  const auto batch = data::make_batches(data::epoch_order(f.task.size(), c.seed, 0), c.batch_size)[0];
  auto trace = [&](const TraceEvent& e) {
    phases.push_back(e.phase);
    if (e.phase == Phase::kComputePredictions) {
      p_before = e.distributions;
      q_initial = e.other;
    }
    if (e.phase == Phase::kRefreshRetriever) {
      p_refreshed = e.distributions;
      // Recompute from the retriever as it stands now.
      for (std::size_t row : batch)
        p_live.push_back(numerics::softmax_temp(rs.scores(f.task.sets[row]), c.mimicry.tau));
    }
    if (e.phase == Phase::kUpdateSelector) p_used = e.distributions;
  };
  const TrainReport report = train_mutual(rs, ss, c, nullptr, nullptr, trace);
  ASSERT_EQ(report.steps.size(), 1u);
  EXPECT_EQ(phases, (std::vector<Phase>{Phase::kComputePredictions, Phase::kUpdateRetriever,
                                        Phase::kRefreshRetriever, Phase::kUpdateSelector,
                                        Phase::kRefreshSelector}));
  EXPECT_EQ(p_refreshed, p_live);
  EXPECT_EQ(p_used, p_refreshed);
  EXPECT_NE(p_refreshed, p_before);

  // Replay the selector step against the refreshed p and against the stale p.
  auto replay = [&](const std::vector<std::vector<double>>& targets) {
    CrossEncoder model = cr0;
    SelectorScorer scorer(model, f.vocab, f.task);
    std::vector<Array> grads;
    for (const auto& a : model.params().values()) grads.emplace_back(a.shape(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Tape tape;
      encoders::ParamBinding bind(tape, model.params(), true);
      Rng rng = numerics::stream(c.seed, {SelectorScorer::kStreamTag, 0, batch[i]});
      Var logits = scorer.logits(bind, f.task.sets[batch[i]], true, rng);
      Var loss = numerics::add(numerics::nll(logits, f.task.sets[batch[i]].positive_slot),
                               numerics::scale(numerics::kl_to_target(targets[i], logits, c.mimicry.tau),
                                               c.mimicry.alpha));
      tape.backward(numerics::scale(loss, 1.0 / static_cast<double>(batch.size())));
      bind.accumulate_into(grads);
    }
    numerics::clip_global_norm(grads, c.clip);
    auto state = numerics::AdamState::like(model.params().values());
    numerics::adam_step(model.params().values(), grads, state, report.steps[0].lr);
    return model.params();
  };
  EXPECT_LE(max_abs_diff(replay(p_refreshed), cr.params()), 1e-12);
  EXPECT_GT(max_abs_diff(replay(p_before), cr.params()), 0.0);
  (void)q_initial;
}

TEST(TrainMutual, DeterministicReports) {
  Fixture f(24, 3);
  TrainConfig c = quick_config(2, 8);
  std::string first;
  for (int run = 0; run < 2; ++run) {
    BiEncoder bi(f.cfg, 1);
    CrossEncoder cr(f.cfg, 2);
    RetrieverScorer rs(bi, f.vocab, f.task);
    SelectorScorer ss(cr, f.vocab, f.task);
    const std::string jsonl = train_mutual(rs, ss, c, &rs, &ss).to_jsonl();
    if (run == 0) first = jsonl;
    else EXPECT_EQ(jsonl, first);
  }
}

TEST(TrainMutual, LoggedKlIsNonNegative) {
  Fixture f(40, 3);
  BiEncoder bi(f.cfg, 1);
  CrossEncoder cr(f.cfg, 2);
  RetrieverScorer rs(bi, f.vocab, f.task);
  SelectorScorer ss(cr, f.vocab, f.task);
  const TrainReport r = train_mutual(rs, ss, quick_config(2, 4));
  ASSERT_EQ(r.steps.size(), 20u);
  for (const auto& s : r.steps) {
    EXPECT_GE(s.retriever_kl, -1e-12);
    EXPECT_GE(s.selector_kl, -1e-12);
    EXPECT_TRUE(std::isfinite(s.retriever_nll) && std::isfinite(s.selector_nll));
  }
}

TEST(TrainMutual, RejectsMismatchedTasks) {
  Fixture f(8, 3), g(9, 3);
  BiEncoder bi(f.cfg, 1);
  CrossEncoder cr(g.cfg, 2);
  RetrieverScorer rs(bi, f.vocab, f.task);
  SelectorScorer ss(cr, g.vocab, g.task);
  EXPECT_THROW(train_mutual(rs, ss, quick_config(1, 4)), ContractViolation);
  TrainConfig bad = quick_config(1, 4);
  bad.mimicry.tau = 0.0;
  EXPECT_THROW(train_single(rs, bad), std::invalid_argument);
}

TEST(TrainSingle, NonFiniteLossAbortsWithStep) {
  Fixture f(8, 3);
  BiEncoder bi(f.cfg, 1);
  bi.params()["proj.context"].values()[0] = std::nan("");
  RetrieverScorer rs(bi, f.vocab, f.task);
  try {
    train_single(rs, quick_config(1, 4));
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(TrainSingle, OverfitsTenExamples) {
  Fixture f(10, 3);
  TrainConfig c = quick_config(25, 5);
  c.peak_lr = 1e-3;
  c.warmup_fraction = 0.1;
  EncoderConfig cfg = f.cfg;
  cfg.dropout_rate = 0.0;
  BiEncoder bi(cfg, 3);
  RetrieverScorer rs(bi, f.vocab, f.task);
  const TrainReport r = train_single(rs, c);
  ASSERT_EQ(r.steps.size(), 50u);
  EXPECT_LT(r.steps.back().retriever_nll, r.steps.front().retriever_nll);
  EXPECT_LT(r.steps.back().retriever_nll, 0.5 * std::log(4.0));
}

TEST(TrainSingle, BiEncoderBeatsChanceOnHeldOut) {
  Rng rng(12);
  const auto syn = data::make_synthetic_corpus(1600, 120, 4, rng);
  data::Corpus train, valid;
  for (std::size_t i = 0; i < syn.corpus.size(); ++i) (i < 1400 ? train : valid).add(syn.corpus.examples[i]);
  const auto vocab = text::build_vocab(train.all_sequences(), 1, 100000);
  const auto task = data::RankingTask::with_sampled_negatives(train, 7, 3);
  auto vtask = data::RankingTask::with_sampled_negatives(valid, 9, 4);
  EncoderConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.model_dim = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.ffn_dim = 32;
  cfg.projection_dim = 16;
  BiEncoder bi(cfg, 4);
  RetrieverScorer rs(bi, vocab, task), rv(bi, vocab, vtask);
  TrainConfig c;
  c.epochs = 3;
  c.patience = 0;
  const TrainReport r = train_single(rs, c, &rv);
  ASSERT_EQ(r.epochs.size(), 3u);
  EXPECT_GT(r.epochs.back().retriever_hits1, 0.1 + 3 * std::sqrt(0.09 / 200.0));
}

TEST(TrainSingle, EarlyStoppingRestoresBestEpoch) {
  detail::EarlyStopper stop(encoders::ParamSet{}, 2);
  encoders::ParamSet p;
  p.add("w", Array::vector({1.0}));
  detail::EarlyStopper s(p, 2);
  s.observe(0.5, p);
  p["w"][0] = 2.0;
  s.observe(0.4, p);
  EXPECT_FALSE(s.exhausted());
  p["w"][0] = 3.0;
  s.observe(0.5, p);
  EXPECT_TRUE(s.exhausted());
  s.restore(p);
  EXPECT_EQ(p["w"][0], 1.0);
  (void)stop;
}

TEST(TrainReport, JsonLinesLayout) {
  TrainReport r;
  r.steps.push_back({0, 0, 1e-3, 2.0, 0.1, kAbsent, kAbsent});
  r.epochs.push_back({0, 0.25, kAbsent});
  const std::string text = r.to_jsonl();
  const auto nl = text.find('\n');
  const auto step = nlohmann::json::parse(text.substr(0, nl));
  const auto epoch = nlohmann::json::parse(text.substr(nl + 1));
  EXPECT_EQ(step["type"], "step");
  EXPECT_TRUE(step["selector_nll"].is_null());
  EXPECT_EQ(epoch["retriever_val_hits@1"], 0.25);
}

}  // namespace
}  // namespace twostage::learning
