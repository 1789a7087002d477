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

#include <vector>

#include "twostage/data/task.hpp"
#include "twostage/encoders/bi_encoder.hpp"
#include "twostage/encoders/cross_encoder.hpp"
#include "twostage/numerics/rng.hpp"
#include "twostage/text/encode.hpp"

namespace twostage::learning {

using numerics::Rng;

struct SequenceLimits {
  std::size_t max_context = text::kMaxContextLen;
  std::size_t max_response = text::kMaxResponseLen;
};

/// Bi-encoder candidate scoring over a RankingTask, with every context and
/// response tokenized once up front.
class RetrieverScorer {
 public:
  static constexpr std::uint64_t kStreamTag = 0x726574ULL;

  RetrieverScorer(encoders::BiEncoder& model, const text::Vocabulary& vocab,
                  const data::RankingTask& task, SequenceLimits limits = {})
      : model_(&model), task_(&task) {
    for (const auto& c : task.contexts) contexts_.push_back(text::encode_context(c, vocab, limits.max_context));
    for (const auto& r : task.responses) responses_.push_back(text::encode_response(r, vocab, limits.max_response));
  }

  encoders::ParamSet& params() { return model_->params(); }
  const encoders::ParamSet& params() const { return model_->params(); }
  const data::RankingTask& task() const { return *task_; }

  /// g(c, r_m) for every candidate m, as an [M] node.
  numerics::Var logits(encoders::ParamBinding& bind, const data::CandidateSet& set, bool training,
                       Rng& rng) const {
    numerics::Var vc = model_->context_vec(bind, contexts_[set.example], training, rng);
    std::vector<numerics::Var> scores;
    scores.reserve(set.candidates.size());
    for (std::size_t id : set.candidates)
      scores.push_back(numerics::dot(vc, model_->response_vec(bind, responses_[id], training, rng)));
    return numerics::stack(scores);
  }

  /// Eval-mode scores for one row.
  std::vector<double> scores(const data::CandidateSet& set) const {
    const auto vc = model_->encode_context_vec(contexts_[set.example]);
    std::vector<double> out;
    for (std::size_t id : set.candidates)
      out.push_back(numerics::dot(vc, model_->encode_response_vec(responses_[id])));
    return out;
  }

  /// Eval-mode scores for many rows, encoding each distinct response once.
  std::vector<std::vector<double>> scores_all(const std::vector<data::CandidateSet>& sets) const {
    std::vector<std::vector<double>> cache(responses_.size());
    std::vector<std::vector<double>> out;
    out.reserve(sets.size());
    for (const auto& set : sets) {
      const auto vc = model_->encode_context_vec(contexts_[set.example]);
      std::vector<double> row;
      for (std::size_t id : set.candidates) {
        if (cache[id].empty()) cache[id] = model_->encode_response_vec(responses_[id]);
        row.push_back(numerics::dot(vc, cache[id]));
      }
      out.push_back(std::move(row));
    }
    return out;
  }

 private:
  encoders::BiEncoder* model_;
  const data::RankingTask* task_;
  std::vector<text::TokenSequence> contexts_;
  std::vector<text::TokenSequence> responses_;
};

/// Cross-encoder candidate scoring (pre-sigmoid logits) over a RankingTask.
class SelectorScorer {
 public:
  static constexpr std::uint64_t kStreamTag = 0x73656cULL;

  SelectorScorer(encoders::CrossEncoder& model, const text::Vocabulary& vocab,
                 const data::RankingTask& task, SequenceLimits limits = {})
      : model_(&model), task_(&task) {
    for (const auto& c : task.contexts) contexts_.push_back(text::encode_context(c, vocab, limits.max_context));
    const std::size_t body = limits.max_response - 2;
    for (const auto& r : task.responses) {
      std::vector<text::TokenId> ids;
      for (std::size_t i = 0; i < r.size() && i < body; ++i) ids.push_back(vocab.id(r[i]));
      response_bodies_.push_back(std::move(ids));
    }
  }

  encoders::ParamSet& params() { return model_->params(); }
  const encoders::ParamSet& params() const { return model_->params(); }
  const data::RankingTask& task() const { return *task_; }

  /// Same layout as text::encode_joint.
  text::TokenSequence joint(std::size_t context, std::size_t response) const {
    text::TokenSequence seq = contexts_[context];
    for (text::TokenId id : response_bodies_[response]) seq.push(id, 1);
    seq.push(text::kSep, 1);
    return seq;
  }

  numerics::Var logits(encoders::ParamBinding& bind, const data::CandidateSet& set, bool training,
                       Rng& rng) const {
    std::vector<numerics::Var> scores;
    scores.reserve(set.candidates.size());
    for (std::size_t id : set.candidates)
      scores.push_back(model_->logit(bind, joint(set.example, id), training, rng));
    return numerics::stack(scores);
  }

  std::vector<double> scores(const data::CandidateSet& set) const {
    std::vector<double> out;
    for (std::size_t id : set.candidates) out.push_back(model_->score(joint(set.example, id), false));
    return out;
  }

  std::vector<std::vector<double>> scores_all(const std::vector<data::CandidateSet>& sets) const {
    std::vector<std::vector<double>> out;
    out.reserve(sets.size());
    for (const auto& set : sets) out.push_back(scores(set));
    return out;
  }

 private:
  encoders::CrossEncoder* model_;
  const data::RankingTask* task_;
  std::vector<text::TokenSequence> contexts_;
  std::vector<std::vector<text::TokenId>> response_bodies_;
};

}  // namespace twostage::learning
