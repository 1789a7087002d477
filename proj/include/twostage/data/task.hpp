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

#include <map>
#include <vector>

#include "twostage/data/corpus.hpp"
#include "twostage/data/sampling.hpp"

namespace twostage::data {

/// Contexts, a response text table, and one candidate set per row. A
/// CandidateSet's `example` indexes `contexts`; its ids index `responses`.
struct RankingTask {
  std::vector<std::vector<Tokens>> contexts;
  std::vector<Tokens> responses;
  std::vector<CandidateSet> sets;

  std::size_t size() const { return sets.size(); }

  /// Positive plus `delta_r` fixed negatives from the corpus pool per example.
  static RankingTask with_sampled_negatives(const Corpus& corpus, std::size_t delta_r,
                                            std::uint64_t seed) {
    RankingTask t;
    for (const auto& ex : corpus.examples) t.contexts.push_back(ex.context);
    t.responses = corpus.response_pool;
    t.sets = fixed_candidate_sets(corpus, delta_r, seed);
    return t;
  }

  /// Uses each example's explicit candidate list; the example's response
  /// must appear in it exactly once.
  static RankingTask from_candidate_lists(const Corpus& corpus) {
    RankingTask t;
    std::map<Tokens, std::size_t> table;
    auto intern = [&](const Tokens& r) {
      auto [it, fresh] = table.emplace(r, t.responses.size());
      if (fresh) t.responses.push_back(r);
      return it->second;
    };
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& ex = corpus.examples[i];
      const auto& cands = corpus.candidates[i];
      if (cands.empty()) throw SchemaError("example " + std::to_string(i + 1) + " has no candidates");
      CandidateSet s;
      s.example = t.contexts.size();
      std::size_t positives = 0;
      for (std::size_t j = 0; j < cands.size(); ++j) {
        const std::size_t id = intern(cands[j]);
        for (std::size_t prev : s.candidates)
          if (prev == id) throw SchemaError("example " + std::to_string(i + 1) + " repeats a candidate");
        if (cands[j] == ex.response) {
          s.positive_slot = j;
          ++positives;
        }
        s.candidates.push_back(id);
      }
      if (positives != 1)
        throw SchemaError("example " + std::to_string(i + 1) + " has no positive among its candidates");
      t.contexts.push_back(ex.context);
      t.sets.push_back(std::move(s));
    }
    return t;
  }
};

}  // namespace twostage::data
