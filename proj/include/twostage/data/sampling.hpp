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

#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "twostage/data/corpus.hpp"
#include "twostage/numerics/rng.hpp"

namespace twostage::data {

using numerics::Rng;

/// `delta_r` distinct pool ids drawn uniformly without replacement from
/// [0, pool_size) minus `positive_id`. Only the example's own positive is
/// excluded.
inline std::vector<std::size_t> sample_negatives(std::size_t pool_size, std::size_t positive_id,
                                                 std::size_t delta_r, Rng& rng) {
  if (positive_id >= pool_size) throw std::invalid_argument("sample_negatives: positive id outside pool");
  if (pool_size <= delta_r)
    throw std::invalid_argument("sample_negatives: pool of " + std::to_string(pool_size) +
                                " is too small for " + std::to_string(delta_r) + " negatives");
  std::vector<std::size_t> out;
  out.reserve(delta_r);
  if (2 * delta_r >= pool_size) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool_size; ++i)
      if (i != positive_id) rest.push_back(i);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < delta_r; ++i) {
      const std::size_t j = i + numerics::uniform_index(rng, rest.size() - i);
      std::swap(rest[i], rest[j]);
      out.push_back(rest[i]);
    }
    return out;
  }
  std::unordered_set<std::size_t> seen{positive_id};
  while (out.size() < delta_r) {
    const std::size_t id = numerics::uniform_index(rng, pool_size);
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

inline std::vector<std::size_t> sample_negatives(const Corpus& corpus, std::size_t positive_id,
                                                 std::size_t delta_r, Rng& rng) {
  return sample_negatives(corpus.response_pool.size(), positive_id, delta_r, rng);
}

/// One row of a ranking problem: a context and M = delta_r + 1 candidate
/// response ids with exactly one positive.
struct CandidateSet {
  std::size_t example = 0;
  std::vector<std::size_t> candidates;
  std::size_t positive_slot = 0;

  std::size_t positive_id() const { return candidates[positive_slot]; }
};

/// Samples one candidate set per example (positive plus fixed negatives, at a
/// random slot). Training draws these once and reuses them every epoch.
inline std::vector<CandidateSet> fixed_candidate_sets(const Corpus& corpus, std::size_t delta_r,
                                                      std::uint64_t seed) {
  std::vector<CandidateSet> sets;
  sets.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng = numerics::stream(seed, {0x6e6567ULL, i});
    CandidateSet s;
    s.example = i;
    const std::size_t pos = corpus.response_ids[i];
    s.candidates = sample_negatives(corpus, pos, delta_r, rng);
    s.positive_slot = numerics::uniform_index(rng, delta_r + 1);
    s.candidates.insert(s.candidates.begin() + static_cast<std::ptrdiff_t>(s.positive_slot), pos);
    sets.push_back(std::move(s));
  }
  return sets;
}

/// Example-index order for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch,
                                            bool shuffle = true) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    Rng rng = numerics::stream(seed, {0x73687566ULL, epoch});
    numerics::shuffle(order, rng);
  }
  return order;
}

/// Consecutive chunks of `order`; the last batch may be short.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                          std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be positive");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  return batches;
}

}  // namespace twostage::data
