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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace twostage::pipeline {

/// One scored candidate. `retriever` and `selector` keep the component scores
/// when a stage produced them (NaN otherwise).
struct RankedEntry {
  std::size_t id = 0;
  double score = 0.0;
  double retriever = std::nan("");
  double selector = std::nan("");
};

/// Entries in descending score order, ties by ascending id.
using RankedList = std::vector<RankedEntry>;

inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

inline void sort_ranked(RankedList& list) { std::sort(list.begin(), list.end(), ranks_before); }

/// 1-based position of `id`, or nullopt when absent.
inline std::optional<std::size_t> rank_of(const RankedList& list, std::size_t id) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i].id == id) return i + 1;
  return std::nullopt;
}

/// Rank the positive would get among `scores` (indexed by candidate id)
/// under the (score desc, id asc) order, without sorting.
inline std::size_t rank_of_positive(std::span<const double> scores, std::span<const std::size_t> ids,
                                    std::size_t positive_slot) {
  const double s = scores[positive_slot];
  const std::size_t id = ids[positive_slot];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j == positive_slot) continue;
    if (scores[j] > s || (scores[j] == s && ids[j] < id)) ++rank;
  }
  return rank;
}

struct MetricsReport {
  std::map<std::size_t, double> hits;
  double mrr = 0.0;
  std::size_t n_examples = 0;
  /// Per-example rank of the positive; 0 means it was not returned.
  std::vector<std::size_t> ranks;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// hits@k and MRR from per-example ranks (0 = missing, reciprocal rank 0).
inline MetricsReport summarize_ranks(std::vector<std::size_t> ranks, std::span<const std::size_t> ks) {
  MetricsReport r;
  r.n_examples = ranks.size();
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("hits@k requires k >= 1");
    r.hits[k] = 0.0;
  }
  double rr = 0.0;
  for (std::size_t rank : ranks) {
    if (rank == 0) continue;
    rr += 1.0 / static_cast<double>(rank);
    for (auto& [k, h] : r.hits)
      if (rank <= k) h += 1.0;
  }
  if (!ranks.empty()) {
    const double n = static_cast<double>(ranks.size());
    for (auto& [k, h] : r.hits) h /= n;
    r.mrr = rr / n;
  }
  r.ranks = std::move(ranks);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r, bool include_ranks = false) {
  nlohmann::json j;
  for (const auto& [k, h] : r.hits) j["hits@" + std::to_string(k)] = h;
  j["mrr"] = r.mrr;
  j["n_examples"] = r.n_examples;
  if (include_ranks) j["ranks"] = r.ranks;
  return j;
}

}  // namespace twostage::pipeline
