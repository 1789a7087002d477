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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twostage/data/corpus.hpp"
#include "twostage/data/task.hpp"
#include "twostage/encoders/bi_encoder.hpp"
#include "twostage/encoders/cross_encoder.hpp"
#include "twostage/error.hpp"
#include "twostage/index/mips_index.hpp"
#include "twostage/learning/scorers.hpp"
#include "twostage/pipeline/metrics.hpp"

namespace twostage::pipeline {

using data::Tokens;
using Context = std::vector<Tokens>;

enum class Strategy { selector_only, ensemble };

inline std::string to_string(Strategy s) { return s == Strategy::selector_only ? "selector_only" : "ensemble"; }

inline Strategy parse_strategy(const std::string& s) {
  if (s == "selector_only") return Strategy::selector_only;
  if (s == "ensemble") return Strategy::ensemble;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected selector_only or ensemble)");
}

struct PipelineConfig {
  std::size_t n_r = 100;
  Strategy strategy = Strategy::selector_only;
  /// Min-max normalize g and s within the candidate set before summing.
  /// Experimental; off reproduces the plain g + s sum.
  bool normalize = false;
  /// 0 searches exactly; otherwise IVF with this many probed lists.
  std::size_t nprobe = 0;

  void validate() const {
    if (n_r < 1) throw std::invalid_argument("n_r must be >= 1");
  }
};

/// Top-n_r pool responses by g(c, r) from the index.
inline RankedList retrieve_candidates(const Context& context, const encoders::BiEncoder& retriever,
                                      const text::Vocabulary& vocab, const index::MipsIndex& idx,
                                      std::size_t n_r, std::size_t nprobe = 0,
                                      learning::SequenceLimits limits = {}) {
  if (n_r < 1) throw std::invalid_argument("retrieve_candidates: n_r must be >= 1");
  const auto vc = retriever.encode_context_vec(text::encode_context(context, vocab, limits.max_context));
  const auto hits = nprobe == 0 ? index::search_exact(idx, vc, n_r) : index::search_ivf(idx, vc, n_r, nprobe);
  RankedList out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.id, h.score, h.score, std::nan("")});
  return out;
}

namespace detail {

inline void min_max(std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (double& x : v) x = b > a ? (x - a) / (b - a) : 0.0;
}

}  // namespace detail

/// Re-scores `candidates` with the selector. selector_only orders by
/// sigmoid(s); ensemble by g + sigmoid(s), g being the entry's retriever
/// score. `responses` maps candidate ids to text.
inline RankedList rerank(const Context& context, const RankedList& candidates,
                         const encoders::CrossEncoder& selector, const text::Vocabulary& vocab,
                         std::span<const Tokens> responses, Strategy strategy, bool normalize = false,
                         learning::SequenceLimits limits = {}) {
  if (candidates.empty()) throw std::invalid_argument("rerank: empty candidate list");
  RankedList out = candidates;
  for (auto& e : out) {
    if (e.id >= responses.size()) throw ContractViolation("rerank: candidate id outside the response table");
    e.selector = selector.score(
        text::encode_joint(context, responses[e.id], vocab, limits.max_context, limits.max_response), true);
  }
  if (strategy == Strategy::selector_only) {
    for (auto& e : out) e.score = e.selector;
  } else if (!normalize) {
    for (auto& e : out) e.score = e.retriever + e.selector;
  } else {
    std::vector<double> g, s;
    for (const auto& e : out) {
      g.push_back(e.retriever);
      s.push_back(e.selector);
    }
    detail::min_max(g);
    detail::min_max(s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].score = g[i] + s[i];
  }
  sort_ranked(out);
  return out;
}

/// One evaluation example. With `candidates` set, ranking is restricted to
/// those ids; otherwise the whole response table is searched.
struct EvalQuery {
  Context context;
  std::size_t positive = 0;
  std::optional<std::vector<std::size_t>> candidates;
};

inline std::vector<EvalQuery> fixed_queries(const data::RankingTask& task) {
  std::vector<EvalQuery> out;
  out.reserve(task.size());
  for (const auto& set : task.sets) out.push_back({task.contexts[set.example], set.positive_id(), set.candidates});
  return out;
}

/// Full-pool queries: each example's response must occur in `pool`.
inline std::vector<EvalQuery> pool_queries(const std::vector<text::DialogueExample>& examples,
                                           const data::Corpus& pool) {
  std::vector<EvalQuery> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto id = pool.pool_id(examples[i].response);
    if (!id) throw SchemaError("example " + std::to_string(i + 1) + ": positive response is not in the pool");
    out.push_back({examples[i].context, *id, std::nullopt});
  }
  return out;
}

enum class Variant { bi, cross, two_stage };

/// A ranking system over a response table. `index` rows must use the
/// table's ids; it is needed only for full-pool bi and two-stage ranking.
struct System {
  Variant variant = Variant::two_stage;
  PipelineConfig config;
  const encoders::BiEncoder* retriever = nullptr;
  const encoders::CrossEncoder* selector = nullptr;
  const text::Vocabulary* vocab = nullptr;
  const index::MipsIndex* index = nullptr;
  std::span<const Tokens> responses;
  learning::SequenceLimits limits;
};

namespace detail {

inline RankedList bi_over(const System& sys, const Context& context, std::span<const std::size_t> ids) {
  const auto vc = sys.retriever->encode_context_vec(text::encode_context(context, *sys.vocab, sys.limits.max_context));
  RankedList out;
  for (std::size_t id : ids) {
    const double g = numerics::dot(
        vc, sys.retriever->encode_response_vec(text::encode_response(sys.responses[id], *sys.vocab, sys.limits.max_response)));
    out.push_back({id, g, g, std::nan("")});
  }
  sort_ranked(out);
  return out;
}

inline void require_parts(const System& sys, bool needs_index) {
  if (!sys.vocab) throw ContractViolation("System: vocabulary missing");
  if (sys.variant != Variant::cross && !sys.retriever) throw ContractViolation("System: retriever missing");
  if (sys.variant != Variant::bi && !sys.selector) throw ContractViolation("System: selector missing");
  if (needs_index && sys.variant != Variant::cross && !sys.index) throw ContractViolation("System: index missing");
}

}  // namespace detail

inline RankedList rank(const System& sys, const EvalQuery& q) {
  detail::require_parts(sys, !q.candidates.has_value());
  sys.config.validate();
  if (q.candidates) {
    const auto& ids = *q.candidates;
    for (std::size_t id : ids)
      if (id >= sys.responses.size()) throw ContractViolation("rank: candidate id outside the response table");
    switch (sys.variant) {
      case Variant::bi:
        return detail::bi_over(sys, q.context, ids);
      case Variant::cross: {
        RankedList list;
        for (std::size_t id : ids) list.push_back({id, 0.0, std::nan(""), std::nan("")});
        return rerank(q.context, list, *sys.selector, *sys.vocab, sys.responses, Strategy::selector_only, false,
                      sys.limits);
      }
      case Variant::two_stage: {
        RankedList pre = detail::bi_over(sys, q.context, ids);
        if (pre.size() > sys.config.n_r) pre.resize(sys.config.n_r);
        return rerank(q.context, pre, *sys.selector, *sys.vocab, sys.responses, sys.config.strategy,
                      sys.config.normalize, sys.limits);
      }
    }
  }
  switch (sys.variant) {
    case Variant::bi:
      return retrieve_candidates(q.context, *sys.retriever, *sys.vocab, *sys.index, sys.index->rows(),
                                 sys.config.nprobe, sys.limits);
    case Variant::cross: {
      RankedList list;
      for (std::size_t id = 0; id < sys.responses.size(); ++id) list.push_back({id, 0.0, std::nan(""), std::nan("")});
      return rerank(q.context, list, *sys.selector, *sys.vocab, sys.responses, Strategy::selector_only, false,
                    sys.limits);
    }
    case Variant::two_stage: {
      const RankedList pre = retrieve_candidates(q.context, *sys.retriever, *sys.vocab, *sys.index, sys.config.n_r,
                                                 sys.config.nprobe, sys.limits);
      return rerank(q.context, pre, *sys.selector, *sys.vocab, sys.responses, sys.config.strategy,
                    sys.config.normalize, sys.limits);
    }
  }
  throw ContractViolation("rank: unknown variant");
}

inline MetricsReport evaluate(std::span<const EvalQuery> queries, const System& sys,
                              std::span<const std::size_t> ks) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) ranks.push_back(rank_of(rank(sys, q), q.positive).value_or(0));
  return summarize_ranks(std::move(ranks), ks);
}

/// Fraction of queries whose positive is among the top-n_r retrieved.
inline double retrieval_recall(std::span<const EvalQuery> queries, const encoders::BiEncoder& retriever,
                               const text::Vocabulary& vocab, const index::MipsIndex& idx, std::size_t n_r,
                               std::size_t nprobe = 0, learning::SequenceLimits limits = {}) {
  if (queries.empty()) return 0.0;
  std::size_t found = 0;
  for (const auto& q : queries)
    if (rank_of(retrieve_candidates(q.context, retriever, vocab, idx, n_r, nprobe, limits), q.positive)) ++found;
  return static_cast<double>(found) / static_cast<double>(queries.size());
}

inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  for (const auto& [k, h] : r.hits) os << "hits@" << k << "  " << h << "\n";
  os << "mrr     " << r.mrr << "\n"
     << "n       " << r.n_examples << "\n";
  return os.str();
}

// Benchmark.

inline const std::vector<std::size_t> kNrGrid = {10, 50, 100, 200, 500, 800};

struct BenchRow {
  std::string variant;
  std::size_t n_r = 0;
  double hits1 = 0.0;
  double mrr = 0.0;
  double joint_passes_per_query = 0.0;
  double tower_passes_per_query = 0.0;
  double ms_per_query = 0.0;
};

struct BenchReport {
  std::size_t pool_size = 0;
  std::size_t n_queries = 0;
  std::vector<BenchRow> rows;

  const BenchRow* find(const std::string& variant, std::size_t n_r) const {
    for (const auto& r : rows)
      if (r.variant == variant && r.n_r == n_r) return &r;
    return nullptr;
  }
};

struct BenchOptions {
  std::vector<std::size_t> n_r_values = kNrGrid;
  bool include_cross_full = true;
  bool include_ensemble = true;
  std::size_t nprobe = 0;
};

/// Runs bi, cross-full, two-stage and two-stage-ensemble over full-pool
/// queries. bi and cross-full rows carry n_r = pool size. Pass counts come
/// from the model counters; the index is built beforehand and not counted.
inline BenchReport bench(std::span<const EvalQuery> queries, const encoders::BiEncoder& retriever,
                         const encoders::CrossEncoder& selector, const text::Vocabulary& vocab,
                         const index::MipsIndex& idx, std::span<const Tokens> responses,
                         const BenchOptions& opts = {}, learning::SequenceLimits limits = {}) {
  if (queries.empty()) throw std::invalid_argument("bench: no queries");
  BenchReport report;
  report.pool_size = responses.size();
  report.n_queries = queries.size();
  const std::size_t ks[] = {1};
  const double n = static_cast<double>(queries.size());

  auto run = [&](const std::string& name, Variant variant, std::size_t n_r, Strategy strategy) {
    System sys{variant, {}, &retriever, &selector, &vocab, &idx, responses, limits};
    sys.config.n_r = n_r;
    sys.config.strategy = strategy;
    sys.config.nprobe = opts.nprobe;
    retriever.reset_counters();
    selector.reset_counters();
    const auto t0 = std::chrono::steady_clock::now();
    const MetricsReport m = evaluate(queries, sys, ks);
    const auto t1 = std::chrono::steady_clock::now();
    BenchRow row;
    row.variant = name;
    row.n_r = n_r;
    row.hits1 = m.hits.at(1);
    row.mrr = m.mrr;
    row.joint_passes_per_query = static_cast<double>(selector.joint_passes()) / n;
    row.tower_passes_per_query = static_cast<double>(retriever.tower_passes()) / n;
    row.ms_per_query = std::chrono::duration<double, std::milli>(t1 - t0).count() / n;
    report.rows.push_back(row);
  };

  run("bi", Variant::bi, responses.size(), Strategy::selector_only);
  if (opts.include_cross_full) run("cross-full", Variant::cross, responses.size(), Strategy::selector_only);
  for (std::size_t n_r : opts.n_r_values) {
    run("two-stage", Variant::two_stage, n_r, Strategy::selector_only);
    if (opts.include_ensemble) run("two-stage-ensemble", Variant::two_stage, n_r, Strategy::ensemble);
  }
  return report;
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"variant", row.variant},
                    {"n_r", row.n_r},
                    {"hits@1", row.hits1},
                    {"mrr", row.mrr},
                    {"joint_passes_per_query", row.joint_passes_per_query},
                    {"tower_passes_per_query", row.tower_passes_per_query},
                    {"ms_per_query", row.ms_per_query}});
  return {{"pool_size", r.pool_size}, {"n_queries", r.n_queries}, {"rows", rows}};
}

inline std::string to_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "variant,n_r,hits@1,mrr,joint_passes_per_query,ms_per_query\n";
  for (const auto& row : r.rows)
    os << row.variant << ',' << row.n_r << ',' << row.hits1 << ',' << row.mrr << ',' << row.joint_passes_per_query
       << ',' << row.ms_per_query << '\n';
  return os.str();
}

inline std::string format_bench(const BenchReport& r) {
  std::ostringstream os;
  os << "pool " << r.pool_size << ", " << r.n_queries << " queries\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %6s %8s %8s %10s %10s\n", "variant", "n_r", "hits@1", "mrr", "joint/q",
                "ms/q");
  os << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-20s %6zu %8.4f %8.4f %10.1f %10.3f\n", row.variant.c_str(), row.n_r,
                  row.hits1, row.mrr, row.joint_passes_per_query, row.ms_per_query);
    os << line;
  }
  return os.str();
}

}  // namespace twostage::pipeline
