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

#include <cstdint>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twostage/data/corpus.hpp"
#include "twostage/data/sampling.hpp"
#include "twostage/data/synthetic.hpp"
#include "twostage/data/task.hpp"
#include "twostage/encoders/bi_encoder.hpp"
#include "twostage/encoders/checkpoint.hpp"
#include "twostage/encoders/cross_encoder.hpp"
#include "twostage/error.hpp"
#include "twostage/index/mips_index.hpp"
#include "twostage/learning/scorers.hpp"
#include "twostage/learning/trainer.hpp"
#include "twostage/numerics/rng.hpp"
#include "twostage/pipeline/pipeline.hpp"
#include "twostage/text/vocab.hpp"

namespace twostage::cli {

/// Every setting a subcommand can read. Flags override the --config file,
/// which overrides these defaults.
struct RunConfig {
  // Paths.
  std::string out_dir = ".";
  std::string corpus;  // response pool (JSONL)
  std::string train;
  std::string valid;
  std::string test;
  std::string retriever;
  std::string selector;
  std::string index;
  std::uint64_t seed = 0;

  // gen-corpus
  std::size_t n_train = 5000;
  std::size_t n_valid = 500;
  std::size_t n_test = 500;
  std::size_t vocab_size = 400;
  std::size_t topics = 8;
  std::size_t eval_negatives = 9;

  // Encoders.
  std::size_t model_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t projection_dim = 64;
  std::size_t head_dim = 64;
  std::size_t max_positions = 372;
  double dropout = 0.1;
  std::size_t min_freq = 1;
  std::size_t max_vocab = 0;  // 0 keeps every token
  std::size_t max_context = text::kMaxContextLen;
  std::size_t max_response = text::kMaxResponseLen;

  // train
  std::string mode = "mutual";
  double alpha = 1.0;
  double tau = 3.0;
  std::size_t delta_r = 32;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double warmup = 0.1;
  double clip = 10.0;
  std::size_t patience = 3;

  // Index and pipeline.
  std::size_t clusters = 0;
  std::size_t kmeans_iters = 20;
  std::size_t nprobe = 0;
  std::size_t n_r = 100;
  std::string strategy = "selector_only";
  bool normalize = false;
  std::string system = "two-stage";
  std::string eval_mode = "auto";
  std::string ks = "1,2,5,10";
  std::string nr_grid = "10,50,100,200,500,800";
  std::size_t max_queries = 0;
  bool verbose = false;

  encoders::EncoderConfig encoder(std::size_t vocab) const {
    encoders::EncoderConfig c;
    c.vocab_size = vocab;
    c.model_dim = model_dim;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.ffn_dim = ffn_dim;
    c.projection_dim = projection_dim;
    c.head_dim = head_dim;
    c.max_positions = max_positions;
    c.dropout_rate = dropout;
    return c;
  }

  learning::TrainConfig training() const {
    learning::TrainConfig t;
    t.mimicry = {alpha, tau};
    t.delta_r = delta_r;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.peak_lr = lr;
    t.warmup_fraction = warmup;
    t.clip = clip;
    t.seed = seed;
    t.patience = patience;
    return t;
  }

  pipeline::PipelineConfig pipeline() const {
    pipeline::PipelineConfig p;
    p.n_r = n_r;
    p.strategy = pipeline::parse_strategy(strategy);
    p.normalize = normalize;
    p.nprobe = nprobe;
    p.validate();
    return p;
  }

  learning::SequenceLimits limits() const { return {max_context, max_response}; }
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0)
      throw UsageError(std::string(what) + ": expected comma-separated positive integers, got '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

namespace detail {

inline std::string path_in(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required ") + flag);
}

inline data::Corpus with_eval_candidates(const std::vector<text::DialogueExample>& examples,
                                         const data::Corpus& pool, std::size_t negatives,
                                         numerics::Rng& rng) {
  data::Corpus out;
  for (const auto& ex : examples) {
    const std::size_t pid = *pool.pool_id(ex.response);
    auto ids = data::sample_negatives(pool.response_pool.size(), pid, negatives, rng);
    ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(numerics::uniform_index(rng, ids.size() + 1)), pid);
    std::vector<data::Tokens> cands;
    for (std::size_t id : ids) cands.push_back(pool.response_pool[id]);
    out.add(ex, std::move(cands));
  }
  return out;
}

inline int gen_corpus(const RunConfig& cfg, std::ostream& out) {
  const std::size_t total = cfg.n_train + cfg.n_valid + cfg.n_test;
  if (cfg.n_train == 0) throw UsageError("--n-train must be positive");
  numerics::Rng rng(numerics::stream(cfg.seed, {0x636f72ULL}));
  const data::SyntheticCorpus syn = data::make_synthetic_corpus(total, cfg.vocab_size, cfg.topics, rng);
  const auto& all = syn.corpus.examples;
  data::Corpus train;
  for (std::size_t i = 0; i < cfg.n_train; ++i) train.add(all[i]);
  const std::vector<text::DialogueExample> valid(all.begin() + static_cast<std::ptrdiff_t>(cfg.n_train),
                                                 all.begin() + static_cast<std::ptrdiff_t>(cfg.n_train + cfg.n_valid));
  const std::vector<text::DialogueExample> test(all.begin() + static_cast<std::ptrdiff_t>(cfg.n_train + cfg.n_valid),
                                                all.end());
  numerics::Rng cand_rng(numerics::stream(cfg.seed, {0x63616eULL}));
  const data::Corpus valid_c = with_eval_candidates(valid, syn.corpus, cfg.eval_negatives, cand_rng);
  const data::Corpus test_c = with_eval_candidates(test, syn.corpus, cfg.eval_negatives, cand_rng);

  data::save_corpus(syn.corpus, path_in(cfg, "corpus.jsonl"));
  data::save_corpus(train, path_in(cfg, "train.jsonl"));
  data::save_corpus(valid_c, path_in(cfg, "valid.jsonl"));
  data::save_corpus(test_c, path_in(cfg, "test.jsonl"));
  out << "wrote " << total << " examples (" << syn.corpus.response_pool.size() << " distinct responses) to "
      << cfg.out_dir << "\n";
  return 0;
}

inline data::RankingTask validation_task(const data::Corpus& c, std::size_t delta_r, std::uint64_t seed) {
  for (const auto& cands : c.candidates)
    if (cands.empty()) return data::RankingTask::with_sampled_negatives(c, delta_r, seed);
  return data::RankingTask::from_candidate_lists(c);
}

inline int train(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.train, "--train");
  if (cfg.mode != "bi" && cfg.mode != "cross" && cfg.mode != "mutual")
    throw UsageError("--mode must be bi, cross or mutual");
  const data::Corpus train_c = data::load_corpus(cfg.train);
  const text::Vocabulary vocab =
      text::build_vocab(train_c.all_sequences(), cfg.min_freq,
                        cfg.max_vocab == 0 ? std::numeric_limits<std::size_t>::max() : cfg.max_vocab);
  const auto tcfg = cfg.training();
  const auto ecfg = cfg.encoder(vocab.size());
  const auto limits = cfg.limits();
  const auto task = data::RankingTask::with_sampled_negatives(train_c, tcfg.delta_r, numerics::stream(cfg.seed, {0x6e6567ULL})());
  std::optional<data::RankingTask> vtask;
  if (!cfg.valid.empty()) vtask = validation_task(data::load_corpus(cfg.valid), 9, numerics::stream(cfg.seed, {0x76616cULL})());

  const bool want_bi = cfg.mode != "cross";
  const bool want_cross = cfg.mode != "bi";
  encoders::BiEncoder bi(ecfg, numerics::stream(cfg.seed, {learning::RetrieverScorer::kStreamTag, 1})());
  encoders::CrossEncoder cross(ecfg, numerics::stream(cfg.seed, {learning::SelectorScorer::kStreamTag, 1})());
  learning::RetrieverScorer rs(bi, vocab, task, limits);
  learning::SelectorScorer ss(cross, vocab, task, limits);
  std::optional<learning::RetrieverScorer> rv;
  std::optional<learning::SelectorScorer> sv;
  if (vtask) {
    rv.emplace(bi, vocab, *vtask, limits);
    sv.emplace(cross, vocab, *vtask, limits);
  }
  learning::TrainReport report;
  if (cfg.mode == "mutual")
    report = learning::train_mutual(rs, ss, tcfg, rv ? &*rv : nullptr, sv ? &*sv : nullptr);
  else if (want_bi)
    report = learning::train_single(rs, tcfg, rv ? &*rv : nullptr);
  else
    report = learning::train_single(ss, tcfg, sv ? &*sv : nullptr);

  if (want_bi) encoders::save_model(path_in(cfg, "retriever.ckpt"), bi, vocab);
  if (want_cross) encoders::save_model(path_in(cfg, "selector.ckpt"), cross, vocab);
  report.save(path_in(cfg, "train_report.jsonl"));
  out << "trained " << cfg.mode << " for " << report.steps.size() << " steps on " << task.size() << " examples\n";
  for (const auto& e : report.epochs) {
    out << "epoch " << e.epoch;
    if (!std::isnan(e.retriever_hits1)) out << "  retriever val hits@1 " << e.retriever_hits1;
    if (!std::isnan(e.selector_hits1)) out << "  selector val hits@1 " << e.selector_hits1;
    out << "\n";
  }
  return 0;
}

inline int build_index(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.retriever, "--retriever");
  require_path(cfg.corpus, "--corpus");
  auto [bi, vocab] = encoders::load_model<encoders::BiEncoder>(cfg.retriever);
  const data::Corpus pool = data::load_corpus(cfg.corpus);
  std::vector<text::TokenSequence> seqs;
  for (const auto& r : pool.response_pool) seqs.push_back(text::encode_response(r, vocab, cfg.max_response));
  index::MipsIndex idx = index::build_index(seqs, bi);
  if (cfg.clusters > 0) {
    numerics::Rng rng(numerics::stream(cfg.seed, {0x697666ULL}));
    index::train_ivf(idx, cfg.clusters, cfg.kmeans_iters, rng);
  }
  const std::string path = cfg.index.empty() ? path_in(cfg, "index.bin") : cfg.index;
  index::save_index(idx, path);
  out << "indexed " << idx.rows() << " responses (dim " << idx.dim << ", " << idx.n_clusters() << " clusters) -> "
      << path << "\n";
  return 0;
}

/// Loaded artifacts for eval, bench and chat.
struct Artifacts {
  std::optional<encoders::BiEncoder> bi;
  std::optional<encoders::CrossEncoder> cross;
  std::optional<text::Vocabulary> vocab;
  std::optional<index::MipsIndex> idx;
  std::optional<data::Corpus> pool;

  void load_retriever(const std::string& path) {
    auto [m, v] = encoders::load_model<encoders::BiEncoder>(path);
    bi.emplace(std::move(m));
    adopt(std::move(v));
  }
  void load_selector(const std::string& path) {
    auto [m, v] = encoders::load_model<encoders::CrossEncoder>(path);
    cross.emplace(std::move(m));
    adopt(std::move(v));
  }
  void load_pool(const RunConfig& cfg, bool with_index) {
    require_path(cfg.corpus, "--corpus");
    pool = data::load_corpus(cfg.corpus);
    if (with_index) {
      require_path(cfg.index, "--index");
      idx = index::load_index(cfg.index);
      if (idx->rows() != pool->response_pool.size())
        throw SchemaError("index has " + std::to_string(idx->rows()) + " rows but the pool has " +
                          std::to_string(pool->response_pool.size()) + " responses");
    }
  }

 private:
  void adopt(text::Vocabulary v) {
    if (vocab && vocab->ordinary_tokens() != v.ordinary_tokens())
      throw SchemaError("retriever and selector checkpoints use different vocabularies");
    vocab.emplace(std::move(v));
  }
};

inline pipeline::Variant parse_variant(const std::string& s) {
  if (s == "bi") return pipeline::Variant::bi;
  if (s == "cross") return pipeline::Variant::cross;
  if (s == "two-stage") return pipeline::Variant::two_stage;
  throw UsageError("--system must be bi, cross or two-stage");
}

inline int eval(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.test, "--test");
  const auto variant = parse_variant(cfg.system);
  const auto ks = parse_list(cfg.ks, "--ks");
  const data::Corpus test = data::load_corpus(cfg.test);
  bool fixed = cfg.eval_mode == "fixed";
  if (cfg.eval_mode == "auto") {
    fixed = true;
    for (const auto& c : test.candidates) fixed = fixed && !c.empty();
  } else if (cfg.eval_mode != "fixed" && cfg.eval_mode != "pool") {
    throw UsageError("--eval-mode must be auto, fixed or pool");
  }
  Artifacts a;
  if (variant != pipeline::Variant::cross) {
    require_path(cfg.retriever, "--retriever");
    a.load_retriever(cfg.retriever);
  }
  if (variant != pipeline::Variant::bi) {
    require_path(cfg.selector, "--selector");
    a.load_selector(cfg.selector);
  }
  pipeline::System sys;
  sys.variant = variant;
  sys.config = cfg.pipeline();
  sys.retriever = a.bi ? &*a.bi : nullptr;
  sys.selector = a.cross ? &*a.cross : nullptr;
  sys.vocab = &*a.vocab;
  sys.limits = cfg.limits();
  std::vector<pipeline::EvalQuery> queries;
  std::optional<data::RankingTask> task;
  if (fixed) {
    task = data::RankingTask::from_candidate_lists(test);
    queries = pipeline::fixed_queries(*task);
    sys.responses = task->responses;
  } else {
    a.load_pool(cfg, variant != pipeline::Variant::cross);
    queries = pipeline::pool_queries(test.examples, *a.pool);
    sys.responses = a.pool->response_pool;
    sys.index = a.idx ? &*a.idx : nullptr;
  }
  if (cfg.max_queries > 0 && queries.size() > cfg.max_queries) queries.resize(cfg.max_queries);
  const auto report = pipeline::evaluate(queries, sys, ks);
  nlohmann::json j = pipeline::to_json(report);
  j["system"] = cfg.system;
  j["mode"] = fixed ? "fixed" : "pool";
  if (variant == pipeline::Variant::two_stage) {
    j["n_r"] = cfg.n_r;
    j["strategy"] = cfg.strategy;
  }
  write_text(path_in(cfg, "metrics.json"), j.dump(2) + "\n");
  out << pipeline::format_report(report);
  return 0;
}

inline int bench(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.test, "--test");
  require_path(cfg.retriever, "--retriever");
  require_path(cfg.selector, "--selector");
  Artifacts a;
  a.load_retriever(cfg.retriever);
  a.load_selector(cfg.selector);
  a.load_pool(cfg, true);
  const data::Corpus test = data::load_corpus(cfg.test);
  auto queries = pipeline::pool_queries(test.examples, *a.pool);
  if (cfg.max_queries > 0 && queries.size() > cfg.max_queries) queries.resize(cfg.max_queries);
  pipeline::BenchOptions opts;
  opts.n_r_values = parse_list(cfg.nr_grid, "--nr-grid");
  opts.nprobe = cfg.nprobe;
  const auto report = pipeline::bench(queries, *a.bi, *a.cross, *a.vocab, *a.idx, a.pool->response_pool, opts,
                                      cfg.limits());
  write_text(path_in(cfg, "bench.json"), pipeline::to_json(report).dump(2) + "\n");
  write_text(path_in(cfg, "bench.csv"), pipeline::to_csv(report));
  out << pipeline::format_bench(report);
  return 0;
}

}  // namespace detail

/// Line-oriented REPL. Each user line becomes a turn; the chosen response
/// is appended as the next turn. `:reset` clears the context, `:quit` ends.
inline void chat(const encoders::BiEncoder& bi, const encoders::CrossEncoder& cross, const text::Vocabulary& vocab,
                 const index::MipsIndex& idx, std::span<const data::Tokens> responses,
                 const pipeline::PipelineConfig& pcfg, bool verbose, std::istream& in, std::ostream& out,
                 learning::SequenceLimits limits = {}) {
  pipeline::Context context;
  std::string line;
  while (std::getline(in, line)) {
    if (line == ":quit") break;
    if (line == ":reset") {
      context.clear();
      out << "(context cleared)\n";
      continue;
    }
    auto turn = text::tokenize(line);
    if (turn.empty()) continue;
    context.push_back(std::move(turn));
    const auto pre = pipeline::retrieve_candidates(context, bi, vocab, idx, pcfg.n_r, pcfg.nprobe, limits);
    const auto ranked = pipeline::rerank(context, pre, cross, vocab, responses, pcfg.strategy, pcfg.normalize, limits);
    const auto& best = responses[ranked.front().id];
    out << text::join(best) << "\n";
    if (verbose) {
      const std::size_t n = std::min<std::size_t>(5, ranked.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& e = ranked[i];
        char buf[96];
        std::snprintf(buf, sizeof buf, "  %zu. g=%.4f s=%.4f s^=%.4f  ", i + 1, e.retriever, e.selector,
                      e.retriever + e.selector);
        out << buf << text::join(responses[e.id]) << "\n";
      }
    }
    context.push_back(best);
  }
}

namespace detail {

inline int chat_cmd(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  require_path(cfg.retriever, "--retriever");
  require_path(cfg.selector, "--selector");
  Artifacts a;
  a.load_retriever(cfg.retriever);
  a.load_selector(cfg.selector);
  a.load_pool(cfg, true);
  chat(*a.bi, *a.cross, *a.vocab, *a.idx, a.pool->response_pool, cfg.pipeline(), cfg.verbose, in, out,
       cfg.limits());
  return 0;
}

/// Fills every option of `sub` that the command line left unset from a flat
/// key = value file. Keys use the long flag name; '_' and '-' are equivalent.
inline void apply_config_file(CLI::App* sub, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  for (const auto& item : CLI::ConfigINI().from_config(f)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty()) throw UsageError("config key '" + item.fullname() + "': sections are not supported");
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + item.name + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

inline void add_paths(CLI::App* app, RunConfig& c) {
  app->add_option("--out-dir", c.out_dir, "Directory for outputs and resolved_config.txt");
  app->add_option("--seed", c.seed, "Random seed");
}

inline void add_encoder(CLI::App* app, RunConfig& c) {
  app->add_option("--model-dim", c.model_dim, "Transformer width");
  app->add_option("--n-layers", c.n_layers, "Transformer layers");
  app->add_option("--n-heads", c.n_heads, "Attention heads");
  app->add_option("--ffn-dim", c.ffn_dim, "Feed-forward width");
  app->add_option("--projection-dim", c.projection_dim, "Bi-encoder output dimension");
  app->add_option("--head-dim", c.head_dim, "Cross-encoder head width");
  app->add_option("--max-positions", c.max_positions, "Position table size");
  app->add_option("--dropout", c.dropout, "Dropout rate");
  app->add_option("--min-freq", c.min_freq, "Minimum token count for the vocabulary");
  app->add_option("--max-vocab", c.max_vocab, "Vocabulary size cap including specials (0 = none)");
}

inline void add_limits(CLI::App* app, RunConfig& c) {
  app->add_option("--max-context", c.max_context, "Context token cap");
  app->add_option("--max-response", c.max_response, "Response token cap");
}

inline void add_pipeline(CLI::App* app, RunConfig& c) {
  app->add_option("--retriever", c.retriever, "Bi-encoder checkpoint");
  app->add_option("--selector", c.selector, "Cross-encoder checkpoint");
  app->add_option("--index", c.index, "Index file");
  app->add_option("--corpus", c.corpus, "Response pool corpus (JSONL)");
  app->add_option("--n-r", c.n_r, "Candidates passed to the selector");
  app->add_option("--strategy", c.strategy, "selector_only or ensemble");
  app->add_flag("--normalize", c.normalize, "Min-max normalize g and s before the ensemble sum");
  app->add_option("--nprobe", c.nprobe, "IVF lists to probe (0 = exact search)");
}

inline std::string usage() {
  return "usage: twostage <gen-corpus|train|build-index|eval|bench|chat> [options]\n"
         "       twostage <subcommand> --help\n";
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns the exit
/// status: 0 on success, 2 for usage errors, 1 for other failures.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               std::istream& in = std::cin) {
  if (argc < 2) {
    err << detail::usage();
    return 2;
  }
  RunConfig cfg;
  CLI::App app("Two-stage response retrieval", "twostage");
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();

  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus and train/valid/test splits");
  detail::add_paths(gen, cfg);
  gen->add_option("--n-train", cfg.n_train, "Training examples");
  gen->add_option("--n-valid", cfg.n_valid, "Validation examples");
  gen->add_option("--n-test", cfg.n_test, "Test examples");
  gen->add_option("--vocab-size", cfg.vocab_size, "Approximate number of word types");
  gen->add_option("--topics", cfg.topics, "Number of latent topics");
  gen->add_option("--eval-negatives", cfg.eval_negatives, "Negatives per valid/test example");

  auto* train = app.add_subcommand("train", "Train the retriever, the selector, or both mutually");
  detail::add_paths(train, cfg);
  detail::add_encoder(train, cfg);
  detail::add_limits(train, cfg);
  train->add_option("--mode", cfg.mode, "bi, cross or mutual");
  train->add_option("--train", cfg.train, "Training corpus (JSONL)");
  train->add_option("--valid", cfg.valid, "Validation corpus (JSONL)");
  train->add_option("--alpha", cfg.alpha, "Mimicry weight");
  train->add_option("--tau", cfg.tau, "Mimicry temperature");
  train->add_option("--delta-r", cfg.delta_r, "Negatives per training example");
  train->add_option("--epochs", cfg.epochs, "Training epochs");
  train->add_option("--batch-size", cfg.batch_size, "Examples per update");
  train->add_option("--lr", cfg.lr, "Peak learning rate");
  train->add_option("--warmup", cfg.warmup, "Warmup fraction of total steps");
  train->add_option("--clip", cfg.clip, "Global gradient-norm clip");
  train->add_option("--patience", cfg.patience, "Early-stopping patience in epochs (0 = off)");

  auto* build = app.add_subcommand("build-index", "Encode the response pool into an index");
  detail::add_paths(build, cfg);
  detail::add_limits(build, cfg);
  build->add_option("--retriever", cfg.retriever, "Bi-encoder checkpoint");
  build->add_option("--corpus", cfg.corpus, "Response pool corpus (JSONL)");
  build->add_option("--index", cfg.index, "Output path (default <out-dir>/index.bin)");
  build->add_option("--clusters", cfg.clusters, "IVF clusters (0 = exact only)");
  build->add_option("--kmeans-iters", cfg.kmeans_iters, "Lloyd iterations");

  auto* eval = app.add_subcommand("eval", "Compute hits@k and MRR");
  detail::add_paths(eval, cfg);
  detail::add_limits(eval, cfg);
  detail::add_pipeline(eval, cfg);
  eval->add_option("--test", cfg.test, "Evaluation corpus (JSONL)");
  eval->add_option("--system", cfg.system, "bi, cross or two-stage");
  eval->add_option("--eval-mode", cfg.eval_mode, "auto, fixed (given candidates) or pool (full index)");
  eval->add_option("--ks", cfg.ks, "Comma-separated cutoffs");
  eval->add_option("--max-queries", cfg.max_queries, "Evaluate at most this many examples (0 = all)");

  auto* bench = app.add_subcommand("bench", "Accuracy, joint passes and latency across n_r");
  detail::add_paths(bench, cfg);
  detail::add_limits(bench, cfg);
  detail::add_pipeline(bench, cfg);
  bench->add_option("--test", cfg.test, "Query corpus (JSONL)");
  bench->add_option("--nr-grid", cfg.nr_grid, "Comma-separated n_r values");
  bench->add_option("--max-queries", cfg.max_queries, "Use at most this many queries (0 = all)");

  auto* chat = app.add_subcommand("chat", "Interactive retrieval session on stdin");
  detail::add_paths(chat, cfg);
  detail::add_limits(chat, cfg);
  detail::add_pipeline(chat, cfg);
  chat->add_flag("--verbose", cfg.verbose, "Show the top-5 candidates with g, s and g + s");

  std::string config_path;
  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--config", config_path, "Flat key = value settings file (flags take precedence)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << detail::usage();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) detail::apply_config_file(sub, config_path);
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text(detail::path_in(cfg, "resolved_config.txt"),
                       "# " + sub->get_name() + "\n" + sub->config_to_str(true, false));
    const std::string name = sub->get_name();
    if (name == "gen-corpus") return detail::gen_corpus(cfg, out);
    if (name == "train") return detail::train(cfg, out);
    if (name == "build-index") return detail::build_index(cfg, out);
    if (name == "eval") return detail::eval(cfg, out);
    if (name == "bench") return detail::bench(cfg, out);
    return detail::chat_cmd(cfg, in, out);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace twostage::cli
