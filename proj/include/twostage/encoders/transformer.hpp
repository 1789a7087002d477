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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "twostage/encoders/config.hpp"
#include "twostage/encoders/params.hpp"
#include "twostage/text/encode.hpp"

namespace twostage::encoders {

/// Copyable relaxed counter for forward passes.
class PassCounter {
 public:
  PassCounter() = default;
  PassCounter(const PassCounter& o) : n_(o.get()) {}
  PassCounter& operator=(const PassCounter& o) {
    n_.store(o.get(), std::memory_order_relaxed);
    return *this;
  }
  void bump() const { n_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t get() const { return n_.load(std::memory_order_relaxed); }
  void reset() const { n_.store(0, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> n_{0};
};

/// Post-layer-norm transformer encoder (summed token + position + segment
/// embeddings, multi-head self-attention, GELU feed-forward). Holds parameter
/// indices into a ParamSet owned by the enclosing model.
class TransformerTower {
 public:
  TransformerTower() = default;

  /// Registers this tower's parameters under `prefix` and initializes them.
  TransformerTower(const EncoderConfig& cfg, const std::string& prefix, ParamSet& params, Rng& rng)
      : cfg_(cfg) {
    const std::size_t d = cfg.model_dim;
    const double emb_std = 0.02;
    auto linear_std = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    tok_emb_ = params.add(prefix + ".tok_emb", normal_array({cfg.vocab_size, d}, emb_std, rng));
    pos_emb_ = params.add(prefix + ".pos_emb", normal_array({cfg.max_positions, d}, emb_std, rng));
    seg_emb_ = params.add(prefix + ".seg_emb", normal_array({2, d}, emb_std, rng));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::string p = prefix + ".layer" + std::to_string(l);
      Layer layer;
      layer.wq = params.add(p + ".attn.wq", normal_array({d, d}, linear_std(d), rng));
      layer.bq = params.add(p + ".attn.bq", Array({d}, 0.0));
      layer.wk = params.add(p + ".attn.wk", normal_array({d, d}, linear_std(d), rng));
      layer.bk = params.add(p + ".attn.bk", Array({d}, 0.0));
      layer.wv = params.add(p + ".attn.wv", normal_array({d, d}, linear_std(d), rng));
      layer.bv = params.add(p + ".attn.bv", Array({d}, 0.0));
      layer.wo = params.add(p + ".attn.wo", normal_array({d, d}, linear_std(d), rng));
      layer.bo = params.add(p + ".attn.bo", Array({d}, 0.0));
      layer.ln1_gain = params.add(p + ".ln1.gain", Array({d}, 1.0));
      layer.ln1_bias = params.add(p + ".ln1.bias", Array({d}, 0.0));
      layer.w1 = params.add(p + ".ffn.w1", normal_array({d, cfg.ffn_dim}, linear_std(d), rng));
      layer.b1 = params.add(p + ".ffn.b1", Array({cfg.ffn_dim}, 0.0));
      layer.w2 = params.add(p + ".ffn.w2", normal_array({cfg.ffn_dim, d}, linear_std(cfg.ffn_dim), rng));
      layer.b2 = params.add(p + ".ffn.b2", Array({d}, 0.0));
      layer.ln2_gain = params.add(p + ".ln2.gain", Array({d}, 1.0));
      layer.ln2_bias = params.add(p + ".ln2.bias", Array({d}, 0.0));
      layers_.push_back(layer);
    }
  }

  /// Contextualized states [len, d] for one sequence.
  Var forward(ParamBinding& bind, const text::TokenSequence& seq, bool training, Rng& rng) const {
    namespace nx = numerics;
    if (seq.size() == 0) throw ContractViolation("TransformerTower: empty sequence");
    if (seq.size() > cfg_.max_positions)
      throw ContractViolation("TransformerTower: sequence of " + std::to_string(seq.size()) +
                              " tokens exceeds max_positions " + std::to_string(cfg_.max_positions));
    std::vector<std::size_t> ids(seq.ids.begin(), seq.ids.end());
    for (std::size_t id : ids)
      if (id >= cfg_.vocab_size) throw ContractViolation("TransformerTower: token id outside vocabulary");
    std::vector<std::size_t> pos(seq.positions.begin(), seq.positions.end());
    std::vector<std::size_t> seg(seq.segments.begin(), seq.segments.end());

    Var x = nx::add(nx::add(nx::gather_rows(bind(tok_emb_), std::move(ids)),
                            nx::gather_rows(bind(pos_emb_), std::move(pos))),
                    nx::gather_rows(bind(seg_emb_), std::move(seg)));
    x = nx::dropout(x, cfg_.dropout_rate, training, rng);

    const std::size_t heads = cfg_.n_heads;
    const std::size_t dh = cfg_.model_dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const Layer& L : layers_) {
      Var q = nx::add_bias(nx::matmul(x, bind(L.wq)), bind(L.bq));
      Var k = nx::add_bias(nx::matmul(x, bind(L.wk)), bind(L.bk));
      Var v = nx::add_bias(nx::matmul(x, bind(L.wv)), bind(L.bv));
      std::vector<Var> per_head;
      per_head.reserve(heads);
      for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : nx::slice_cols(q, h * dh, dh);
        Var kh = heads == 1 ? k : nx::slice_cols(k, h * dh, dh);
        Var vh = heads == 1 ? v : nx::slice_cols(v, h * dh, dh);
        Var attn = nx::softmax_rows(nx::scale(nx::matmul_nt(qh, kh), inv_sqrt));
        per_head.push_back(nx::matmul(attn, vh));
      }
      Var ctx = heads == 1 ? per_head[0] : nx::concat_cols(per_head);
      Var attn_out = nx::add_bias(nx::matmul(ctx, bind(L.wo)), bind(L.bo));
      attn_out = nx::dropout(attn_out, cfg_.dropout_rate, training, rng);
      x = nx::layer_norm_rows(nx::add(x, attn_out), bind(L.ln1_gain), bind(L.ln1_bias));

      Var hidden = nx::gelu(nx::add_bias(nx::matmul(x, bind(L.w1)), bind(L.b1)));
      Var ffn_out = nx::add_bias(nx::matmul(hidden, bind(L.w2)), bind(L.b2));
      ffn_out = nx::dropout(ffn_out, cfg_.dropout_rate, training, rng);
      x = nx::layer_norm_rows(nx::add(x, ffn_out), bind(L.ln2_gain), bind(L.ln2_bias));
    }
    return x;
  }

  /// State at position 0 ([CLS]) as a rank-1 vector.
  Var cls(ParamBinding& bind, const text::TokenSequence& seq, bool training, Rng& rng) const {
    return numerics::row(forward(bind, seq, training, rng), 0);
  }

 private:
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_gain, ln1_bias;
    std::size_t w1, b1, w2, b2, ln2_gain, ln2_bias;
  };

  EncoderConfig cfg_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, seg_emb_ = 0;
  std::vector<Layer> layers_;
};

}  // namespace twostage::encoders
