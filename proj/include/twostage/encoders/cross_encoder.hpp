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
#include <vector>

#include "twostage/encoders/transformer.hpp"
#include "twostage/numerics/rng.hpp"

namespace twostage::encoders {

/// Joint tower over [CLS] context [SEP] response [SEP] with the matching
/// head s = sigmoid(W2 tanh(W1 h_cls + b1) + b2).
class CrossEncoder {
 public:
  static constexpr const char* kKind = "cross_encoder";

  CrossEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = numerics::stream(seed, {0x6372ULL});
    tower_ = TransformerTower(cfg_, "joint", params_, rng);
    const double d = static_cast<double>(cfg_.model_dim);
    const double h = static_cast<double>(cfg_.head_dim);
    w1_ = params_.add("head.w1", normal_array({cfg_.head_dim, cfg_.model_dim}, 1.0 / std::sqrt(d), rng));
    b1_ = params_.add("head.b1", Array({cfg_.head_dim}, 0.0));
    w2_ = params_.add("head.w2", normal_array({1, cfg_.head_dim}, 1.0 / std::sqrt(h), rng));
    b2_ = params_.add("head.b2", Array({1}, 0.0));
  }

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Pre-sigmoid matching logit as a scalar node.
  Var logit(ParamBinding& bind, const text::TokenSequence& seq, bool training, Rng& rng) const {
    namespace nx = numerics;
    joint_passes_.bump();
    Var cls = tower_.cls(bind, seq, training, rng);
    cls = nx::dropout(cls, cfg_.dropout_rate, training, rng);
    Var hidden = nx::tanh(nx::add_bias(nx::matmul_nt(cls, bind(w1_)), bind(b1_)));
    hidden = nx::dropout(hidden, cfg_.dropout_rate, training, rng);
    Var out = nx::add_bias(nx::matmul_nt(hidden, bind(w2_)), bind(b2_));
    return nx::pick(out, 0);
  }

  /// Eval-mode score: the logit, or sigmoid(logit) in (0, 1).
  double score(const text::TokenSequence& seq, bool with_sigmoid) const {
    Tape tape;
    ParamBinding bind(tape, params_, false);
    Rng unused(0);
    const double z = logit(bind, seq, false, unused).item();
    return with_sigmoid ? numerics::detail::sigmoid(z) : z;
  }

  /// Joint-tower forward passes since the last reset.
  std::uint64_t joint_passes() const { return joint_passes_.get(); }
  void reset_counters() const { joint_passes_.reset(); }

 private:
  EncoderConfig cfg_;
  ParamSet params_;
  TransformerTower tower_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
  PassCounter joint_passes_;
};

inline double selector_score(const CrossEncoder& model, const text::TokenSequence& seq,
                             bool with_sigmoid) {
  return model.score(seq, with_sigmoid);
}

}  // namespace twostage::encoders
