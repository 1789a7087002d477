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
#include <span>
#include <vector>

#include "twostage/encoders/transformer.hpp"
#include "twostage/numerics/rng.hpp"

namespace twostage::encoders {

/// Two unshared towers with linear projections; the retrieval score is the
/// inner product of the projected [CLS] states. Both towers and both
/// projections start from identical values and are trained separately.
class BiEncoder {
 public:
  static constexpr const char* kKind = "bi_encoder";

  BiEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const Rng start = numerics::stream(seed, {0x6269ULL});
    Rng rng = start;
    context_tower_ = TransformerTower(cfg_, "context", params_, rng);
    rng = start;
    response_tower_ = TransformerTower(cfg_, "response", params_, rng);
    const double std = 1.0 / static_cast<double>(cfg_.model_dim);
    Array proj = normal_array({cfg_.projection_dim, cfg_.model_dim}, std, rng);
    proj_context_ = params_.add("proj.context", proj);
    proj_response_ = params_.add("proj.response", std::move(proj));
  }

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t dim() const { return cfg_.projection_dim; }

  /// v_c = W_c * tower_c(seq)[CLS], rank-1 of length p.
  Var context_vec(ParamBinding& bind, const text::TokenSequence& seq, bool training, Rng& rng) const {
    tower_passes_.bump();
    Var cls = context_tower_.cls(bind, seq, training, rng);
    cls = numerics::dropout(cls, cfg_.dropout_rate, training, rng);
    return numerics::row(numerics::matmul_nt(cls, bind(proj_context_)), 0);
  }

  /// v_r = W_r * tower_r(seq)[CLS].
  Var response_vec(ParamBinding& bind, const text::TokenSequence& seq, bool training, Rng& rng) const {
    tower_passes_.bump();
    Var cls = response_tower_.cls(bind, seq, training, rng);
    cls = numerics::dropout(cls, cfg_.dropout_rate, training, rng);
    return numerics::row(numerics::matmul_nt(cls, bind(proj_response_)), 0);
  }

  std::vector<double> encode_context_vec(const text::TokenSequence& seq) const {
    return infer([&](ParamBinding& b, Rng& r) { return context_vec(b, seq, false, r); });
  }
  std::vector<double> encode_response_vec(const text::TokenSequence& seq) const {
    return infer([&](ParamBinding& b, Rng& r) { return response_vec(b, seq, false, r); });
  }

  /// Row-aligned response vectors for a list of sequences.
  std::vector<std::vector<double>> encode_responses(std::span<const text::TokenSequence> seqs) const {
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(encode_response_vec(s));
    return out;
  }

  /// Single-tower forward passes since the last reset.
  std::uint64_t tower_passes() const { return tower_passes_.get(); }
  void reset_counters() const { tower_passes_.reset(); }

 private:
  template <typename F>
  std::vector<double> infer(F f) const {
    Tape tape;
    ParamBinding bind(tape, params_, false);
    Rng unused(0);
    return f(bind, unused).value().values();
  }

  EncoderConfig cfg_;
  ParamSet params_;
  TransformerTower context_tower_;
  TransformerTower response_tower_;
  std::size_t proj_context_ = 0;
  std::size_t proj_response_ = 0;
  PassCounter tower_passes_;
};

inline std::vector<double> encode_context_vec(const BiEncoder& model, const text::TokenSequence& seq) {
  return model.encode_context_vec(seq);
}

inline std::vector<double> encode_response_vec(const BiEncoder& model, const text::TokenSequence& seq) {
  return model.encode_response_vec(seq);
}

/// g(c, r) = v_c . v_r
inline double retriever_score(std::span<const double> v_c, std::span<const double> v_r) {
  if (v_c.size() != v_r.size()) throw ContractViolation("retriever_score: vector lengths differ");
  return numerics::dot(v_c, v_r);
}

}  // namespace twostage::encoders
