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

#include <cstddef>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace twostage::encoders {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 128;
  /// Context cap 300 + response cap 72 covers the longest joint input.
  std::size_t max_positions = 372;
  double dropout_rate = 0.1;
  /// Bi-encoder output size p.
  std::size_t projection_dim = 64;
  /// Cross-encoder MLP hidden size h.
  std::size_t head_dim = 64;

  void validate() const {
    if (vocab_size == 0) throw std::invalid_argument("EncoderConfig: vocab_size must be positive");
    if (model_dim == 0 || n_heads == 0 || model_dim % n_heads != 0)
      throw std::invalid_argument("EncoderConfig: model_dim must be a positive multiple of n_heads");
    if (max_positions < 302) throw std::invalid_argument("EncoderConfig: max_positions must be >= 302");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("EncoderConfig: dropout_rate must lie in [0, 1)");
    if (projection_dim == 0 || head_dim == 0 || ffn_dim == 0)
      throw std::invalid_argument("EncoderConfig: projection, head and ffn sizes must be positive");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},   {"model_dim", c.model_dim},
                     {"n_layers", c.n_layers},       {"n_heads", c.n_heads},
                     {"ffn_dim", c.ffn_dim},         {"max_positions", c.max_positions},
                     {"dropout_rate", c.dropout_rate}, {"projection_dim", c.projection_dim},
                     {"head_dim", c.head_dim}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("model_dim").get_to(c.model_dim);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("max_positions").get_to(c.max_positions);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("projection_dim").get_to(c.projection_dim);
  j.at("head_dim").get_to(c.head_dim);
}

}  // namespace twostage::encoders
