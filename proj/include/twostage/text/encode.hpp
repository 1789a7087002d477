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
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/text/vocab.hpp"

namespace twostage::text {

/// Tokenized conversation turn list plus a candidate response and its label.
struct DialogueExample {
  std::vector<std::vector<std::string>> context;
  std::vector<std::string> response;
  int label = 1;

  friend bool operator==(const DialogueExample&, const DialogueExample&) = default;
};

/// Model input after special-token assembly. Segment 0 is the context side,
/// segment 1 the response side of a joint sequence.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
  std::vector<std::uint32_t> positions;

  std::size_t size() const { return ids.size(); }

  void push(TokenId id, std::uint8_t segment) {
    positions.push_back(static_cast<std::uint32_t>(ids.size()));
    ids.push_back(id);
    segments.push_back(segment);
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline constexpr std::size_t kMaxContextLen = 300;
inline constexpr std::size_t kMaxResponseLen = 72;

namespace detail {

// Flattened "u_1 [EOT] u_2 [EOT] ... u_n [EOT]" cut to at most `budget`
// entries. Content tokens are dropped from the front first; [EOT] markers
// only go once no content is left.
inline std::vector<TokenId> context_body(const std::vector<std::vector<std::string>>& context,
                                         const Vocabulary& vocab, std::size_t budget) {
  std::vector<TokenId> body;
  for (const auto& utterance : context) {
    for (const std::string& t : utterance) body.push_back(vocab.id(t));
    body.push_back(kEot);
  }
  if (body.size() <= budget) return body;
  std::size_t excess = body.size() - budget;
  std::vector<bool> drop(body.size(), false);
  for (std::size_t i = 0; i < body.size() && excess > 0; ++i)
    if (body[i] != kEot) {
      drop[i] = true;
      --excess;
    }
  for (std::size_t i = 0; i < body.size() && excess > 0; ++i)
    if (!drop[i]) {
      drop[i] = true;
      --excess;
    }
  std::vector<TokenId> kept;
  kept.reserve(budget);
  for (std::size_t i = 0; i < body.size(); ++i)
    if (!drop[i]) kept.push_back(body[i]);
  return kept;
}

inline void check_context(const std::vector<std::vector<std::string>>& context) {
  if (context.empty()) throw std::invalid_argument("encode: empty context");
}

inline void check_response(const std::vector<std::string>& response) {
  if (response.empty()) throw std::invalid_argument("encode: empty response");
}

}  // namespace detail

/// [CLS] u_1 [EOT] ... u_n [EOT] [SEP], keeping the most recent tokens.
inline TokenSequence encode_context(const std::vector<std::vector<std::string>>& context,
                                    const Vocabulary& vocab,
                                    std::size_t max_len = kMaxContextLen) {
  detail::check_context(context);
  if (max_len < 2) throw std::invalid_argument("encode_context: max_len must be >= 2");
  TokenSequence seq;
  seq.push(kCls, 0);
  for (TokenId id : detail::context_body(context, vocab, max_len - 2)) seq.push(id, 0);
  seq.push(kSep, 0);
  return seq;
}

/// [CLS] r_1 .. r_l [SEP], keeping the leading tokens.
inline TokenSequence encode_response(const std::vector<std::string>& response,
                                     const Vocabulary& vocab,
                                     std::size_t max_len = kMaxResponseLen) {
  detail::check_response(response);
  if (max_len < 2) throw std::invalid_argument("encode_response: max_len must be >= 2");
  TokenSequence seq;
  seq.push(kCls, 0);
  const std::size_t body = std::min(response.size(), max_len - 2);
  for (std::size_t i = 0; i < body; ++i) seq.push(vocab.id(response[i]), 0);
  seq.push(kSep, 0);
  return seq;
}

/// [CLS] context [EOT] [SEP] r [SEP]; the response body is cut like
/// encode_response with `max_resp` and carries segment 1 with its [SEP].
inline TokenSequence encode_joint(const std::vector<std::vector<std::string>>& context,
                                  const std::vector<std::string>& response,
                                  const Vocabulary& vocab,
                                  std::size_t max_ctx = kMaxContextLen,
                                  std::size_t max_resp = kMaxResponseLen) {
  detail::check_response(response);
  if (max_resp < 2) throw std::invalid_argument("encode_joint: max_resp must be >= 2");
  TokenSequence seq = encode_context(context, vocab, max_ctx);
  const std::size_t body = std::min(response.size(), max_resp - 2);
  for (std::size_t i = 0; i < body; ++i) seq.push(vocab.id(response[i]), 1);
  seq.push(kSep, 1);
  return seq;
}

/// Ordinary tokens of a sequence in order, specials skipped.
inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : seq.ids)
    if (id >= kNumSpecials || id == kUnk) out.push_back(vocab.token(id));
  return out;
}

}  // namespace twostage::text
