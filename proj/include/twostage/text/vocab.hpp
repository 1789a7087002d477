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
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "twostage/error.hpp"

namespace twostage::text {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kEot = 4;
inline constexpr std::size_t kNumSpecials = 5;

inline constexpr std::array<std::string_view, kNumSpecials> kSpecialNames = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[EOT]"};

/// Splits on ASCII whitespace.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

/// Token <-> id bijection with five reserved ids in front.
class Vocabulary {
 public:
  Vocabulary() {
    for (std::string_view name : kSpecialNames) tokens_.emplace_back(name);
    reindex();
  }

  /// Builds from an ordered list of ordinary tokens; ids start at 5.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const std::string& t : tokens) {
      if (v.index_.count(t)) throw std::invalid_argument("Vocabulary: duplicate token '" + t + "'");
      v.tokens_.push_back(t);
      v.index_.emplace(t, static_cast<TokenId>(v.tokens_.size() - 1));
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(TokenId id) const {
    require(id < tokens_.size(), "Vocabulary::token: id out of range");
    return tokens_[id];
  }

  /// Ordinary tokens only, in id order.
  std::vector<std::string> ordinary_tokens() const {
    return {tokens_.begin() + kNumSpecials, tokens_.end()};
  }

  /// One token per line; the first five lines name the reserved ids.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const std::string& t : tokens_) out << t << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.size() < kNumSpecials) throw FormatError("vocabulary file too short: " + path);
    for (std::size_t i = 0; i < kNumSpecials; ++i)
      if (lines[i] != kSpecialNames[i])
        throw FormatError("vocabulary line " + std::to_string(i + 1) + " must be " +
                          std::string(kSpecialNames[i]));
    return from_tokens({lines.begin() + kNumSpecials, lines.end()});
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      index_.emplace(tokens_[i], static_cast<TokenId>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Frequency vocabulary over a list of token sequences. Keeps tokens seen at
/// least `min_freq` times, most frequent first with lexicographic tie-break,
/// until the vocabulary (specials included) holds `max_size` entries.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sequences,
                              std::size_t min_freq, std::size_t max_size) {
  if (sequences.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences)
    for (const std::string& t : seq) {
      bool special = false;
      for (std::string_view name : kSpecialNames) special = special || t == name;
      if (!special) ++counts[t];
    }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  const std::size_t room = max_size > kNumSpecials ? max_size - kNumSpecials : 0;
  for (const auto& [token, count] : ranked) {
    if (count < min_freq || kept.size() >= room) break;
    kept.push_back(token);
  }
  return Vocabulary::from_tokens(kept);
}

}  // namespace twostage::text
