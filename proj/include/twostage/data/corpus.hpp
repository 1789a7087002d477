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

#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twostage/error.hpp"
#include "twostage/text/encode.hpp"

namespace twostage::data {

using text::DialogueExample;
using Tokens = std::vector<std::string>;

/// Examples plus the deduplicated pool of their responses. Pool ids are dense
/// and follow first occurrence.
struct Corpus {
  std::vector<DialogueExample> examples;
  /// Optional fixed candidate list per example (empty when absent).
  std::vector<std::vector<Tokens>> candidates;
  std::vector<Tokens> response_pool;
  /// response_pool id of examples[i].response.
  std::vector<std::size_t> response_ids;

  std::size_t size() const { return examples.size(); }

  void add(DialogueExample ex, std::vector<Tokens> cands = {}) {
    auto it = pool_index_.find(ex.response);
    std::size_t id;
    if (it == pool_index_.end()) {
      id = response_pool.size();
      response_pool.push_back(ex.response);
      pool_index_.emplace(ex.response, id);
    } else {
      id = it->second;
    }
    response_ids.push_back(id);
    examples.push_back(std::move(ex));
    candidates.push_back(std::move(cands));
  }

  std::optional<std::size_t> pool_id(const Tokens& response) const {
    auto it = pool_index_.find(response);
    if (it == pool_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Every utterance, response and candidate, for vocabulary building.
  std::vector<Tokens> all_sequences() const {
    std::vector<Tokens> out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      for (const auto& u : examples[i].context) out.push_back(u);
      out.push_back(examples[i].response);
      for (const auto& c : candidates[i]) out.push_back(c);
    }
    return out;
  }

 private:
  std::map<Tokens, std::size_t> pool_index_;
};

namespace detail {

inline Tokens tokens_field(const nlohmann::json& v, const char* field, std::size_t line) {
  if (!v.is_string()) throw SchemaError("line " + std::to_string(line) + ": field '" + field + "' must be a string");
  Tokens t = text::tokenize(v.get<std::string>());
  if (t.empty()) throw SchemaError("line " + std::to_string(line) + ": field '" + field + "' is empty");
  return t;
}

}  // namespace detail

/// Parses one JSON-Lines record. `line` is 1-based and used in diagnostics.
inline std::pair<DialogueExample, std::vector<Tokens>> parse_record(const std::string& text,
                                                                     std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), line);
  }
  if (!j.is_object()) throw ParseError("record is not a JSON object", line);
  const std::string where = "line " + std::to_string(line) + ": ";
  for (const char* field : {"context", "response", "label"})
    if (!j.contains(field)) throw SchemaError(where + "missing field '" + field + "'");
  DialogueExample ex;
  if (!j["context"].is_array() || j["context"].empty())
    throw SchemaError(where + "field 'context' must be a non-empty array of strings");
  for (const auto& u : j["context"]) ex.context.push_back(detail::tokens_field(u, "context", line));
  ex.response = detail::tokens_field(j["response"], "response", line);
  if (!j["label"].is_number_integer() || (j["label"] != 0 && j["label"] != 1))
    throw SchemaError(where + "field 'label' must be 0 or 1");
  ex.label = j["label"].get<int>();
  std::vector<Tokens> cands;
  if (j.contains("candidates")) {
    if (!j["candidates"].is_array()) throw SchemaError(where + "field 'candidates' must be an array");
    for (const auto& c : j["candidates"]) cands.push_back(detail::tokens_field(c, "candidates", line));
  }
  return {std::move(ex), std::move(cands)};
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto [ex, cands] = parse_record(text, line);
    corpus.add(std::move(ex), std::move(cands));
  }
  return corpus;
}

inline nlohmann::json to_json(const DialogueExample& ex, const std::vector<Tokens>& cands = {}) {
  nlohmann::json j;
  j["context"] = nlohmann::json::array();
  for (const auto& u : ex.context) j["context"].push_back(text::join(u));
  j["response"] = text::join(ex.response);
  j["label"] = ex.label;
  if (!cands.empty()) {
    j["candidates"] = nlohmann::json::array();
    for (const auto& c : cands) j["candidates"].push_back(text::join(c));
  }
  return j;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    out << to_json(corpus.examples[i], corpus.candidates[i]).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace twostage::data
