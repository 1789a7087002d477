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

#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "twostage/binary_io.hpp"
#include "twostage/encoders/bi_encoder.hpp"
#include "twostage/encoders/cross_encoder.hpp"
#include "twostage/text/vocab.hpp"

namespace twostage::encoders {

// Layout: "TSCKPT01" | u32 version | u64 manifest length | manifest JSON |
// f64 parameter data (little-endian, manifest order).
inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  EncoderConfig config;
  text::Vocabulary vocab;
  ParamSet params;
};

inline void save_checkpoint(const std::string& path, const std::string& kind, const EncoderConfig& cfg,
                            const ParamSet& params, const text::Vocabulary& vocab) {
  nlohmann::json manifest;
  manifest["kind"] = kind;
  manifest["config"] = cfg;
  manifest["vocab"] = vocab.ordinary_tokens();
  manifest["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    manifest["params"].push_back(
        {{"name", params.name(i)}, {"shape", params[i].shape()}, {"offset", offset}});
    offset += params[i].size() * sizeof(double);
  }
  manifest["data_bytes"] = offset;
  const std::string text = manifest.dump();

  io::Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  for (std::size_t i = 0; i < params.size(); ++i) w.f64s(params[i].span());
  w.save(path);
}

/// Reads and checks framing, then the manifest's own consistency. Shapes are
/// checked against a model built from the stored config by load_model().
inline Checkpoint read_checkpoint(const std::string& path) {
  io::Reader r = io::Reader::from_file(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("checkpoint: bad magic");
  if (r.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  const std::uint64_t len = r.u64();
  r.need(len);
  std::string text(len, '\0');
  r.bytes(text.data(), len);
  nlohmann::json manifest;
  Checkpoint ck;
  try {
    manifest = nlohmann::json::parse(text);
    ck.kind = manifest.at("kind").get<std::string>();
    ck.config = manifest.at("config").get<EncoderConfig>();
    ck.vocab = text::Vocabulary::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  const std::uint64_t data_bytes = manifest.value("data_bytes", std::uint64_t{0});
  if (r.remaining() != data_bytes) throw FormatError("checkpoint: data section size mismatch");
  std::uint64_t expected_offset = 0;
  for (const auto& entry : manifest.at("params")) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (entry.at("offset").get<std::uint64_t>() != expected_offset)
      throw FormatError("checkpoint: non-contiguous offset for " + entry.at("name").get<std::string>());
    Array a(shape);
    for (double& v : a.values()) v = r.f64();
    expected_offset += a.size() * sizeof(double);
    ck.params.add(entry.at("name").get<std::string>(), std::move(a));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

/// Rebuilds a model of type M from a checkpoint, validating kind, parameter
/// names and every shape.
template <typename M>
std::pair<M, text::Vocabulary> load_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.kind != M::kKind)
    throw FormatError("checkpoint: expected a " + std::string(M::kKind) + ", found " + ck.kind);
  if (ck.config.vocab_size != ck.vocab.size())
    throw FormatError("checkpoint: vocab_size does not match stored vocabulary");
  M model(ck.config, 0);
  ParamSet& target = model.params();
  if (target.size() != ck.params.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.name(i) != ck.params.name(i))
      throw FormatError("checkpoint: expected parameter " + target.name(i) + ", found " + ck.params.name(i));
    if (target[i].shape() != ck.params[i].shape())
      throw FormatError("checkpoint: shape mismatch for " + target.name(i) + ": expected " +
                        numerics::shape_string(target[i].shape()) + ", found " +
                        numerics::shape_string(ck.params[i].shape()));
    target[i] = std::move(ck.params[i]);
  }
  return {std::move(model), std::move(ck.vocab)};
}

template <typename M>
void save_model(const std::string& path, const M& model, const text::Vocabulary& vocab) {
  save_checkpoint(path, M::kKind, model.config(), model.params(), vocab);
}

}  // namespace twostage::encoders
