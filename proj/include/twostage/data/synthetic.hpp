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
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/data/corpus.hpp"
#include "twostage/numerics/rng.hpp"

namespace twostage::data {

/// Hidden variables behind one synthetic example. The response text is a
/// pure function of the key, so two examples share a pool entry iff they
/// share a key.
struct LatentKey {
  std::size_t topic = 0;
  std::size_t first = 0;
  std::size_t second = 0;

  friend bool operator==(const LatentKey&, const LatentKey&) = default;
  friend auto operator<=>(const LatentKey&, const LatentKey&) = default;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<LatentKey> example_keys;
  std::vector<LatentKey> response_keys;  // indexed by pool id
};

struct SyntheticLayout {
  std::size_t topic_words = 0;  // per topic
  std::size_t keys = 0;
  std::size_t fillers = 0;

  static SyntheticLayout for_vocab(std::size_t vocab_size, std::size_t n_topics) {
    SyntheticLayout l;
    l.topic_words = std::max<std::size_t>(4, (vocab_size * 2 / 5) / n_topics);
    l.keys = std::max<std::size_t>(6, vocab_size * 3 / 20);
    const std::size_t used = l.topic_words * n_topics + l.keys;
    l.fillers = vocab_size > used + 10 ? vocab_size - used : 10;
    return l;
  }
};

/// Topic-clustered dialogues. Every context has a latent topic, and its last
/// turn names two key words in order. The correct response repeats both keys
/// in that order together with words of the topic; earlier turns carry topic
/// words, fillers and sometimes a distracting key. A context-free frequency
/// scorer is no better than chance, while the latent key identifies the
/// response exactly.
inline SyntheticCorpus make_synthetic_corpus(std::size_t n_examples, std::size_t vocab_size,
                                             std::size_t n_topics, numerics::Rng& rng) {
  if (n_topics < 2) throw std::invalid_argument("make_synthetic_corpus: n_topics must be >= 2");
  const SyntheticLayout layout = SyntheticLayout::for_vocab(vocab_size, n_topics);
  auto topic_word = [&](std::size_t t, std::size_t j) {
    return "t" + std::to_string(t) + "_" + std::to_string(j % layout.topic_words);
  };
  auto key_word = [](std::size_t k) { return "k" + std::to_string(k); };
  auto filler = [&](std::size_t j) { return "w" + std::to_string(j % layout.fillers); };
  auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(numerics::uniform_index(rng, n)); };

  auto response_for = [&](const LatentKey& k) {
    const std::uint64_t h = numerics::splitmix64((k.topic * 131 + k.first) * 131 + k.second);
    return Tokens{topic_word(k.topic, h % 997), key_word(k.first), filler((h >> 16) % 9973),
                  key_word(k.second), topic_word(k.topic, (h >> 32) % 991)};
  };

  SyntheticCorpus out;
  for (std::size_t i = 0; i < n_examples; ++i) {
    LatentKey key;
    key.topic = pick(n_topics);
    key.first = pick(layout.keys);
    key.second = pick(layout.keys - 1);
    if (key.second >= key.first) ++key.second;

    auto chatter = [&](std::size_t len) {
      Tokens u;
      for (std::size_t j = 0; j < len; ++j)
        u.push_back(pick(2) == 0 ? topic_word(key.topic, pick(layout.topic_words))
                                 : filler(pick(layout.fillers)));
      return u;
    };

    DialogueExample ex;
    const std::size_t turns = 1 + pick(3);
    for (std::size_t t = 0; t + 1 < turns; ++t) {
      Tokens u = chatter(3 + pick(4));
      if (pick(2) == 0) {
        std::size_t decoy = pick(layout.keys);
        while (decoy == key.first || decoy == key.second) decoy = pick(layout.keys);
        u.insert(u.begin() + static_cast<std::ptrdiff_t>(pick(u.size() + 1)), key_word(decoy));
      }
      ex.context.push_back(std::move(u));
    }
    Tokens last = chatter(2 + pick(4));
    const std::size_t a = pick(last.size() + 1);
    last.insert(last.begin() + static_cast<std::ptrdiff_t>(a), key_word(key.first));
    const std::size_t b = a + 1 + pick(last.size() - a);
    last.insert(last.begin() + static_cast<std::ptrdiff_t>(b), key_word(key.second));
    ex.context.push_back(std::move(last));
    ex.response = response_for(key);
    ex.label = 1;

    const std::size_t before = out.corpus.response_pool.size();
    out.corpus.add(std::move(ex));
    if (out.corpus.response_pool.size() > before) out.response_keys.push_back(key);
    out.example_keys.push_back(key);
  }
  return out;
}

}  // namespace twostage::data
