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

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "twostage/index/mips_index.hpp"
#include "vectors.hpp"

namespace twostage::index {
namespace {

using numerics::Rng;
using testing::brute_force;
using testing::clustered_index;
using testing::random_index;
using testing::random_query;

MipsIndex two_by_two() {
  MipsIndex idx;
  idx.dim = 2;
  idx.add(0, std::vector<double>{1, 0});
  idx.add(1, std::vector<double>{0, 1});
  return idx;
}

TEST(SearchExact, HandExample) {
  const auto hits = search_exact(two_by_two(), std::vector<double>{1, 0}, 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, 0u);
  EXPECT_EQ(hits[0].score, 1.0);
}

TEST(SearchExact, LargeKReturnsEverythingOrdered) {
  Rng rng(1);
  const MipsIndex idx = random_index(30, 4, rng);
  const auto q = random_query(4, rng);
  const auto hits = search_exact(idx, q, 100);
  ASSERT_EQ(hits.size(), 30u);
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
  EXPECT_EQ(hits, brute_force(idx, q, 100));
}

TEST(SearchExact, Errors) {
  const MipsIndex idx = two_by_two();
  EXPECT_THROW(search_exact(idx, std::vector<double>{1, 0}, 0), std::invalid_argument);
  EXPECT_THROW(search_exact(idx, std::vector<double>{1, 0, 0}, 1), ContractViolation);
  MipsIndex bad;
  bad.dim = 2;
  EXPECT_THROW(bad.add(0, std::vector<double>{1}), ContractViolation);
}

TEST(SearchExact, MatchesSortOracle) {
  Rng rng(2);
  const MipsIndex idx = random_index(2000, 32, rng);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_query(32, rng);
    for (std::size_t k : {1u, 10u, 100u}) EXPECT_EQ(search_exact(idx, q, k), brute_force(idx, q, k));
  }
}

TEST(SearchExact, TiesBreakByAscendingId) {
  MipsIndex idx;
  idx.dim = 2;
  for (std::uint32_t id : {7u, 3u, 9u, 1u}) idx.add(id, std::vector<double>{1, 1});
  idx.add(5, std::vector<double>{2, 2});
  const auto hits = search_exact(idx, std::vector<double>{1, 1}, 4);
  ASSERT_EQ(hits.size(), 4u);
  EXPECT_EQ(hits[0].id, 5u);
  EXPECT_EQ(hits[1].id, 1u);
  EXPECT_EQ(hits[2].id, 3u);
  EXPECT_EQ(hits[3].id, 7u);
}

TEST(SearchExact, ScoresAreBitwiseDotProducts) {
  Rng rng(3);
  const MipsIndex idx = random_index(200, 16, rng);
  const auto q = random_query(16, rng);
  for (const auto& h : search_exact(idx, q, 50)) EXPECT_EQ(h.score, numerics::dot(q, idx.row(h.id)));
}

TEST(SearchExact, TopKNests) {
  Rng rng(4);
  const MipsIndex idx = random_index(500, 8, rng);
  const auto q = random_query(8, rng);
  const auto big = search_exact(idx, q, 80);
  for (std::size_t k : {1u, 5u, 20u, 79u}) {
    const auto small = search_exact(idx, q, k);
    EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
  }
}

TEST(Ivf, SingleClusterHoldsEverything) {
  Rng rng(5);
  MipsIndex idx = random_index(40, 4, rng);
  Rng k(1);
  train_ivf(idx, 1, 5, k);
  ASSERT_EQ(idx.n_clusters(), 1u);
  EXPECT_EQ(idx.lists[0].size(), 40u);
}

MipsIndex two_blobs(Rng& rng) {
  std::normal_distribution<double> g(0.0, 0.1);
  MipsIndex idx;
  idx.dim = 3;
  for (std::uint32_t i = 0; i < 100; ++i) {
    const double cx = i < 50 ? 5.0 : -5.0;
    idx.add(i, std::vector<double>{cx + g(rng), 1.0 + g(rng), g(rng)});
  }
  return idx;
}

TEST(Ivf, SeparatedBlobsArePure) {
  Rng rng(6);
  MipsIndex idx = two_blobs(rng);
  Rng k(2);
  train_ivf(idx, 2, 10, k);
  ASSERT_EQ(idx.n_clusters(), 2u);
  for (const auto& list : idx.lists) {
    ASSERT_EQ(list.size(), 50u);
    const bool first_blob = list[0] < 50;
    for (std::uint32_t r : list) EXPECT_EQ(r < 50, first_blob);
  }
  const auto hits = search_ivf(idx, std::vector<double>{5.0, 1.0, 0.0}, 10, 1);
  ASSERT_EQ(hits.size(), 10u);
  for (const auto& h : hits) EXPECT_LT(h.id, 50u);
}

TEST(Ivf, SameSeedSameAssignment) {
  Rng rng(7);
  const MipsIndex base = clustered_index(600, 8, 6, 0.5, rng);
  MipsIndex a = base, b = base;
  Rng ra(11), rb(11);
  train_ivf(a, 8, 10, ra);
  train_ivf(b, 8, 10, rb);
  EXPECT_EQ(a.lists, b.lists);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Ivf, PostingListsPartitionRows) {
  Rng rng(8);
  MipsIndex idx = clustered_index(700, 8, 5, 0.3, rng);
  Rng k(3);
  // More clusters than natural groups forces re-seeding of empty clusters.
  train_ivf(idx, 40, 10, k);
  std::set<std::uint32_t> seen;
  std::size_t total = 0;
  for (const auto& list : idx.lists) {
    EXPECT_FALSE(list.empty());
    total += list.size();
    seen.insert(list.begin(), list.end());
  }
  EXPECT_EQ(total, 700u);
  EXPECT_EQ(seen.size(), 700u);
}

TEST(Ivf, FullProbeEqualsExactAndRecallGrows) {
  Rng rng(9);
  MipsIndex idx = clustered_index(3000, 16, 32, 0.6, rng);
  Rng k(4);
  train_ivf(idx, 32, 15, k);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_query(16, rng);
    const auto exact = search_exact(idx, q, 10);
    EXPECT_EQ(search_ivf(idx, q, 10, 32), exact);
    double prev = -1.0;
    for (std::size_t nprobe : {1u, 2u, 4u, 8u, 16u, 32u}) {
      const double r = testing::recall(search_ivf(idx, q, 10, nprobe), exact);
      EXPECT_GE(r, prev);
      prev = r;
    }
  }
}

TEST(Ivf, Errors) {
  Rng rng(10);
  MipsIndex idx = random_index(10, 4, rng);
  Rng k(5);
  EXPECT_THROW(search_ivf(idx, random_query(4, rng), 1, 1), std::invalid_argument);
  EXPECT_THROW(train_ivf(idx, 11, 5, k), std::invalid_argument);
  EXPECT_THROW(train_ivf(idx, 0, 5, k), std::invalid_argument);
  train_ivf(idx, 3, 5, k);
  EXPECT_THROW(search_ivf(idx, random_query(4, rng), 1, 0), std::invalid_argument);
  EXPECT_THROW(search_ivf(idx, random_query(4, rng), 1, 4), std::invalid_argument);
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Persistence, RoundTripIsBitwise) {
  Rng rng(12);
  MipsIndex flat = random_index(123, 7, rng);
  MipsIndex ivf = flat;
  Rng k(6);
  train_ivf(ivf, 5, 5, k);
  for (const MipsIndex* idx : {&flat, &ivf}) {
    const auto path = temp_file("twostage_index.bin");
    save_index(*idx, path);
    const MipsIndex back = load_index(path);
    EXPECT_TRUE(back == *idx);
    const std::string bytes = slurp(path);
    std::size_t expected = 8 + 4 * 4 + 123 * 4 + 123 * 7 * 8;
    if (idx->has_ivf()) expected += 5 * 7 * 8 + 5 * 4 + 123 * 4;
    EXPECT_EQ(bytes.size(), expected);
    EXPECT_EQ(bytes.substr(0, 8), "MIPSIDX1");
  }
}

TEST(Persistence, RejectsDamagedFiles) {
  Rng rng(13);
  MipsIndex idx = random_index(20, 3, rng);
  Rng k(7);
  train_ivf(idx, 4, 5, k);
  const auto good = serialize(idx);
  auto expect_bad = [](std::vector<unsigned char> bytes) { EXPECT_THROW(deserialize(std::move(bytes)), FormatError); };

  auto b = good;
  b[2] ^= 0xff;
  expect_bad(b);
  b = good;
  b[8] = 2;  // version
  expect_bad(b);
  expect_bad(std::vector<unsigned char>(good.begin(), good.end() - 3));
  b = good;
  b.push_back(0);
  expect_bad(b);
  b = good;
  b[24] = b[28];  // ids 0 and 1 collide
  b[25] = b[29];
  b[26] = b[30];
  b[27] = b[31];
  expect_bad(b);
  b = good;
  b[b.size() - 4] ^= 0x01;  // last posting entry now repeats or leaves the range
  expect_bad(b);
  EXPECT_THROW(load_index("/nonexistent/twostage.idx"), std::runtime_error);
}

TEST(BuildIndex, EncodesPoolInOrder) {
  encoders::EncoderConfig c;
  c.vocab_size = 20;
  c.model_dim = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.projection_dim = 6;
  encoders::BiEncoder bi(c, 3);
  std::vector<text::TokenSequence> pool(5);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i].push(text::kCls, 0);
    pool[i].push(static_cast<text::TokenId>(5 + i), 0);
    pool[i].push(text::kSep, 0);
  }
  const MipsIndex idx = build_index(pool, bi, 2);
  EXPECT_EQ(idx.dim, 6u);
  ASSERT_EQ(idx.rows(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(idx.ids[i], i);
    const auto v = bi.encode_response_vec(pool[i]);
    EXPECT_TRUE(std::equal(v.begin(), v.end(), idx.row(i).begin()));
  }
  EXPECT_TRUE(build_index(pool, bi, 256) == idx);
  const MipsIndex one = build_index(std::span(pool).first(1), bi);
  EXPECT_EQ(one.rows(), 1u);
  EXPECT_EQ(one.vectors.size(), 6u);
  EXPECT_THROW(build_index(std::span<const text::TokenSequence>(), bi), std::invalid_argument);
}

}  // namespace
}  // namespace twostage::index
