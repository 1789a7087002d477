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
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "twostage/binary_io.hpp"
#include "twostage/encoders/bi_encoder.hpp"
#include "twostage/error.hpp"
#include "twostage/numerics/rng.hpp"

namespace twostage::index {

struct SearchHit {
  std::uint32_t id = 0;
  double score = 0.0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// (score desc, id asc)
inline bool hit_before(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Flat inner-product index over response vectors with an optional
/// inverted-file layer. Row i holds the vector for ids[i].
struct MipsIndex {
  std::size_t dim = 0;
  std::vector<std::uint32_t> ids;
  std::vector<double> vectors;  // rows() x dim, row-major
  std::vector<double> centroids;  // n_clusters() x dim
  std::vector<std::vector<std::uint32_t>> lists;  // row indices per cluster

  std::size_t rows() const { return ids.size(); }
  std::size_t n_clusters() const { return lists.size(); }
  bool has_ivf() const { return !lists.empty(); }

  std::span<const double> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
  std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }

  void add(std::uint32_t id, std::span<const double> v) {
    if (v.size() != dim) throw ContractViolation("MipsIndex::add: vector has wrong dimension");
    ids.push_back(id);
    vectors.insert(vectors.end(), v.begin(), v.end());
  }

  friend bool operator==(const MipsIndex&, const MipsIndex&) = default;
};

/// Encodes every response once with the bi-encoder's response tower. Row
/// order and ids follow the input order (pool id i -> row i).
inline MipsIndex build_index(std::span<const text::TokenSequence> responses,
                             const encoders::BiEncoder& model, std::size_t batch_size = 256) {
  if (responses.empty()) throw std::invalid_argument("build_index: empty response pool");
  if (batch_size == 0) throw std::invalid_argument("build_index: batch_size must be positive");
  MipsIndex idx;
  idx.dim = model.dim();
  idx.vectors.reserve(responses.size() * idx.dim);
  for (std::size_t start = 0; start < responses.size(); start += batch_size) {
    const std::size_t end = std::min(responses.size(), start + batch_size);
    const auto vecs = model.encode_responses(responses.subspan(start, end - start));
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      if (vecs[i].size() != idx.dim) throw ContractViolation("build_index: encoder output dimension mismatch");
      idx.add(static_cast<std::uint32_t>(start + i), vecs[i]);
    }
  }
  return idx;
}

namespace detail {

/// Keeps the k best hits seen so far; the heap top is the current worst.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(std::uint32_t id, double score) {
    const SearchHit h{id, score};
    if (heap_.size() < k_) {
      heap_.push(h);
    } else if (hit_before(h, heap_.top())) {
      heap_.pop();
      heap_.push(h);
    }
  }

  std::vector<SearchHit> sorted() && {
    std::vector<SearchHit> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<SearchHit, std::vector<SearchHit>, decltype(&hit_before)> heap_{&hit_before};
};

inline void check_query(const MipsIndex& idx, std::span<const double> query, std::size_t k) {
  if (k < 1) throw std::invalid_argument("search: k must be >= 1");
  if (query.size() != idx.dim) throw ContractViolation("search: query dimension mismatch");
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace detail

/// The min(k, P) largest inner products, ties by ascending id.
inline std::vector<SearchHit> search_exact(const MipsIndex& idx, std::span<const double> query, std::size_t k) {
  detail::check_query(idx, query, k);
  detail::TopK top(k);
  for (std::size_t r = 0; r < idx.rows(); ++r) top.offer(idx.ids[r], numerics::dot(query, idx.row(r)));
  return std::move(top).sorted();
}

/// k-means (L2, k-means++ seeding, `n_iters` Lloyd rounds) over the stored
/// vectors. Empty clusters are re-seeded with the member of the largest
/// cluster farthest from its centroid.
inline void train_ivf(MipsIndex& idx, std::size_t n_clusters, std::size_t n_iters, numerics::Rng& rng) {
  const std::size_t n = idx.rows();
  if (n_clusters < 1) throw std::invalid_argument("train_ivf: n_clusters must be >= 1");
  if (n_clusters > n)
    throw std::invalid_argument("train_ivf: " + std::to_string(n_clusters) + " clusters for " +
                                std::to_string(n) + " vectors");
  const std::size_t d = idx.dim;
  std::vector<double> centroids(n_clusters * d);
  auto set_centroid = [&](std::size_t c, std::size_t r) {
    std::copy_n(idx.vectors.data() + r * d, d, centroids.data() + c * d);
  };
  auto cent = [&](std::size_t c) { return std::span<const double>(centroids.data() + c * d, d); };

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  set_centroid(0, numerics::uniform_index(rng, n));
  for (std::size_t c = 1; c < n_clusters; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      nearest[r] = std::min(nearest[r], detail::squared_distance(idx.row(r), cent(c - 1)));
      total += nearest[r];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t r = 0; r < n; ++r) {
        acc += nearest[r];
        if (u < acc && nearest[r] > 0.0) {
          chosen = r;
          break;
        }
      }
    } else {
      chosen = numerics::uniform_index(rng, n);
    }
    set_centroid(c, chosen);
  }

  std::vector<std::uint32_t> assign(n, 0);
  auto assign_all = [&]() {
    for (std::size_t r = 0; r < n; ++r) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t c = 0; c < n_clusters; ++c) {
        const double dist = detail::squared_distance(idx.row(r), cent(c));
        if (dist < best) {
          best = dist;
          arg = static_cast<std::uint32_t>(c);
        }
      }
      assign[r] = arg;
    }
  };

  for (std::size_t it = 0; it < n_iters; ++it) {
    assign_all();
    std::vector<std::size_t> counts(n_clusters, 0);
    std::fill(centroids.begin(), centroids.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      ++counts[assign[r]];
      for (std::size_t j = 0; j < d; ++j) centroids[assign[r] * d + j] += idx.vectors[r * d + j];
    }
    for (std::size_t c = 0; c < n_clusters; ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] /= static_cast<double>(counts[c]);
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] > 0) continue;
      const std::size_t largest =
          static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_dist = -1.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (assign[r] != largest) continue;
        const double dist = detail::squared_distance(idx.row(r), cent(largest));
        if (dist > far_dist) {
          far_dist = dist;
          far = r;
        }
      }
      set_centroid(c, far);
      assign[far] = static_cast<std::uint32_t>(c);
      --counts[largest];
      counts[c] = 1;
    }
  }
  assign_all();

  idx.centroids = std::move(centroids);
  idx.lists.assign(n_clusters, {});
  for (std::size_t r = 0; r < n; ++r) idx.lists[assign[r]].push_back(static_cast<std::uint32_t>(r));
}

/// Scans the `nprobe` lists whose centroids have the largest inner product
/// with the query; exact top-k within the scanned rows.
inline std::vector<SearchHit> search_ivf(const MipsIndex& idx, std::span<const double> query, std::size_t k,
                                         std::size_t nprobe) {
  detail::check_query(idx, query, k);
  if (!idx.has_ivf()) throw std::invalid_argument("search_ivf: index has no IVF layer");
  if (nprobe < 1 || nprobe > idx.n_clusters())
    throw std::invalid_argument("search_ivf: nprobe must lie in [1, " + std::to_string(idx.n_clusters()) + "]");
  std::vector<SearchHit> coarse;
  coarse.reserve(idx.n_clusters());
  for (std::size_t c = 0; c < idx.n_clusters(); ++c)
    coarse.push_back({static_cast<std::uint32_t>(c), numerics::dot(query, idx.centroid(c))});
  std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(nprobe), coarse.end(), hit_before);
  detail::TopK top(k);
  for (std::size_t p = 0; p < nprobe; ++p)
    for (std::uint32_t r : idx.lists[coarse[p].id]) top.offer(idx.ids[r], numerics::dot(query, idx.row(r)));
  return std::move(top).sorted();
}

// File layout (little-endian): "MIPSIDX1" | u32 version | u32 P | u32 dim |
// u32 n_clusters | u32 ids[P] | f64 vectors[P*dim] | if n_clusters > 0:
// f64 centroids[n_clusters*dim], then per cluster u32 length + u32 rows[length].
inline constexpr char kIndexMagic[8] = {'M', 'I', 'P', 'S', 'I', 'D', 'X', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline std::vector<unsigned char> serialize(const MipsIndex& idx) {
  io::Writer w;
  w.bytes(kIndexMagic, sizeof kIndexMagic);
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(idx.rows()));
  w.u32(static_cast<std::uint32_t>(idx.dim));
  w.u32(static_cast<std::uint32_t>(idx.n_clusters()));
  for (std::uint32_t id : idx.ids) w.u32(id);
  w.f64s(idx.vectors);
  if (idx.has_ivf()) {
    w.f64s(idx.centroids);
    for (const auto& list : idx.lists) {
      w.u32(static_cast<std::uint32_t>(list.size()));
      for (std::uint32_t r : list) w.u32(r);
    }
  }
  return w.buffer();
}

inline MipsIndex deserialize(std::vector<unsigned char> bytes) {
  io::Reader r(std::move(bytes));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kIndexMagic, sizeof magic) != 0) throw FormatError("index: bad magic");
  if (r.u32() != kIndexVersion) throw FormatError("index: unsupported version");
  const std::size_t rows = r.u32();
  MipsIndex idx;
  idx.dim = r.u32();
  const std::size_t clusters = r.u32();
  if (idx.dim == 0 && rows > 0) throw FormatError("index: zero dimension");
  r.need(rows * 4 + rows * idx.dim * 8);
  idx.ids.resize(rows);
  std::unordered_set<std::uint32_t> seen;
  for (auto& id : idx.ids) {
    id = r.u32();
    if (!seen.insert(id).second) throw FormatError("index: duplicate id " + std::to_string(id));
  }
  idx.vectors.resize(rows * idx.dim);
  for (double& v : idx.vectors) v = r.f64();
  if (clusters > 0) {
    if (clusters > rows) throw FormatError("index: more clusters than rows");
    r.need(clusters * idx.dim * 8);
    idx.centroids.resize(clusters * idx.dim);
    for (double& v : idx.centroids) v = r.f64();
    idx.lists.resize(clusters);
    std::vector<bool> covered(rows, false);
    std::size_t total = 0;
    for (auto& list : idx.lists) {
      const std::size_t len = r.u32();
      r.need(len * 4);
      list.resize(len);
      for (auto& row : list) {
        row = r.u32();
        if (row >= rows || covered[row]) throw FormatError("index: posting lists do not partition the rows");
        covered[row] = true;
      }
      total += len;
    }
    if (total != rows) throw FormatError("index: posting lists do not partition the rows");
  }
  if (r.remaining() != 0) throw FormatError("index: trailing bytes");
  return idx;
}

inline void save_index(const MipsIndex& idx, const std::string& path) {
  const auto bytes = serialize(idx);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline MipsIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index " + path);
  return deserialize({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace twostage::index
