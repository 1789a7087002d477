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
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "twostage/error.hpp"

namespace twostage::numerics {

using Rng = std::mt19937_64;

/// Dense row-major block of 64-bit floats.
///
/// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix. Every operation in
/// this library views a rank-1 array of length n as a 1 x n row.
class Array {
 public:
  Array() : shape_{0} {}
  explicit Array(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Array(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(count(shape_) == data_.size(), "Array: shape does not match data length");
  }

  static Array scalar(double v) { return Array({}, std::vector<double>{v}); }
  static Array vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Array({n}, std::move(v));
  }
  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Array({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    if (rank() == 0) return 1;
    return shape_.back();
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    require(data_.size() == 1, "Array::item: not a scalar");
    return data_[0];
  }

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array& operator+=(const Array& other) {
    require(data_.size() == other.data_.size(), "Array::+=: size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Array& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Stable temperature softmax: exp((z_i - max z) / tau) normalized.
inline std::vector<double> softmax_temp(std::span<const double> logits, double tau) {
  if (logits.empty()) throw std::invalid_argument("softmax_temp: empty logits");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_temp: tau must be positive");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / tau);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline double log_sum_exp(std::span<const double> x) {
  require(!x.empty(), "log_sum_exp: empty input");
  const double top = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - top);
  return top + std::log(s);
}

/// Inverted dropout on plain values. Eval mode (training == false) and
/// rate == 0 are the identity.
inline Array dropout(const Array& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Array out = x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : out.values()) v = keep(rng) ? v * scale : 0.0;
  return out;
}

}  // namespace twostage::numerics
