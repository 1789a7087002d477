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

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "twostage/error.hpp"
#include "twostage/numerics/tape.hpp"

namespace twostage::encoders {

using numerics::Array;
using numerics::Rng;
using numerics::Tape;
using numerics::Var;

/// Named, ordered trainable arrays of one model.
class ParamSet {
 public:
  std::size_t add(std::string name, Array value) {
    if (index_.count(name)) throw ContractViolation("ParamSet: duplicate parameter " + name);
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("ParamSet: no parameter named " + name);
    return it->second;
  }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  Array& operator[](std::size_t i) { return values_[i]; }
  const Array& operator[](std::size_t i) const { return values_[i]; }
  Array& operator[](const std::string& name) { return values_[index(name)]; }
  const Array& operator[](const std::string& name) const { return values_[index(name)]; }

  std::vector<Array>& values() { return values_; }
  const std::vector<Array>& values() const { return values_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Array& a : values_) n += a.size();
    return n;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lazily places parameters on a tape, as gradient-tracking variables in
/// training and as constants for inference. Parameters that a forward pass
/// never touches stay off the tape.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamSet& params, bool track_gradients)
      : tape_(&tape), params_(&params), track_(track_gradients), vars_(params.size()) {}

  Var operator()(std::size_t i) {
    if (!vars_[i]) vars_[i] = track_ ? tape_->variable(params_->values()[i])
                                     : tape_->constant(params_->values()[i]);
    return *vars_[i];
  }

  Tape& tape() { return *tape_; }

  /// d(loss)/d(param) for every parameter after tape.backward(); untouched
  /// parameters get zeros.
  std::vector<Array> gradients() const {
    std::vector<Array> out;
    out.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i)
      out.push_back(vars_[i] ? tape_->grad(*vars_[i])
                             : Array(params_->values()[i].shape(), 0.0));
    return out;
  }

  /// Adds this tape's parameter gradients into `acc` (shaped like params).
  void accumulate_into(std::vector<Array>& acc) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i] && tape_->has_grad(vars_[i]->id)) acc[i] += tape_->grad(*vars_[i]);
  }

 private:
  Tape* tape_;
  const ParamSet* params_;
  bool track_;
  std::vector<std::optional<Var>> vars_;
};

inline Array normal_array(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Array a(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : a.values()) v = dist(rng);
  return a;
}

}  // namespace twostage::encoders
