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
#include <cstdint>
#include <vector>

#include "twostage/error.hpp"
#include "twostage/numerics/array.hpp"

namespace twostage::numerics {

struct AdamState {
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState like(const std::vector<Array>& params) {
    AdamState s;
    for (const Array& p : params) {
      s.first_moment.emplace_back(p.shape(), 0.0);
      s.second_moment.emplace_back(p.shape(), 0.0);
    }
    return s;
  }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update, in place.
inline void adam_step(std::vector<Array>& params, const std::vector<Array>& grads,
                      AdamState& state, double lr, const AdamOptions& opt = {}) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size())
    throw ContractViolation("adam_step: parameter/gradient/moment counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].same_shape(grads[k]) || !params[k].same_shape(state.first_moment[k]) ||
        !params[k].same_shape(state.second_moment[k]))
      throw ContractViolation("adam_step: shape mismatch in parameter " + std::to_string(k));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Array& p = params[k];
    const Array& g = grads[k];
    Array& m = state.first_moment[k];
    Array& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

inline double global_norm(const std::vector<Array>& grads) {
  double s = 0.0;
  for (const Array& g : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

/// Rescales all gradients by threshold / norm when the joint L2 norm exceeds
/// `threshold`. Returns the pre-clip norm.
inline double clip_global_norm(std::vector<Array>& grads, double threshold = 10.0) {
  require(threshold > 0.0, "clip_global_norm: threshold must be positive");
  const double norm = global_norm(grads);
  if (norm > threshold) {
    const double s = threshold / norm;
    for (Array& g : grads) g *= s;
  }
  return norm;
}

struct ScheduleConfig {
  double peak_lr = 1e-3;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 1;
};

/// Linear warmup 0 -> peak over warmup_steps, then linear decay to 0 at
/// total_steps; 0 afterwards.
inline double lr_at(std::uint64_t step, const ScheduleConfig& cfg) {
  require(cfg.warmup_steps <= cfg.total_steps, "lr_at: warmup_steps exceeds total_steps");
  if (step >= cfg.total_steps) return step == cfg.total_steps && cfg.warmup_steps == cfg.total_steps
                                        ? cfg.peak_lr
                                        : 0.0;
  if (step < cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double remaining = static_cast<double>(cfg.total_steps - step);
  const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * remaining / span;
}

}  // namespace twostage::numerics
