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
#include <span>
#include <utility>
#include <vector>

#include "twostage/error.hpp"
#include "twostage/numerics/tape.hpp"

namespace twostage::learning {

using numerics::Tape;
using numerics::Var;

/// Candidate-softmax negative log-likelihood of the positive slot.
inline double nll_loss(std::span<const double> scores, std::size_t positive_slot) {
  if (positive_slot >= scores.size()) throw ContractViolation("nll_loss: positive slot out of range");
  return numerics::log_sum_exp(scores) - scores[positive_slot];
}

/// D(q || p) = sum_m q_m ln(q_m / p_m), with 0 ln 0 = 0 and p floored at 1e-12.
inline double kl_div(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw ContractViolation("kl_div: length mismatch");
  auto check = [](std::span<const double> d, const char* which) {
    double total = 0.0;
    for (double v : d) {
      if (!(v >= 0.0)) throw ContractViolation(std::string("kl_div: negative entry in ") + which);
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractViolation(std::string("kl_div: ") + which + " does not sum to 1");
  };
  check(q, "q");
  check(p, "p");
  double kl = 0.0;
  for (std::size_t m = 0; m < q.size(); ++m)
    if (q[m] > 0.0) kl += q[m] * std::log(q[m] / std::max(p[m], 1e-12));
  return kl;
}

/// Loss weights shared by the mutual objectives.
struct MimicryWeights {
  double alpha = 1.0;
  double tau = 3.0;
};

/// Per-row objective on the tape: nll(logits) + alpha * D(target || p_tau),
/// scaled by 1 / batch_rows. `target` is a constant; an empty target or
/// alpha == 0 leaves only the supervised term.
struct RowLoss {
  Var total;
  double supervised = 0.0;
  double mimicry = 0.0;
};

inline RowLoss row_loss(Var logits, std::size_t positive_slot, std::span<const double> target,
                        const MimicryWeights& w, std::size_t batch_rows) {
  RowLoss out;
  Var sup = numerics::nll(logits, positive_slot);
  out.supervised = sup.item();
  Var total = sup;
  if (w.alpha != 0.0 && !target.empty()) {
    Var kl = numerics::kl_to_target(target, logits, w.tau);
    out.mimicry = kl.item();
    total = numerics::add(total, numerics::scale(kl, w.alpha));
  }
  out.total = numerics::scale(total, 1.0 / static_cast<double>(batch_rows));
  return out;
}

/// (L_g, L_s) for one row: each model's candidate NLL plus alpha times the KL
/// from the other model's tau-softened prediction (held constant) to its own.
inline std::pair<double, double> mutual_losses(std::span<const double> retriever_logits,
                                               std::span<const double> selector_logits,
                                               std::size_t positive_slot, const MimicryWeights& w) {
  if (retriever_logits.size() != selector_logits.size())
    throw ContractViolation("mutual_losses: logit vectors differ in length");
  const std::vector<double> p = numerics::softmax_temp(retriever_logits, w.tau);
  const std::vector<double> q = numerics::softmax_temp(selector_logits, w.tau);
  Tape tape;
  Var g = tape.variable(numerics::Array::vector({retriever_logits.begin(), retriever_logits.end()}));
  Var s = tape.variable(numerics::Array::vector({selector_logits.begin(), selector_logits.end()}));
  const double lg = row_loss(g, positive_slot, q, w, 1).total.item();
  const double ls = row_loss(s, positive_slot, p, w, 1).total.item();
  return {lg, ls};
}

}  // namespace twostage::learning
