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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "twostage/error.hpp"
#include "twostage/numerics/tape.hpp"

namespace twostage::numerics {
namespace {

using testing::check_inputs;
using testing::random_array;
using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

constexpr double kTol = 1e-4;
constexpr std::size_t kPoints = 10;

// Weighted sum with fixed random weights so that every output coordinate
// reaches the loss with a distinct coefficient.
Var probe(Var x, std::uint64_t seed = 99) {
  Rng rng(seed);
  Array w = random_array(x.value().shape(), rng);
  return sum(mul(x, x.tape->constant(std::move(w))));
}

void expect_grad(std::vector<Array> inputs, const Fn& f, std::uint64_t seed = 1) {
  Rng rng(seed);
  const auto r = check_inputs(std::move(inputs), f, kPoints, rng);
  EXPECT_LT(r.max_rel_error, kTol);
}

TEST(TapeBackward, ProductRule) {
  Tape t;
  Var x = t.variable(Array::scalar(2.0));
  Var y = t.variable(Array::scalar(3.0));
  t.backward(mul(x, y));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 3.0);
  EXPECT_DOUBLE_EQ(t.grad(y).item(), 2.0);
}

TEST(TapeBackward, TanhAtZero) {
  Tape t;
  Var x = t.variable(Array::vector({0.0}));
  t.backward(sum(tanh(x)));
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 1.0);
}

TEST(TapeBackward, NonScalarLossIsContractViolation) {
  Tape t;
  Var x = t.variable(Array::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(tanh(x)), ContractViolation);
}

TEST(TapeBackward, UntouchedVariableGetsZeros) {
  Tape t;
  Var x = t.variable(Array::vector({1.0, 2.0}));
  Var unused = t.variable(Array::matrix(2, 2, 1.0));
  t.backward(sum(x));
  EXPECT_EQ(t.grad(unused), Array::matrix(2, 2, 0.0));
}

TEST(TapeBackward, ConstantsReceiveNoGradient) {
  Tape t;
  Var c = t.constant(Array::vector({1.0, 2.0}));
  Var x = t.variable(Array::vector({3.0, 4.0}));
  t.backward(dot(c, x));
  EXPECT_FALSE(t.has_grad(c.id));
  EXPECT_EQ(t.grad(x), Array::vector({1.0, 2.0}));
}

TEST(TapeBackward, SharedInputAccumulates) {
  Tape t;
  Var x = t.variable(Array::scalar(1.5));
  t.backward(add(mul(x, x), scale(x, 4.0)));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 2 * 1.5 + 4.0);
}

TEST(TapeBackward, CrossTapeInputRejected) {
  Tape a, b;
  Var x = a.variable(Array::scalar(1.0));
  Var y = b.variable(Array::scalar(1.0));
  EXPECT_THROW(add(x, y), ContractViolation);
}

TEST(Gradients, Matmul) {
  Rng rng(2);
  expect_grad({random_array({3, 4}, rng), random_array({4, 5}, rng)},
              [](Tape&, const std::vector<Var>& v) { return probe(matmul(v[0], v[1])); });
}

TEST(Gradients, MatmulTransposed) {
  Rng rng(3);
  expect_grad({random_array({3, 4}, rng), random_array({5, 4}, rng)},
              [](Tape&, const std::vector<Var>& v) { return probe(matmul_nt(v[0], v[1])); });
}

TEST(Gradients, AddAndBias) {
  Rng rng(4);
  expect_grad({random_array({3, 4}, rng), random_array({3, 4}, rng), random_array({4}, rng)},
              [](Tape&, const std::vector<Var>& v) { return probe(add_bias(add(v[0], v[1]), v[2])); });
}

TEST(Gradients, MulScaleDot) {
  Rng rng(5);
  expect_grad({random_array({6}, rng), random_array({6}, rng)}, [](Tape&, const std::vector<Var>& v) {
    return add(probe(scale(mul(v[0], v[1]), -1.7)), dot(v[0], v[1]));
  });
}

TEST(Gradients, Pointwise) {
  Rng rng(6);
  expect_grad({random_array({2, 5}, rng)}, [](Tape&, const std::vector<Var>& v) {
    return add(add(probe(tanh(v[0]), 1), probe(sigmoid(v[0]), 2)), add(probe(gelu(v[0]), 3), probe(exp(v[0]), 4)));
  });
}

TEST(Gradients, Log) {
  Rng rng(7);
  Array x = random_array({7}, rng);
  for (double& v : x.values()) v = 0.5 + std::abs(v);
  expect_grad({x}, [](Tape&, const std::vector<Var>& v) { return probe(log(v[0])); });
}

TEST(Gradients, SoftmaxRows) {
  Rng rng(8);
  expect_grad({random_array({3, 6}, rng, 2.0)},
              [](Tape&, const std::vector<Var>& v) { return probe(softmax_rows(v[0])); });
}

TEST(Gradients, LogSoftmaxRows) {
  Rng rng(9);
  expect_grad({random_array({3, 6}, rng, 2.0)},
              [](Tape&, const std::vector<Var>& v) { return probe(log_softmax_rows(v[0])); });
}

TEST(Gradients, LayerNormRows) {
  Rng rng(10);
  expect_grad({random_array({4, 8}, rng), random_array({8}, rng), random_array({8}, rng)},
              [](Tape&, const std::vector<Var>& v) { return probe(layer_norm_rows(v[0], v[1], v[2])); });
}

TEST(Gradients, GatherRowsWithRepeats) {
  Rng rng(11);
  expect_grad({random_array({5, 3}, rng)},
              [](Tape&, const std::vector<Var>& v) { return probe(gather_rows(v[0], {4, 0, 4, 2, 4})); });
}

TEST(Gradients, SliceConcatRowPick) {
  Rng rng(12);
  expect_grad({random_array({3, 6}, rng), random_array({3, 2}, rng)}, [](Tape&, const std::vector<Var>& v) {
    Var joined = concat_cols({slice_cols(v[0], 1, 3), v[1], slice_cols(v[0], 4, 2)});
    return add(probe(joined), mul(pick(row(joined, 1), 2), pick(row(v[0], 2), 5)));
  });
}

TEST(Gradients, StackSumMean) {
  Rng rng(13);
  expect_grad({random_array({4}, rng), random_array({2, 3}, rng)}, [](Tape&, const std::vector<Var>& v) {
    Var s = stack({pick(v[0], 0), mean(v[1]), sum(v[0]), pick(v[1], 4)});
    return probe(s);
  });
}

TEST(Gradients, DropoutUsesItsMask) {
  Rng data(14);
  const Array x = random_array({20}, data);
  expect_grad({x}, [](Tape&, const std::vector<Var>& v) {
    Rng mask(5);
    return probe(dropout(v[0], 0.3, true, mask));
  });
}

TEST(Gradients, NllAndKl) {
  Rng rng(15);
  const std::vector<double> target = {0.1, 0.5, 0.0, 0.4};
  expect_grad({random_array({4}, rng, 2.0)}, [&](Tape&, const std::vector<Var>& v) {
    return add(nll(v[0], 2), kl_to_target(target, v[0], 3.0));
  });
}

TEST(Gradients, RandomThreeLayerComposition) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    expect_grad(
        {random_array({4, 5}, rng), random_array({5, 6}, rng), random_array({6}, rng), random_array({6, 3}, rng),
         random_array({3, 2}, rng)},
        [](Tape&, const std::vector<Var>& v) {
          Var h1 = tanh(add_bias(matmul(v[0], v[1]), v[2]));
          Var h2 = softmax_rows(matmul(h1, v[3]));
          Var h3 = log(add_bias(matmul(h2, exp(v[4])), v[0].tape->constant(Array::vector({1.0, 1.0}))));
          return probe(h3);
        },
        seed);
  }
}

TEST(Ops, ShapeErrors) {
  Tape t;
  Var a = t.variable(Array::matrix(2, 3));
  Var b = t.variable(Array::matrix(2, 3));
  EXPECT_THROW(matmul(a, b), ContractViolation);
  EXPECT_THROW(add(a, t.variable(Array::matrix(3, 2))), ContractViolation);
  EXPECT_THROW(nll(t.variable(Array::vector({1.0, 2.0})), 2), ContractViolation);
}

TEST(Ops, SoftmaxRowsNormalized) {
  Tape t;
  Rng rng(16);
  Var s = softmax_rows(t.constant(random_array({5, 9}, rng, 10.0)));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) total += s.value().at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, BackwardVisitsInReverseCreationOrder) {
  Tape t;
  std::vector<int> order;
  Var x = t.variable(Array::scalar(1.0));
  Var a = t.record(Array::scalar(1.0), {x}, [&](Tape& tt, const Array& g) {
    order.push_back(1);
    tt.accumulate(x.id, g);
  });
  Var b = t.record(Array::scalar(1.0), {a}, [&](Tape& tt, const Array& g) {
    order.push_back(2);
    tt.accumulate(a.id, g);
  });
  Var c = t.record(Array::scalar(1.0), {a, b}, [&](Tape& tt, const Array& g) {
    order.push_back(3);
    tt.accumulate(a.id, g);
    tt.accumulate(b.id, g);
  });
  t.backward(c);
  EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 2.0);
}

}  // namespace
}  // namespace twostage::numerics
