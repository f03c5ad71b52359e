/* Copyright 2026 The bnmt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "tensor.hpp"

namespace bnmt {
namespace {

// Central differences written out here, independent of grad_check.
std::vector<double> numeric_grad(const std::function<double(const Tensor&)>& f, Tensor x,
                                 double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = f(x);
    x.data[i] = keep - h;
    const double down = f(x);
    x.data[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor({r, c}, rng);
}

TEST(Matmul, IdentityLeavesMatrix) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var b = t.constant(Tensor::matrix(2, 2, {2, 3, 4, 5}));
  EXPECT_EQ(matmul(a, b).value().data, (std::vector<double>{2, 3, 4, 5}));
}

TEST(Matmul, RowTimesColumn) {
  Tape t;
  Var a = t.constant(Tensor::matrix(1, 2, {1, 2}));
  Var b = t.constant(Tensor::matrix(2, 1, {3, 4}));
  const Tensor c = matmul(a, b).value();
  EXPECT_EQ(c.shape, (Shape{1, 1}));
  EXPECT_EQ(c.data[0], 11.0);
}

TEST(Matmul, GradientOfSumMatchesDifferences) {
  const Tensor a0 = random_matrix(3, 4, 1), b0 = random_matrix(4, 2, 2);
  Tape t;
  Var a = t.variable(a0), b = t.variable(b0);
  t.backward(sum(matmul(a, b)));
  const auto f = [&](const Tensor& a1) {
    Tape u(false);
    return sum(matmul(u.constant(a1), u.constant(b0))).value().data[0];
  };
  const auto num = numeric_grad(f, a0);
  const Tensor ga = t.grad(a);
  for (std::size_t i = 0; i < num.size(); ++i) EXPECT_LT(rel_err(ga.data[i], num[i]), 1e-6) << i;
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Elementwise, ActivationsAtZero) {
  Tape t;
  Var z = t.constant(Tensor::matrix(1, 1, {0.0}));
  EXPECT_EQ(tanh(z).value().data[0], 0.0);
  EXPECT_EQ(sigmoid(z).value().data[0], 0.5);
}

TEST(Elementwise, TanhAdjointAtPointSeven) {
  const Tensor x0 = Tensor::matrix(1, 1, {0.7});
  Tape t;
  Var x = t.variable(x0);
  t.backward(sum(tanh(x)));
  const auto num = numeric_grad([](const Tensor& x1) { return std::tanh(x1.data[0]); }, x0);
  EXPECT_LT(rel_err(t.grad(x).data[0], num[0]), 1e-6);
  EXPECT_NEAR(t.grad(x).data[0], 1 - std::tanh(0.7) * std::tanh(0.7), 1e-15);
}

TEST(Elementwise, ScalarBroadcastAndMismatch) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var s = t.constant(Tensor::scalar(10));
  EXPECT_EQ(add(a, s).value().data, (std::vector<double>{11, 12, 13, 14}));
  Var bad = t.constant(Tensor({3, 1}));
  EXPECT_THROW(mul(a, bad), Error);
  const Var parts[] = {a, a};
  EXPECT_EQ(elementwise(ElemOp::kSub, parts).value().data, (std::vector<double>(4, 0.0)));
}

TEST(MaskedSoftmax, UniformWhenLogitsEqual) {
  Tape t;
  const Tensor out = masked_softmax(t.constant(Tensor({1, 3})), Tensor({1, 3}, 1.0)).value();
  for (double v : out.data) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(MaskedSoftmax, MaskedEntryIsExactlyZero) {
  Tape t;
  const Tensor out = masked_softmax(t.constant(Tensor::matrix(1, 3, {5, 5, -100})),
                                    Tensor::matrix(1, 3, {1, 1, 0}))
                         .value();
  EXPECT_EQ(out.data[0], 0.5);
  EXPECT_EQ(out.data[1], 0.5);
  EXPECT_EQ(out.data[2], 0.0);
}

TEST(MaskedSoftmax, SumsToOneOnRandomRows) {
  Rng rng(5);
  Tensor logits = random_tensor({4, 9}, rng, -30, 30);
  Tensor mask({4, 9});
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data[i] = rng.below(3) ? 1.0 : 0.0;
  for (std::size_t r = 0; r < 4; ++r) mask.at(r, r) = 1.0;
  Tape t;
  const Tensor out = masked_softmax(t.constant(logits), mask).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      if (mask.at(r, j) == 0.0) EXPECT_EQ(out.at(r, j), 0.0);
      EXPECT_GE(out.at(r, j), 0.0);
      s += out.at(r, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(MaskedSoftmax, GradientLengthSeven) {
  const Tensor x0 = random_matrix(1, 7, 9);
  const Tensor mask = Tensor::matrix(1, 7, {1, 1, 0, 1, 1, 1, 0});
  const Tensor w = random_matrix(1, 7, 10);
  auto f = [&](Tape& t, Var x) { return sum(mul(masked_softmax(x, mask), t.constant(w))); };
  Tape t;
  Var x = t.variable(x0);
  t.backward(f(t, x));
  const auto num = numeric_grad(
      [&](const Tensor& x1) {
        Tape u(false);
        return f(u, u.constant(x1)).value().data[0];
      },
      x0);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_LT(rel_err(t.grad(x).data[i], num[i]), 1e-6) << i;
}

TEST(MaskedSoftmax, AllMaskedRowIsDegenerate) {
  Tape t;
  try {
    masked_softmax(t.constant(Tensor({2, 3})), Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateMask);
  }
}

TEST(Ops, SquaredL2OfThreeFour) {
  Tape t;
  EXPECT_EQ(squared_l2(t.constant(Tensor::matrix(1, 2, {3, 4}))).value().data[0], 25.0);
}

TEST(Ops, DropoutZeroRateAndEvalAreIdentity) {
  Rng rng(1);
  Tape t;
  Var x = t.constant(random_matrix(3, 5, 3));
  EXPECT_EQ(dropout(x, 0.0, rng, true).value(), x.value());
  EXPECT_EQ(dropout(x, 0.5, rng, false).value(), x.value());
}

TEST(Ops, DropoutScalesSurvivors) {
  Rng rng(2);
  Tape t;
  Var x = t.constant(Tensor({50, 40}, 1.0));
  const Tensor y = dropout(x, 0.25, rng, true).value();
  std::size_t zeros = 0;
  for (double v : y.data) {
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 2000.0, 0.25, 0.04);
}

TEST(Ops, DropoutRateOutOfRange) {
  Rng rng(2);
  Tape t;
  Var x = t.constant(Tensor({1, 2}, 1.0));
  for (double bad : {1.0, -0.1}) {
    try {
      dropout(x, bad, rng, true);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    }
  }
}

TEST(Ops, GatherRowsOrderAndScatter) {
  const Tensor table0 = random_matrix(5, 2, 4);
  const std::vector<int> ids{4, 0};
  Tape t;
  Var table = t.variable(table0);
  Var g = gather_rows(table, ids);
  EXPECT_EQ(g.value().at(0, 0), table0.at(4, 0));
  EXPECT_EQ(g.value().at(1, 1), table0.at(0, 1));
  const Tensor w = random_matrix(2, 2, 6);
  t.backward(sum(mul(g, t.constant(w))));
  const auto num = numeric_grad(
      [&](const Tensor& t1) {
        Tape u(false);
        return sum(mul(gather_rows(u.constant(t1), ids), u.constant(w))).value().data[0];
      },
      table0);
  const Tensor an = t.grad(table);
  for (std::size_t i = 0; i < num.size(); ++i) EXPECT_LT(rel_err(an.data[i], num[i]), 1e-6) << i;
  EXPECT_EQ(an.at(2, 0), 0.0);
}

TEST(Ops, GatherRowsOutOfRange) {
  Tape t;
  Var table = t.constant(Tensor({5, 2}));
  const std::vector<int> ids{5};
  try {
    gather_rows(table, ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLookup);
  }
}

TEST(Ops, ConcatBothAxes) {
  Tape t;
  Var a = t.constant(Tensor::matrix(1, 2, {1, 2}));
  Var b = t.constant(Tensor::matrix(1, 2, {3, 4}));
  const Var parts[] = {a, b};
  EXPECT_EQ(concat(parts, 0).value().shape, (Shape{2, 2}));
  EXPECT_EQ(concat(parts, 1).value().data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(GradCheck, QuadraticIsExact) {
  const GradCheckReport r = grad_check([](Tape&, Var x) { return squared_l2(x); },
                                       Tensor::matrix(1, 2, {1, 2}));
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  const GradCheckReport r = grad_check(
      [](Tape& t, Var) { return t.constant(Tensor::scalar(3.0)); }, Tensor::matrix(1, 3, {1, 2, 3}));
  EXPECT_TRUE(r.passed);
  for (double e : r.groups[0].rel_error) EXPECT_EQ(e, 0.0);
}

TEST(GradCheck, NonFiniteNamesCoordinate) {
  try {
    // Finite at the point, infinite once coordinate 1 is nudged upwards.
    grad_check([](Tape&, Var x) {
                 return x.value().data[1] > 2.0 ? scale(sum(x), INFINITY) : sum(x);
               },
               Tensor::matrix(1, 2, {1, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("[1]"), std::string::npos) << e.what();
  }
}

TEST(GradCheck, EveryPrimitiveOpPasses) {
  std::size_t n = 0;
  for (const OpCheck& c : primitive_op_checks(3)) {
    const GradCheckReport r = grad_check(c.f, c.points, c.names);
    EXPECT_TRUE(r.passed) << op_name(c.op) << " " << r.max_rel_error;
    ++n;
  }
  EXPECT_EQ(n, 21u);
}

TEST(GradCheck, FlippedAdjointIsCaught) {
  for (const OpCheck& c : primitive_op_checks(3)) {
    set_adjoint_fault(c.op);
    const GradCheckReport r = grad_check(c.f, c.points, c.names);
    set_adjoint_fault(std::nullopt);
    EXPECT_FALSE(r.passed) << op_name(c.op);
  }
}

TEST(Tape, BackwardIsBitwiseReproducible) {
  auto run = [] {
    Tape t;
    Var a = t.variable(random_matrix(4, 6, 1));
    Var b = t.variable(random_matrix(6, 3, 2));
    Var y = tanh(matmul(a, b));
    t.backward(sum(mul(y, y)));
    return std::make_pair(t.grad(a), t.grad(b));
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  Tape t;
  Var x = t.variable(Tensor::matrix(1, 1, {3.0}));
  t.backward(sum(add(x, x)));
  EXPECT_EQ(t.grad(x).data[0], 2.0);
}

TEST(Tape, OpNamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(OpKind::kSoftmaxXent); ++k) {
    const auto kind = static_cast<OpKind>(k);
    EXPECT_EQ(op_from_name(op_name(kind)), kind);
  }
  EXPECT_FALSE(op_from_name("nope").has_value());
}

}  // namespace
}  // namespace bnmt
