//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "canondiff/autodiff.h"
#include "canondiff/errors.h"

namespace canondiff {
namespace {
using namespace ad;
using testing_util::check_gradients;
using testing_util::random_tensor;

IndexList make_index(std::vector<std::uint32_t> v) {
  return std::make_shared<const std::vector<std::uint32_t>>(std::move(v));
}

// Every primitive, composed into scalar losses, against central differences.
struct OpCase {
  const char *name;
  std::function<Var(Tape &, Var, Var)> f;
  std::size_t ar, ac, br, bc;
};

class OpGradient: public ::testing::TestWithParam<OpCase> { };

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase &c = GetParam();
  Rng rng = make_stream(11, c.name);
  Tensor a = random_tensor(c.ar, c.ac, rng);
  Tensor b = random_tensor(c.br, c.bc, rng);
  Tensor* ps[] = { &a, &b };
  auto build = [&](Tape &t) {
    Var out = c.f(t, t.param(a), t.param(b));
    // Random projection so every output entry contributes.
    Tensor proj(out.rows(), out.cols());
    Rng prng = make_stream(5, "proj");
    std::normal_distribution<double> n;
    for (double &v: proj.values())
      v = n(prng);
    return sum(out * t.constant(proj));
  };
  const auto r = check_gradients(ps, build, rng, 64);
  EXPECT_LT(r.rel_err, 1e-7) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Primitives, OpGradient,
    ::testing::Values(
        OpCase{ "add", [](Tape &, Var a, Var b) { return a + b; }, 3, 4, 3,
                4 },
        OpCase{ "add_bcast_row",
                [](Tape &, Var a, Var b) { return a + b; }, 3, 4, 1, 4 },
        OpCase{ "sub_bcast_col",
                [](Tape &, Var a, Var b) { return a - b; }, 3, 4, 3, 1 },
        OpCase{ "mul_bcast_scalar",
                [](Tape &, Var a, Var b) { return a * b; }, 3, 4, 1, 1 },
        OpCase{ "div",
                [](Tape &, Var a, Var b) {
                  return a / add_scalar(square(b), 1.0);
                },
                3, 4, 3, 4 },
        OpCase{ "matmul", [](Tape &, Var a, Var b) { return matmul(a, b); },
                5, 3, 3, 7 },
        OpCase{ "matmul_wide",
                [](Tape &, Var a, Var b) { return matmul(a, b); }, 9, 21, 21,
                19 },
        OpCase{ "reductions",
                [](Tape &, Var a, Var b) {
                  return concat_cols({ sum_axis1(a), mean_axis1(b) })
                         + broadcast_to(mean_axis0(slice_cols(a, 0, 2))
                                            * mean(b),
                                        3, 2)
                         + broadcast_to(sum_axis0(slice_cols(b, 1, 3)), 3, 2);
                },
                3, 4, 3, 4 },
        OpCase{ "sum", [](Tape &, Var a, Var b) { return sum(a) * sum(b); },
                2, 3, 3, 2 },
        OpCase{ "slice_concat",
                [](Tape &, Var a, Var b) {
                  return concat_cols({ slice_cols(a, 1, 3), b, neg(a) });
                },
                4, 5, 4, 2 },
        OpCase{ "nonlinear",
                [](Tape &, Var a, Var b) {
                  return silu(a) + tanh(b) + sqrt(add_scalar(square(a), 0.5))
                         + scale(relu(add_scalar(b, 0.1)), 2.0);
                },
                4, 3, 4, 3 },
        OpCase{ "row_norm",
                [](Tape &, Var a, Var b) {
                  return row_norm(a, 1e-3) * sum_axis1(b);
                },
                5, 3, 5, 3 },
        OpCase{ "softmax",
                [](Tape &, Var a, Var b) { return softmax_rows(a) * b; }, 4,
                6, 4, 6 },
        OpCase{ "gather_scatter",
                [](Tape &, Var a, Var b) {
                  IndexList g = make_index({ 0, 2, 2, 1, 0, 3 });
                  IndexList s = make_index({ 1, 1, 0, 2, 2, 0 });
                  return scatter_add_rows(gather_rows(a, g) * b, s, 3);
                },
                4, 3, 6, 3 }),
    [](const auto &info) { return std::string(info.param.name); });

TEST(Tape, RejectsNonScalarLoss) {
  Tensor a(2, 2, 1.0);
  Tape t;
  Var x = t.param(a);
  EXPECT_THROW(t.backward(x), ContractViolation);
}

TEST(Tape, BackwardOnlyOnce) {
  Tensor a(2, 2, 1.0);
  Tape t;
  Var l = sum(t.param(a));
  t.backward(l);
  EXPECT_THROW(t.backward(l), ContractViolation);
}

TEST(Tape, NoGradTapeRefusesBackward) {
  Tensor a(1, 1, 1.0);
  Tape t(false);
  Var l = sum(t.param(a));
  EXPECT_THROW(t.backward(l), ContractViolation);
}

TEST(Tape, NonFiniteGradientNamesNodeAndOp) {
  Tensor a(1, 2, 0.0);
  a(0, 1) = 1.0;
  Tape t;
  Var l = sum(sqrt(t.param(a)));
  try {
    t.backward(l);
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure &e) {
    EXPECT_FALSE(e.op().empty());
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
  }
}

TEST(Tape, RepeatedParamAccumulates) {
  Tensor a(1, 1, 3.0);
  Tape t;
  Var l = sum(t.param(a) * t.param(a));
  const GradMap g = t.backward(l);
  EXPECT_DOUBLE_EQ(g.get(a).item(), 6.0);
}

TEST(Tape, FrozenAndConstantGetNoGradient) {
  Tensor a(1, 1, 2.0), b(1, 1, 5.0);
  Tape t;
  Var l = sum(t.param(a) * t.frozen(b) + t.constant(Tensor::scalar(1.0)));
  const GradMap g = t.backward(l);
  EXPECT_DOUBLE_EQ(g.get(a).item(), 5.0);
  EXPECT_FALSE(g.contains(b));
  EXPECT_EQ(g.get(b).item(), 0.0);
}

TEST(Tape, MatmulValues) {
  Tape t(false);
  Var a = t.constant(Tensor(2, 3, { 1, 2, 3, 4, 5, 6 }));
  Var b = t.constant(Tensor(3, 2, { 7, 8, 9, 10, 11, 12 }));
  EXPECT_EQ(matmul(a, b).value(), Tensor(2, 2, { 58, 64, 139, 154 }));
}

TEST(Tape, BroadcastShapeMismatchThrows) {
  Tape t(false);
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(3, 2));
  EXPECT_THROW(a + b, ContractViolation);
  EXPECT_THROW(matmul(a, a), ContractViolation);
}

TEST(Tape, RowNormSmoothFloor) {
  Tape t(false);
  Var a = t.constant(Tensor(2, 2, { 3, 4, 0, 0 }));
  const Tensor n = row_norm(a, 1e-8).value();
  EXPECT_NEAR(n(0, 0), 5.0, 1e-15);
  EXPECT_DOUBLE_EQ(n(1, 0), 1e-8);
}

TEST(Tape, ScatterAddSumsSegments) {
  Tape t(false);
  Var a = t.constant(Tensor(4, 1, { 1, 2, 3, 4 }));
  const Tensor s = scatter_add_rows(a, make_index({ 1, 0, 1, 1 }), 2).value();
  EXPECT_EQ(s, Tensor(2, 1, { 2, 8 }));
}

TEST(Tape, GatherOutOfRangeThrows) {
  Tape t(false);
  Var a = t.constant(Tensor(2, 1));
  EXPECT_THROW(gather_rows(a, make_index({ 2 })), ContractViolation);
}

}  // namespace
}  // namespace canondiff
