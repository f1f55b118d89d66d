#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

using namespace kpg;
using kpg::testing::gradcheck;
using kpg::testing::inputs_for;
using kpg::testing::op_cases;
using kpg::testing::run_op;

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, DoubleMatchesFiniteDifferences) {
  const auto& c = op_cases()[GetParam()];
  auto fn = [&](const auto& x) { return run_op(c.name, x); };
  const auto r = gradcheck<double>(fn, inputs_for(c, 100 + GetParam()));
  EXPECT_LT(r.max_error, 1e-5) << c.name << " input " << r.worst_input;
}

TEST_P(OpGradient, FloatMatchesFiniteDifferences) {
  const auto& c = op_cases()[GetParam()];
  auto fn = [&](const auto& x) { return run_op(c.name, x); };
  const auto r = gradcheck<float>(fn, inputs_for(c, 200 + GetParam()));
  EXPECT_LT(r.max_error, 1e-3) << c.name << " input " << r.worst_input;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, 21),
                         [](const auto& info) { return op_cases()[info.param].name; });

TEST(Autograd, GradientsAccumulateOverSharedUses) {
  Tensor<double> x({1}, std::vector<double>{3.0});
  x.set_requires_grad(true);
  auto y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Autograd, BackwardContracts) {
  Tensor<double> a({2}, 1.0);
  a.set_requires_grad(true);
  EXPECT_THROW(backward(a), ContractError);  // not scalar
  Tensor<double> c({1}, 1.0);
  EXPECT_THROW(backward(sum(c)), ContractError);  // no tape
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Tensor<double> a({2}, 1.0);
  a.set_requires_grad(true);
  {
    NoGradGuard guard;
    auto s = sum(a);
    EXPECT_FALSE(s.requires_grad());
  }
  EXPECT_TRUE(sum(a).requires_grad());
}

TEST(Autograd, ReluSubgradientIsZeroAtZero) {
  Tensor<double> x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  x.set_requires_grad(true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Autograd, ReluPropagatesNaN) {
  const auto y = relu(Tensor<float>({2}, std::vector<float>{std::nanf(""), -1.0f}));
  EXPECT_TRUE(std::isnan(y[0]));
  EXPECT_EQ(y[1], 0.0f);
}

TEST(Autograd, NormalizeRejectsZeroRowsButPassesNaN) {
  EXPECT_THROW(l2_normalize_rows(Tensor<float>({1, 2}, 0.0f)), DegenerateError);
  const auto y = l2_normalize_rows(Tensor<float>({1, 2}, std::vector<float>{std::nanf(""), 1.0f}));
  EXPECT_TRUE(std::isnan(y[1]));
}

TEST(Autograd, DeepChainDoesNotOverflowTheStack) {
  Tensor<double> x({1}, 1.0);
  x.set_requires_grad(true);
  Tensor<double> y = x;
  for (int i = 0; i < 200000; ++i) y = scale(y, 1.0);
  backward(sum(y));
  EXPECT_EQ(x.grad()[0], 1.0);
}
