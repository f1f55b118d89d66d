#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kpg/core/ops.hpp"

using namespace kpg;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Direct six-loop convolution with zero padding.
std::vector<double> naive_conv(const Tensor<double>& in, const Tensor<double>& k, const Tensor<double>& bias,
                               std::size_t stride, std::size_t pad) {
  const std::size_t b = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t o = k.dim(0), ks = k.dim(2);
  const std::size_t oh = (h + 2 * pad - ks) / stride + 1, ow = (w + 2 * pad - ks) / stride + 1;
  std::vector<double> out(b * o * oh * ow, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t f = 0; f < o; ++f)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias.defined() ? bias[f] : 0.0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t ky = 0; ky < ks; ++ky)
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += in[((n * c + ch) * h + iy) * w + ix] * k[((f * c + ch) * ks + ky) * ks + kx];
              }
          out[((n * o + f) * oh + y) * ow + x] = acc;
        }
  return out;
}

}  // namespace

TEST(Tensor, ShapeAndDataContracts) {
  EXPECT_THROW(Tensor<float>(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  Tensor<float> t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(t.dim(2), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(Tensor<float>().shape(), ContractError);
}

TEST(Tensor, CopiesShareStorageClonesDoNot) {
  Tensor<float> a({2}, std::vector<float>{1, 2});
  Tensor<float> b = a;
  b.mutable_data()[0] = 7;
  EXPECT_EQ(a[0], 7);
  Tensor<float> c = a.clone();
  c.mutable_data()[0] = 3;
  EXPECT_EQ(a[0], 7);
}

TEST(Tensor, NonFiniteIsDetectable) {
  Tensor<float> t({2}, std::vector<float>{1.0f, std::nanf("")});
  EXPECT_FALSE(t.all_finite());
}

TEST(Ops, MatmulMatchesNaiveProduct) {
  std::mt19937_64 rng(3);
  auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a[i * 5 + k] * b[k * 3 + j];
      EXPECT_NEAR(c[i * 3 + j], acc, 1e-12);
    }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Ops, ElementwiseAndReductions) {
  Tensor<double> a({2, 2}, std::vector<double>{1, -2, 3, -4});
  Tensor<double> b({2, 2}, std::vector<double>{0.5, 0.5, 2, 2});
  EXPECT_EQ(add(a, b)[3], -2);
  EXPECT_EQ(sub(a, b)[0], 0.5);
  EXPECT_EQ(mul(a, b)[2], 6);
  EXPECT_EQ(scale(a, 2.0)[1], -4);
  EXPECT_EQ(relu(a)[1], 0);
  EXPECT_EQ(relu(a)[2], 3);
  EXPECT_EQ(sum(a).item(), -2);
  EXPECT_EQ(mean(a).item(), -0.5);
  auto t = transpose(a);
  EXPECT_EQ(t[1], 3);
  auto r = add_rowwise(a, Tensor<double>({2}, std::vector<double>{10, 20}));
  EXPECT_EQ(r[3], 16);
  EXPECT_THROW(add(a, Tensor<double>({4}, 0.0)), ShapeError);
}

TEST(Ops, SoftmaxIsStableAndNormalized) {
  Tensor<double> a({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
  auto s = softmax_rows(a);
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(s[r * 3 + c]));
      total += s[r * 3 + c];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  // Same logits up to a shift give the same distribution.
  EXPECT_NEAR(s[0], std::exp(-2.0) / (std::exp(-2.0) + std::exp(-1.0) + 1.0), 1e-12);
  auto lse = logsumexp_rows(a);
  EXPECT_NEAR(lse[0], 1002 + std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0), 1e-9);
}

TEST(Ops, L2NormalizeRows) {
  Tensor<double> a({2, 2}, std::vector<double>{3, 4, 0, -2});
  auto n = l2_normalize_rows(a);
  EXPECT_NEAR(n[0], 0.6, 1e-12);
  EXPECT_NEAR(n[1], 0.8, 1e-12);
  EXPECT_NEAR(n[3], -1.0, 1e-12);
  EXPECT_THROW(l2_normalize_rows(Tensor<double>({1, 2}, 0.0)), DegenerateError);
}

TEST(Ops, ReshapeConcatTakeGather) {
  Tensor<double> a({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
  EXPECT_THROW(reshape(a, {4}), ShapeError);
  auto cols = concat_cols(a, a);
  EXPECT_EQ(cols.shape(), (Shape{2, 6}));
  EXPECT_EQ(cols[4], 1);
  auto rows = concat_rows(a, a);
  EXPECT_EQ(rows.shape(), (Shape{4, 3}));
  EXPECT_EQ(rows[9], 3);
  auto t = take(a, {5, 0}, {2});
  EXPECT_EQ(t[0], 5);
  auto g = gather_rows(a, {1, 1, 0});
  EXPECT_EQ(g.shape(), (Shape{3, 3}));
  EXPECT_EQ(g[3], 3);
  EXPECT_EQ(g[6], 0);
}

TEST(Conv2d, MatchesDirectLoopsAcrossStridesAndPadding) {
  std::mt19937_64 rng(11);
  for (auto [stride, pad, ks] : {std::tuple{1u, 1u, 3u}, {2u, 1u, 3u}, {1u, 0u, 2u}, {2u, 0u, 3u}}) {
    auto in = random_tensor({2, 3, 7, 6}, rng);
    auto k = random_tensor({4, 3, ks, ks}, rng);
    auto bias = random_tensor({4}, rng);
    auto out = conv2d(in, k, bias, stride, pad);
    const auto ref = naive_conv(in, k, bias, stride, pad);
    ASSERT_EQ(out.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, GeometryErrors) {
  Tensor<double> in({1, 1, 4, 4}, 1.0);
  EXPECT_THROW(conv2d(in, Tensor<double>({1, 1, 7, 7}, 1.0), Tensor<double>(), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(in, Tensor<double>({1, 2, 3, 3}, 1.0), Tensor<double>(), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(in, Tensor<double>({1, 1, 3, 3}, 1.0), Tensor<double>(), 0, 1), ParameterError);
}

TEST(Conv2d, SingleSampleForm) {
  Tensor<double> in({1, 3, 3}, 1.0);
  auto out = conv2d_single(in, Tensor<double>({2, 1, 3, 3}, 1.0), 1, 1);
  EXPECT_EQ(out.shape(), (Shape{2, 3, 3}));
  EXPECT_EQ(out[4], 9);  // center sees the full window
  EXPECT_EQ(out[0], 4);  // corner sees 2 x 2
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({4, 2, 3, 3}, rng);
  Tensor<double> gamma({2}, 1.0), beta({2}, 0.0);
  BatchNormState<double> st(2);
  auto y = batch_norm(x, gamma, beta, st, Mode::kTrain);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) m += y[(b * 2 + c) * 9 + i];
    m /= 36;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) v += std::pow(y[(b * 2 + c) * 9 + i] - m, 2);
    v /= 36;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-3);  // epsilon keeps it just below one
  }
}

TEST(BatchNorm, RunningStatisticsFollowGeometricSeries) {
  // Every batch has channel mean mu and biased variance s2, so after n
  // updates running_mean = mu (1 - 0.9^n), running_var = 0.9^n + s2 (1 - 0.9^n).
  Tensor<double> x({2, 1, 1, 2}, std::vector<double>{1, 3, 5, 7});  // mean 4, var 5
  Tensor<double> gamma({1}, 1.0), beta({1}, 0.0);
  BatchNormState<double> st(1);
  for (int n = 1; n <= 10; ++n) {
    batch_norm(x, gamma, beta, st, Mode::kTrain);
    const double decay = std::pow(0.9, n);
    EXPECT_NEAR(st.running_mean[0], 4.0 * (1 - decay), 1e-12);
    EXPECT_NEAR(st.running_var[0], decay + 5.0 * (1 - decay), 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStatsAndLeavesThemAlone) {
  Tensor<double> x({1, 1, 1, 2}, std::vector<double>{2, 4});
  Tensor<double> gamma({1}, 2.0), beta({1}, 1.0);
  BatchNormState<double> st(1);
  st.running_mean.mutable_data()[0] = 1.0;
  st.running_var.mutable_data()[0] = 4.0;
  auto y = batch_norm_eval(x, gamma, beta, st);
  EXPECT_NEAR(y[0], 2.0 * (2 - 1) / std::sqrt(4 + 1e-5) + 1, 1e-12);
  EXPECT_NEAR(y[1], 2.0 * (4 - 1) / std::sqrt(4 + 1e-5) + 1, 1e-12);
  EXPECT_EQ(st.running_mean[0], 1.0);
  batch_norm(x, gamma, beta, st, Mode::kEval);
  EXPECT_EQ(st.running_var[0], 4.0);
}

TEST(BatchNorm, TrainModeNeedsMoreThanOneValuePerChannel) {
  Tensor<double> x({1, 1, 1, 1}, 1.0);
  Tensor<double> gamma({1}, 1.0), beta({1}, 0.0);
  BatchNormState<double> st(1);
  EXPECT_THROW(batch_norm(x, gamma, beta, st, Mode::kTrain), DegenerateError);
}
