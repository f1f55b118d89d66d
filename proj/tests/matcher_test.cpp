#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "kpg/matcher/matcher.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace kpg;
using namespace kpg::testing;

namespace {

std::vector<std::size_t> exhaustive_nn(const Tensor<float>& a, const Tensor<float>& b) {
  const std::size_t d = a.dim(1);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < b.dim(0); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += std::pow(double(a[i * d + k]) - b[j * d + k], 2);
      if (s < best_d) best_d = s, best = j;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST(Matcher, NearestNeighbourEqualsExhaustiveSearch) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_matrix<float>(1 + rng() % 30, 8, rng);
    const auto b = random_matrix<float>(1 + rng() % 30, 8, rng);
    const auto nn = match_nn(a, b);
    const auto want = exhaustive_nn(a, b);
    ASSERT_EQ(nn.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(nn.pairs[i].i, i);
      EXPECT_EQ(nn.pairs[i].j, want[i]);
    }
  }
}

TEST(Matcher, TiesGoToTheSmallerIndex) {
  const Tensor<float> a({1, 2}, std::vector<float>{0, 0});
  const Tensor<float> b({3, 2}, std::vector<float>{1, 0, 0, 1, -1, 0});
  EXPECT_EQ(match_nn(a, b).pairs[0].j, 0u);
}

TEST(Matcher, ThresholdFilteringIsStrictAndMonotone) {
  std::mt19937_64 rng(2);
  const auto a = random_matrix<float>(40, 16, rng), b = random_matrix<float>(35, 16, rng);
  const auto nn = match_nn(a, b);
  std::size_t prev = 0;
  for (double t = 0.0; t <= 5.0; t += 0.1) {
    const auto kept = match_nnt(a, b, t);
    EXPECT_GE(kept.size(), prev);
    prev = kept.size();
    for (const auto& m : kept.pairs) EXPECT_LT(m.distance, t);
    std::size_t want = 0;
    for (const auto& m : nn.pairs) want += m.distance < t;
    EXPECT_EQ(kept.size(), want);
  }
  EXPECT_TRUE(match_nnt(a, b, 0.0).empty());
  EXPECT_EQ(match_nnt(a, b, 1e9).size(), 40u);
  EXPECT_THROW(match_nnt(a, b, -1.0), ParameterError);
}

TEST(Matcher, PrecisionRecallAndScore) {
  MatchSet m;
  m.pairs = {{0, 0, 0.1, {}}, {1, 2, 0.2, {}}, {2, 1, 0.3, {}}};
  const std::vector<Correspondence> gt{{0, 0, 1.0}, {1, 1, 1.0}, {2, 1, 1.0}, {3, 3, 1.0}};
  const auto pr = precision_recall(m, gt);
  EXPECT_EQ(pr.correct, 2u);
  EXPECT_DOUBLE_EQ(*pr.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*pr.recall, 0.5);
  EXPECT_DOUBLE_EQ(*pr.one_minus_precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(matching_score(m, 10, 4), 0.5);
  EXPECT_THROW(matching_score(m, 0, 4), ContractError);

  MatchSet none;
  const auto empty = precision_recall(none, {});
  EXPECT_FALSE(empty.precision);
  EXPECT_FALSE(empty.recall);
}

TEST(Matcher, CurveSweepAndCsv) {
  std::mt19937_64 rng(3);
  const auto a = random_matrix<float>(10, 4, rng), b = random_matrix<float>(10, 4, rng);
  std::vector<Correspondence> gt;
  for (std::size_t i = 0; i < 10; ++i) gt.push_back({i, i, 0.0});
  const auto rows = curve_sweep(a, b, gt, {0.0, 0.5, 1.0, 100.0});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].one_minus_precision);
  EXPECT_EQ(rows[3].retrieved, 10u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(*rows[i].recall, *rows[i - 1].recall);
  EXPECT_THROW(curve_sweep(a, b, gt, {1.0, 0.5}), ParameterError);

  TempDir dir;
  write_curve_csv(dir.file("c.csv"), rows);
  std::ifstream in(dir.file("c.csv"));
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "threshold,recall,one_minus_precision");
  EXPECT_EQ(first, "0,0,nan");

  MatchSet m = match_nn(a, b);
  mark_correctness(m, gt);
  std::vector<Point2> pts(10);
  write_matches_csv(dir.file("m.csv"), m, pts, pts);
  std::ifstream min(dir.file("m.csv"));
  std::getline(min, header);
  EXPECT_EQ(header, "i,x_a,y_a,j,x_b,y_b,distance,correct");
}

TEST(Matcher, ShapeErrors) {
  EXPECT_THROW(match_nn(Tensor<float>({2, 3}, 0.f), Tensor<float>({2, 4}, 0.f)), ShapeError);
  EXPECT_THROW(match_nn(Tensor<float>({6}, 0.f), Tensor<float>({2, 3}, 0.f)), ShapeError);
}
