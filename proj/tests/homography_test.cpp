#include <gtest/gtest.h>

#include <fstream>

#include "kpg/mosaic/homography.hpp"
#include "support/scenarios.hpp"
#include "support/tempdir.hpp"

using namespace kpg;
using namespace kpg::testing;

TEST(Dlt, ExactOnNoiselessPoints) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = random_homography(rng, 256, 256);
    std::uniform_real_distribution<double> u(0, 256);
    std::vector<PointPair> pairs;
    for (int k = 0; k < (trial % 2 ? 4 : 30); ++k) {
      const Point2 p{u(rng), u(rng)};
      pairs.push_back({p, truth.apply(p)});
    }
    EXPECT_LT(max_corner_error(dlt_homography(pairs), truth, 256, 256), 1e-6);
  }
}

TEST(Dlt, RecoversAffineMaps) {
  const auto t = AffineTransform::composed(1.1, 8.0, 5.0, -3.0, {100, 100});
  std::vector<PointPair> pairs;
  for (const Point2 p : {Point2{0, 0}, Point2{200, 10}, Point2{30, 180}, Point2{190, 170}, Point2{90, 60}}) {
    pairs.push_back({p, t.apply(p)});
  }
  const auto h = dlt_homography(pairs);
  EXPECT_NEAR(h.matrix()(2, 0), 0.0, 1e-12);
  EXPECT_NEAR(h.matrix()(2, 2), 1.0, 1e-12);
  EXPECT_LT(max_corner_error(h, Homography::from_affine(t), 256, 256), 1e-8);
}

TEST(Dlt, DegenerateInputs) {
  std::vector<PointPair> three{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  EXPECT_THROW(dlt_homography(three), ContractError);
  std::vector<PointPair> collinear{{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}, {{2, 2}, {2, 2}}, {{0, 5}, {0, 5}}};
  EXPECT_THROW(dlt_homography(collinear), DegenerateError);
}

TEST(Homography, InverseAndComposition) {
  std::mt19937_64 rng(2);
  const auto a = random_homography(rng, 100, 100), b = random_homography(rng, 100, 100);
  const Point2 p{12.5, 77.0};
  const auto q = a.inverse().apply(a.apply(p));
  EXPECT_NEAR(q.x, p.x, 1e-9);
  EXPECT_NEAR(q.y, p.y, 1e-9);
  const auto ab = (a * b).apply(p), seq = a.apply(b.apply(p));
  EXPECT_NEAR(ab.x, seq.x, 1e-9);
  EXPECT_NEAR(ab.y, seq.y, 1e-9);
  EXPECT_THROW(Homography(Eigen::Matrix3d::Zero()).inverse(), DegenerateError);
}

TEST(Ransac, RejectsOutliers) {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto trial = make_ransac_trial(seed);
    RansacOptions opt;
    opt.seed = seed;
    const auto h = ransac_homography(trial.pairs, opt);
    good += max_corner_error(h, trial.truth, 256, 256) < 2.0;
    std::size_t outliers_kept = 0;
    for (auto k : h.inliers) outliers_kept += !trial.is_inlier[k];
    EXPECT_LE(outliers_kept, 3u);
  }
  EXPECT_GE(good, 28);
}

TEST(Ransac, DeterministicInTheSeed) {
  const auto trial = make_ransac_trial(5);
  RansacOptions opt;
  opt.seed = 3;
  EXPECT_EQ(ransac_homography(trial.pairs, opt).matrix(), ransac_homography(trial.pairs, opt).matrix());
}

TEST(Ransac, FailsWithoutConsensus) {
  std::vector<PointPair> few{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  EXPECT_THROW(ransac_homography(few), ContractError);
  std::vector<PointPair> line;
  for (int k = 0; k < 10; ++k) line.push_back({{double(k), double(k)}, {double(k), double(k)}});
  EXPECT_THROW(ransac_homography(line), EstimationError);
}

TEST(HomographyCsv, RoundTripAndErrors) {
  TempDir dir;
  std::mt19937_64 rng(4);
  const std::vector<Homography> hs{random_homography(rng, 50, 50), Homography()};
  write_homographies_csv(dir.file("h.csv"), hs);
  const auto back = read_homographies_csv(dir.file("h.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0].matrix().isApprox(hs[0].matrix(), 1e-15));
  std::ofstream(dir.file("bad.csv")) << "a,b\n";
  EXPECT_THROW(read_homographies_csv(dir.file("bad.csv")), IoError);
  std::ofstream(dir.file("short.csv")) << "h00,h01,h02,h10,h11,h12,h20,h21,h22\n1,2,3\n";
  EXPECT_THROW(read_homographies_csv(dir.file("short.csv")), IoError);
  EXPECT_THROW(read_homographies_csv(dir.file("missing.csv")), IoError);
}
