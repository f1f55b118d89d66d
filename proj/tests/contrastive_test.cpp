#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kpg/model/contrastive.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace kpg;
using namespace kpg::testing;

TEST(Contrastive, TwoOrthogonalNodesGiveLn2MinusInverseTau) {
  const auto head = identity_head<double>();
  const auto x = basis_rows<double>(2);
  for (double tau : {0.06, 0.08, 0.1, 0.12}) {
    ContrastiveConfig cfg;
    cfg.tau = tau;
    std::mt19937_64 rng(1);
    const double loss = total_loss(x, x, head, cfg, rng).item();
    EXPECT_NEAR(loss, std::log(2.0) - 1.0 / tau, 1e-6) << tau;
  }
}

TEST(Contrastive, IdenticalNodesGiveLogTwiceNegatives) {
  const auto head = identity_head<double>();
  std::vector<double> v(12 * kDescriptorDim, 0.0);
  for (std::size_t r = 0; r < 12; ++r) v[r * kDescriptorDim] = 1.0;
  const Tensor<double> x({12, kDescriptorDim}, v);
  for (std::size_t neg : {1u, 5u, 10u}) {
    ContrastiveConfig cfg;
    cfg.negatives_per_anchor = neg;
    std::mt19937_64 rng(2);
    EXPECT_NEAR(total_loss(x, x, head, cfg, rng).item(), std::log(2.0 * neg), 1e-9) << neg;
  }
}

TEST(Contrastive, NegativesAreCappedByGraphSize) {
  // N = 3 allows only 2 negatives per set even when 10 are requested.
  const auto head = identity_head<double>();
  std::vector<double> v(3 * kDescriptorDim, 0.0);
  for (std::size_t r = 0; r < 3; ++r) v[r * kDescriptorDim] = 1.0;
  const Tensor<double> x({3, kDescriptorDim}, v);
  ContrastiveConfig cfg;
  std::mt19937_64 rng(3);
  EXPECT_NEAR(total_loss(x, x, head, cfg, rng).item(), std::log(4.0), 1e-9);
}

TEST(Contrastive, PositiveInDenominatorFlag) {
  const auto head = identity_head<double>();
  const auto x = basis_rows<double>(2);
  ContrastiveConfig cfg;
  cfg.tau = 0.1;
  cfg.include_positive_in_denominator = true;
  std::mt19937_64 rng(1);
  EXPECT_NEAR(total_loss(x, x, head, cfg, rng).item(), std::log(2.0 + std::exp(10.0)) - 10.0, 1e-9);
  EXPECT_GT(total_loss(x, x, head, cfg, rng).item(), 0.0);
}

TEST(Contrastive, NodeLossAgreesWithBatchedForm) {
  std::mt19937_64 rng(4);
  const auto head = init_projection_head<double>(5);
  const auto v = random_matrix<double>(5, kDescriptorDim, rng);
  const auto w = random_matrix<double>(5, kDescriptorDim, rng);
  ContrastiveConfig cfg;
  cfg.negatives_per_anchor = 3;
  std::mt19937_64 srng(6);
  const auto neg = sample_negatives(5, 3, srng);
  double expect = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    expect += node_loss(gather_rows(v, {i}), gather_rows(w, {i}), gather_rows(v, neg.forward_intra[i]),
                        gather_rows(w, neg.forward_inter[i]), head, cfg).item();
    expect += node_loss(gather_rows(w, {i}), gather_rows(v, {i}), gather_rows(w, neg.backward_intra[i]),
                        gather_rows(v, neg.backward_inter[i]), head, cfg).item();
  }
  EXPECT_NEAR(total_loss(v, w, head, cfg, neg).item(), expect / 10.0, 1e-10);
}

TEST(Contrastive, SimilarityIsCosineOfProjections) {
  const auto head = identity_head<double>();
  std::vector<double> a(kDescriptorDim, 0.0), b(kDescriptorDim, 0.0);
  a[0] = 3;
  b[0] = 1;
  b[1] = 1;
  EXPECT_NEAR(similarity(Tensor<double>({kDescriptorDim}, a), Tensor<double>({kDescriptorDim}, b), head).item(),
              1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto head = init_projection_head<double>(8);
  std::vector<GradInput> in{random_input({4, kDescriptorDim}, rng), random_input({4, kDescriptorDim}, rng)};
  auto fn = [&](const auto& x) {
    using T = typename std::decay_t<decltype(x[0])>::value_type;
    ContrastiveConfig cfg;
    cfg.negatives_per_anchor = 2;
    std::mt19937_64 r(9);
    ProjectionHead<T> h;
    if constexpr (std::is_same_v<T, double>) {
      h = head;
    } else {
      h = init_projection_head<T>(8);
    }
    return total_loss(x[0], x[1], h, cfg, r);
  };
  EXPECT_LT(gradcheck<double>(fn, in).max_error, 1e-5);
  EXPECT_LT(gradcheck<float>(fn, in).max_error, 1e-3);
}

TEST(NegativeSampling, DistinctNonAnchorIndices) {
  std::mt19937_64 rng(10);
  const auto s = sample_negatives(8, 5, rng);
  for (const auto* lists : {&s.forward_intra, &s.forward_inter, &s.backward_intra, &s.backward_inter}) {
    ASSERT_EQ(lists->size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& l = (*lists)[i];
      EXPECT_EQ(l.size(), 5u);
      EXPECT_EQ(std::set<std::size_t>(l.begin(), l.end()).size(), 5u);
      for (auto j : l) {
        EXPECT_NE(j, i);
        EXPECT_LT(j, 8u);
      }
    }
  }
  EXPECT_EQ(sample_negatives(3, 10, rng).forward_intra[0].size(), 2u);
  EXPECT_THROW(sample_negatives(1, 3, rng), ContractError);
}

TEST(NegativeSampling, DeterministicInTheSeed) {
  std::mt19937_64 a(11), b(11);
  EXPECT_EQ(sample_negatives(20, 10, a).backward_inter, sample_negatives(20, 10, b).backward_inter);
}

TEST(Contrastive, ContractErrors) {
  const auto head = identity_head<double>();
  ContrastiveConfig cfg;
  std::mt19937_64 rng(1);
  EXPECT_THROW(total_loss(basis_rows<double>(1), basis_rows<double>(1), head, cfg, rng), ContractError);
  EXPECT_THROW(total_loss(basis_rows<double>(2), basis_rows<double>(3), head, cfg, rng), ShapeError);
  cfg.tau = 0;
  EXPECT_THROW(total_loss(basis_rows<double>(2), basis_rows<double>(2), head, cfg, rng), ParameterError);
  cfg.tau = 0.1;
  cfg.negatives_per_anchor = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}
