#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "kpg/model/gnn.hpp"
#include "support/oracles.hpp"

using namespace kpg;
using namespace kpg::testing;

namespace {

KeypointGraph<double> random_graph(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  KeypointGraph<double> g;
  g.image_size = {256, 256};
  g.positions = random_points(n, rng, 256, 256);
  g.visual = random_matrix<double>(n, kDescriptorDim, rng);
  return g;
}

}  // namespace

TEST(Gnn, NormalizedPositionsSpanMinusOneToOne) {
  const auto t = normalized_positions<double>({{0, 0}, {255, 127}, {127.5, 63.5}}, {256, 128});
  EXPECT_DOUBLE_EQ(t[0], -1.0);
  EXPECT_DOUBLE_EQ(t[1], -1.0);
  EXPECT_DOUBLE_EQ(t[2], 1.0);
  EXPECT_DOUBLE_EQ(t[3], 1.0);
  EXPECT_NEAR(t[4], 0.0, 1e-12);
  EXPECT_NEAR(t[5], 0.0, 1e-12);
  EXPECT_THROW(normalized_positions<double>({}, {1, 5}), ParameterError);
}

TEST(Gnn, AttentionMatchesBruteForce) {
  const auto params = init_gnn<double>(4);
  for (std::size_t n : {1u, 3u, 17u}) {
    auto g = random_graph(n, 10 + n);
    gnn_forward(g, params);
    const auto want = brute_force_messages(g.encoded, params);
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(g.message[i], want[i], 1e-5) << n;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0;
      for (std::size_t l = 0; l < n; ++l) row += g.attention[i * n + l];
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

TEST(Gnn, UnscaledAttentionMatchesBruteForce) {
  auto params = init_gnn<double>(5);
  params.scaled_attention = false;
  auto g = random_graph(6, 3);
  gnn_forward(g, params);
  const auto want = brute_force_messages(g.encoded, params);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(g.message[i], want[i], 1e-5);
}

TEST(Gnn, PermutationEquivariant) {
  const auto params = init_gnn<double>(6);
  auto g = random_graph(12, 7);
  gnn_forward(g, params);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(8);
  std::shuffle(perm.begin(), perm.end(), rng);
  KeypointGraph<double> h;
  h.image_size = g.image_size;
  for (auto i : perm) h.positions.push_back(g.positions[i]);
  h.visual = gather_rows(g.visual, perm);
  gnn_forward(h, params);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < kDescriptorDim; ++c)
      ASSERT_NEAR(h.global[r * kDescriptorDim + c], g.global[perm[r] * kDescriptorDim + c], 1e-6);
}

TEST(Gnn, ResidualStructure) {
  const auto params = init_gnn<double>(9);
  auto g = random_graph(4, 2);
  gnn_forward(g, params);
  EXPECT_EQ(g.encoded.shape(), (Shape{4, 128}));
  EXPECT_EQ(g.message.shape(), (Shape{4, 128}));
  EXPECT_EQ(g.attention.shape(), (Shape{4, 4}));
  EXPECT_EQ(g.global.shape(), (Shape{4, 128}));
  // 0f - f depends on position only.
  auto h = random_graph(4, 2);
  h.visual = scale(h.visual, 0.0);
  positional_encode(h, params);
  for (std::size_t i = 0; i < g.encoded.numel(); ++i)
    ASSERT_NEAR(g.encoded[i] - g.visual[i], h.encoded[i], 1e-12);
}

TEST(Gnn, ContractErrors) {
  const auto params = init_gnn<double>(1);
  KeypointGraph<double> g;
  g.image_size = {64, 64};
  g.positions = {{1, 1}};
  EXPECT_THROW(gnn_forward(g, params), ContractError);
  g.visual = Tensor<double>({1, 64}, 0.0);
  EXPECT_THROW(gnn_forward(g, params), ShapeError);
  KeypointGraph<double> empty;
  EXPECT_THROW(attention_message(empty, params), ContractError);
}
