#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "kpg/core/ops.hpp"
#include "kpg/model/cnn.hpp"
#include "kpg/model/layers.hpp"

namespace kpg {

// Two-layer MLP (128 -> 128 -> 128, hidden ReLU) used only inside the loss.
template <typename T>
struct ProjectionHead {
  Linear<T> fc1;
  Linear<T> fc2;

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(relu(fc1(x))); }

  std::vector<NamedTensor<T>> named_tensors() const {
    std::vector<NamedTensor<T>> out;
    fc1.append_to(out, "head.fc1");
    fc2.append_to(out, "head.fc2");
    return out;
  }
};

template <typename T>
ProjectionHead<T> init_projection_head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {Linear<T>::init(kDescriptorDim, kDescriptorDim, 2.0, rng),
          Linear<T>::init(kDescriptorDim, kDescriptorDim, 1.0, rng)};
}

struct ContrastiveConfig {
  double tau = 0.08;
  std::size_t negatives_per_anchor = 10;
  // Standard NT-Xent adds the positive pair to the denominator; off keeps the
  // denominator to negatives only.
  bool include_positive_in_denominator = false;

  void validate() const {
    if (!(tau > 0.0)) throw ParameterError("tau must be positive");
    if (negatives_per_anchor < 1) throw ParameterError("negatives_per_anchor must be at least 1");
  }
};

namespace detail {

template <typename T>
Tensor<T> as_row(const Tensor<T>& v) {
  if (v.rank() == 2 && v.dim(0) == 1) return v;
  return reshape(v, {1, v.numel()});
}

// Row-normalized projections of the rows of x.
template <typename T>
Tensor<T> project_unit(const Tensor<T>& x, const ProjectionHead<T>& head) {
  return l2_normalize_rows(head(x));
}

}  // namespace detail

// Cosine similarity of the projected vectors; scalar tensor.
template <typename T>
Tensor<T> similarity(const Tensor<T>& u, const Tensor<T>& v, const ProjectionHead<T>& head) {
  const auto pu = detail::project_unit(detail::as_row(u), head);
  const auto pv = detail::project_unit(detail::as_row(v), head);
  return reshape(matmul(pu, transpose(pv)), {1});
}

// -log( exp(s_pos / tau) / (sum_k exp(s_intra_k / tau) + sum_k exp(s_inter_k / tau)) )
// where s are cosine similarities of projected vectors to the anchor.
// intra/inter negatives are [k x 128] matrices.
template <typename T>
Tensor<T> node_loss(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& intra_negatives,
                    const Tensor<T>& inter_negatives, const ProjectionHead<T>& head, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (!intra_negatives.defined() || !inter_negatives.defined() || intra_negatives.rank() != 2 ||
      inter_negatives.rank() != 2) {
    throw ContractError("node_loss: both negative sets must be non-empty [k x 128] matrices");
  }
  const auto pa = detail::project_unit(detail::as_row(anchor), head);
  const auto candidates = detail::project_unit(
      concat_rows(concat_rows(detail::as_row(positive), intra_negatives), inter_negatives), head);
  auto sims = scale(matmul(pa, transpose(candidates)), static_cast<T>(1.0 / cfg.tau));  // [1 x (1 + k1 + k2)]
  const std::size_t total = sims.dim(1);
  std::vector<std::size_t> neg_idx;
  for (std::size_t j = cfg.include_positive_in_denominator ? 0 : 1; j < total; ++j) neg_idx.push_back(j);
  const auto denominators = take(sims, neg_idx, {1, neg_idx.size()});
  const auto pos = take(sims, {0}, {1});
  return sub(logsumexp_rows(denominators), pos);
}

// Per-anchor negative indices for both loss directions. Each list holds
// min(negatives_per_anchor, N - 1) distinct node indices other than the anchor.
struct NegativeSample {
  std::vector<std::vector<std::size_t>> forward_intra, forward_inter;
  std::vector<std::vector<std::size_t>> backward_intra, backward_inter;
};

inline NegativeSample sample_negatives(std::size_t nodes, std::size_t per_anchor, std::mt19937_64& rng) {
  if (nodes < 2) throw ContractError("negative sampling needs at least 2 nodes");
  const std::size_t k = std::min(per_anchor, nodes - 1);
  NegativeSample s;
  auto draw = [&](std::size_t anchor) {
    std::vector<std::size_t> pool;
    pool.reserve(nodes - 1);
    for (std::size_t j = 0; j < nodes; ++j) {
      if (j != anchor) pool.push_back(j);
    }
    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
  };
  for (auto* lists : {&s.forward_intra, &s.forward_inter, &s.backward_intra, &s.backward_inter}) {
    lists->reserve(nodes);
  }
  for (std::size_t i = 0; i < nodes; ++i) {
    s.forward_intra.push_back(draw(i));
    s.forward_inter.push_back(draw(i));
    s.backward_intra.push_back(draw(i));
    s.backward_inter.push_back(draw(i));
  }
  return s;
}

// Symmetric loss over corresponding nodes of two views:
//   (1 / 2N) sum_i [ L(g_i, g~_i) + L(g~_i, g_i) ]
// view/augmented are [N x 128] global features whose rows correspond one to
// one (row i of each describes the same key-point).
template <typename T>
Tensor<T> total_loss(const Tensor<T>& view, const Tensor<T>& augmented, const ProjectionHead<T>& head,
                     const ContrastiveConfig& cfg, const NegativeSample& negatives) {
  cfg.validate();
  if (view.rank() != 2 || view.shape() != augmented.shape()) {
    throw ShapeError("total_loss: views must be equally shaped [N x 128] matrices");
  }
  const std::size_t n = view.dim(0);
  if (n < 2) throw ContractError("total_loss: at least 2 corresponding nodes are required");
  if (negatives.forward_intra.size() != n) throw ContractError("total_loss: negative sample size mismatch");

  const auto pv = detail::project_unit(view, head);
  const auto pw = detail::project_unit(augmented, head);
  const T inv_tau = static_cast<T>(1.0 / cfg.tau);
  const auto s_vv = scale(matmul(pv, transpose(pv)), inv_tau);
  const auto s_ww = scale(matmul(pw, transpose(pw)), inv_tau);
  const auto s_vw = scale(matmul(pv, transpose(pw)), inv_tau);
  const auto s_wv = transpose(s_vw);

  auto direction = [&](const Tensor<T>& intra, const Tensor<T>& inter, const Tensor<T>& cross,
                       const std::vector<std::vector<std::size_t>>& intra_idx,
                       const std::vector<std::vector<std::size_t>>& inter_idx) {
    const std::size_t k = intra_idx.front().size();
    std::vector<std::size_t> a_idx, b_idx, pos_idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (intra_idx[i].size() != k || inter_idx[i].size() != k) {
        throw ContractError("total_loss: ragged negative lists");
      }
      for (auto j : intra_idx[i]) a_idx.push_back(i * n + j);
      for (auto j : inter_idx[i]) b_idx.push_back(i * n + j);
      pos_idx.push_back(i * n + i);
    }
    const auto pos = take(cross, pos_idx, {n, 1});
    auto denominators = concat_cols(take(intra, a_idx, {n, k}), take(inter, b_idx, {n, k}));
    if (cfg.include_positive_in_denominator) denominators = concat_cols(pos, denominators);
    return sub(logsumexp_rows(denominators), reshape(pos, {n}));
  };

  const auto forward = direction(s_vv, s_vw, s_vw, negatives.forward_intra, negatives.forward_inter);
  const auto backward = direction(s_ww, s_wv, s_wv, negatives.backward_intra, negatives.backward_inter);
  return scale(add(sum(forward), sum(backward)), static_cast<T>(1.0 / (2.0 * n)));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& view, const Tensor<T>& augmented, const ProjectionHead<T>& head,
                     const ContrastiveConfig& cfg, std::mt19937_64& rng) {
  return total_loss(view, augmented, head, cfg, sample_negatives(view.dim(0), cfg.negatives_per_anchor, rng));
}

// Correspondence-driven form: pairs (i, j) select row i of `view` and row j
// of `augmented`. Only paired nodes take part.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& view, const Tensor<T>& augmented,
                     const std::vector<std::pair<std::size_t, std::size_t>>& correspondence,
                     const ProjectionHead<T>& head, const ContrastiveConfig& cfg, std::mt19937_64& rng) {
  if (correspondence.size() < 2) throw ContractError("total_loss: at least 2 corresponding nodes are required");
  std::vector<std::size_t> rows_v, rows_w;
  for (const auto& [i, j] : correspondence) {
    rows_v.push_back(i);
    rows_w.push_back(j);
  }
  return total_loss(gather_rows(view, rows_v), gather_rows(augmented, rows_w), head, cfg, rng);
}

}  // namespace kpg
