#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/ops.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/model/cnn.hpp"
#include "kpg/model/layers.hpp"

namespace kpg {

struct ImageSize {
  int width = 0;
  int height = 0;
};

template <typename T>
struct GnnParams {
  Linear<T> pos1;     // 2 -> 32, ReLU
  Linear<T> pos2;     // 32 -> 128
  Tensor<T> wq, wk, wv;  // [128 x 128], applied as x W
  Tensor<T> bq, bk, bv;  // [128]
  Linear<T> update1;  // 256 -> 256, ReLU
  Linear<T> update2;  // 256 -> 128
  bool scaled_attention = true;

  std::vector<NamedTensor<T>> named_tensors() const {
    std::vector<NamedTensor<T>> out;
    pos1.append_to(out, "gnn.pos_mlp.fc1");
    pos2.append_to(out, "gnn.pos_mlp.fc2");
    out.push_back({"gnn.attn.wq", wq, true});
    out.push_back({"gnn.attn.wk", wk, true});
    out.push_back({"gnn.attn.wv", wv, true});
    out.push_back({"gnn.attn.bq", bq, true});
    out.push_back({"gnn.attn.bk", bk, true});
    out.push_back({"gnn.attn.bv", bv, true});
    update1.append_to(out, "gnn.update_mlp.fc1");
    update2.append_to(out, "gnn.update_mlp.fc2");
    return out;
  }
};

template <typename T>
GnnParams<T> init_gnn(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t d = kDescriptorDim;
  GnnParams<T> p;
  p.pos1 = Linear<T>::init(2, 32, 2.0, rng);
  p.pos2 = Linear<T>::init(32, d, 1.0, rng);
  const double proj_std = std::sqrt(1.0 / d);
  p.wq = normal_tensor<T>({d, d}, proj_std, rng);
  p.wk = normal_tensor<T>({d, d}, proj_std, rng);
  p.wv = normal_tensor<T>({d, d}, proj_std, rng);
  p.bq = zero_parameter<T>({d});
  p.bk = zero_parameter<T>({d});
  p.bv = zero_parameter<T>({d});
  p.update1 = Linear<T>::init(2 * d, 2 * d, 2.0, rng);
  p.update2 = Linear<T>::init(2 * d, d, 1.0, rng);
  return p;
}

// Fully connected key-point graph of one image. Feature stages are
// [N x 128] matrices with one row per node.
template <typename T>
struct KeypointGraph {
  std::vector<Point2> positions;
  ImageSize image_size;
  Tensor<T> visual;     // f: CNN descriptor
  Tensor<T> encoded;    // 0f = f + MLP(p)
  Tensor<T> message;    // m
  Tensor<T> attention;  // [N x N] row-stochastic weights
  Tensor<T> updated;    // 1f
  Tensor<T> global;     // g

  std::size_t size() const { return positions.size(); }
};

// Pixel coordinates to [-1, 1]^2 by image extents, as an [N x 2] tensor.
template <typename T>
Tensor<T> normalized_positions(const std::vector<Point2>& positions, ImageSize size) {
  if (size.width < 2 || size.height < 2) throw ParameterError("image size must be at least 2x2");
  std::vector<T> v;
  v.reserve(positions.size() * 2);
  for (const auto& p : positions) {
    v.push_back(static_cast<T>(2.0 * p.x / (size.width - 1) - 1.0));
    v.push_back(static_cast<T>(2.0 * p.y / (size.height - 1) - 1.0));
  }
  return Tensor<T>({positions.size(), 2}, std::move(v));
}

template <typename T>
void positional_encode(KeypointGraph<T>& graph, const GnnParams<T>& params) {
  if (!graph.visual.defined()) throw ContractError("positional_encode: visual features missing");
  if (graph.visual.rank() != 2 || graph.visual.dim(0) != graph.size() || graph.visual.dim(1) != kDescriptorDim) {
    throw ShapeError("positional_encode: visual features must be [N x 128]");
  }
  const auto xy = normalized_positions<T>(graph.positions, graph.image_size);
  graph.encoded = add(graph.visual, params.pos2(relu(params.pos1(xy))));
}

// Single-head self-attention over all nodes, self edge included:
//   Q = 0f Wq + bq, K = 0f Wk + bk, V = 0f Wv + bv
//   m_i = sum_l softmax_l(Q_i . K_l / sqrt(128)) V_l
template <typename T>
void attention_message(KeypointGraph<T>& graph, const GnnParams<T>& params) {
  if (graph.size() == 0) throw ContractError("attention_message: empty graph");
  if (!graph.encoded.defined()) throw ContractError("attention_message: encoded features missing");
  const auto& x = graph.encoded;
  const auto q = add_rowwise(matmul(x, params.wq), params.bq);
  const auto k = add_rowwise(matmul(x, params.wk), params.bk);
  const auto v = add_rowwise(matmul(x, params.wv), params.bv);
  auto logits = matmul(q, transpose(k));
  if (params.scaled_attention) logits = scale(logits, static_cast<T>(1.0 / std::sqrt(double(kDescriptorDim))));
  graph.attention = softmax_rows(logits);
  graph.message = matmul(graph.attention, v);
}

// 1f = 0f + MLP([0f | m]), g = 1f.
template <typename T>
void node_update(KeypointGraph<T>& graph, const GnnParams<T>& params) {
  if (!graph.encoded.defined() || !graph.message.defined()) {
    throw ContractError("node_update: encoded features and messages required");
  }
  const auto joined = concat_cols(graph.encoded, graph.message);
  if (joined.dim(1) != params.update1.weight.dim(0)) throw ShapeError("node_update: concatenation width mismatch");
  graph.updated = add(graph.encoded, params.update2(relu(params.update1(joined))));
  graph.global = graph.updated;
}

template <typename T>
void gnn_forward(KeypointGraph<T>& graph, const GnnParams<T>& params) {
  positional_encode(graph, params);
  attention_message(graph, params);
  node_update(graph, params);
}

}  // namespace kpg
