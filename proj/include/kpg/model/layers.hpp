#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/ops.hpp"

namespace kpg {

// A named view of one model tensor. Buffers (batch-norm running statistics)
// are serialized but not optimized.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> zero_parameter(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

// Fully connected layer, y = x W + b, with W stored [in x out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear init(std::size_t in, std::size_t out, double gain, std::mt19937_64& rng) {
    return {normal_tensor<T>({in, out}, std::sqrt(gain / static_cast<double>(in)), rng), zero_parameter<T>({out})};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return add_rowwise(matmul(x, weight), bias); }

  void append_to(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
  }
};

}  // namespace kpg
