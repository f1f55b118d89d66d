#pragma once

// Seven-layer patch CNN producing a 128-D local visual descriptor.
//
//   layer  kernel  filters  stride  padding  output (side 128)
//   1      3x3     16       1       1        128x128x16
//   2      3x3     16       2       1        64x64x16
//   3      3x3     32       2       1        32x32x32
//   4      3x3     64       2       1        16x16x64
//   5      3x3     128      2       1        8x8x128
//   6      3x3     128      1       1        8x8x128
//   7      8x8     128      1       0        1x128
//
// Layers 1-6 are conv + batch-norm + ReLU, layer 7 is conv + batch-norm.
// Smaller patch sides keep the same layout; layer 7's kernel then spans the
// side/16 extent left after the four stride-2 layers.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "kpg/core/ops.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/model/layers.hpp"

namespace kpg {

inline constexpr std::size_t kDescriptorDim = 128;
inline constexpr std::size_t kCnnLayers = 7;

struct ConvLayerSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
  bool relu;
};

inline std::array<ConvLayerSpec, kCnnLayers> cnn_layer_specs(std::size_t patch_side) {
  if (patch_side < 16 || patch_side % 16 != 0) {
    throw ParameterError("patch side must be a positive multiple of 16, got " + std::to_string(patch_side));
  }
  return {{{1, 16, 3, 1, 1, true},
           {16, 16, 3, 2, 1, true},
           {16, 32, 3, 2, 1, true},
           {32, 64, 3, 2, 1, true},
           {64, 128, 3, 2, 1, true},
           {128, 128, 3, 1, 1, true},
           {128, 128, patch_side / 16, 1, 0, false}}};
}

template <typename T>
struct ConvBnLayer {
  ConvLayerSpec spec;
  Tensor<T> weight;  // [out x in x k x k]
  Tensor<T> bias;    // [out]
  Tensor<T> gamma;   // [out]
  Tensor<T> beta;    // [out]
  BatchNormState<T> bn;
};

template <typename T>
struct CnnParams {
  std::size_t patch_side = 128;
  std::vector<ConvBnLayer<T>> layers;

  std::vector<NamedTensor<T>> named_tensors() const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "cnn.layer" + std::to_string(i + 1);
      const auto& l = layers[i];
      out.push_back({p + ".weight", l.weight, true});
      out.push_back({p + ".bias", l.bias, true});
      out.push_back({p + ".bn_gamma", l.gamma, true});
      out.push_back({p + ".bn_beta", l.beta, true});
      out.push_back({p + ".bn_running_mean", l.bn.running_mean, false});
      out.push_back({p + ".bn_running_var", l.bn.running_var, false});
    }
    return out;
  }
};

// He-normal kernels (std sqrt(2 / fan_in)), zero biases, unit batch-norm
// scale and zero shift. Deterministic in the seed.
template <typename T>
CnnParams<T> init_cnn(std::uint64_t seed, std::size_t patch_side = 128) {
  std::mt19937_64 rng(seed);
  CnnParams<T> params;
  params.patch_side = patch_side;
  for (const auto& spec : cnn_layer_specs(patch_side)) {
    const std::size_t fan_in = spec.in_channels * spec.kernel * spec.kernel;
    ConvBnLayer<T> layer{spec,
                         normal_tensor<T>({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                                          std::sqrt(2.0 / static_cast<double>(fan_in)), rng),
                         zero_parameter<T>({spec.out_channels}),
                         zero_parameter<T>({spec.out_channels}),
                         zero_parameter<T>({spec.out_channels}),
                         BatchNormState<T>(spec.out_channels)};
    for (auto& v : layer.gamma.mutable_data()) v = T(1);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

template <typename T>
Tensor<T> patches_to_tensor(const std::vector<Patch>& patches, std::size_t side) {
  if (patches.empty()) throw ShapeError("patch batch is empty");
  std::vector<T> values;
  values.reserve(patches.size() * side * side);
  for (const auto& p : patches) {
    if (static_cast<std::size_t>(p.side) != side) {
      throw ShapeError("patch side " + std::to_string(p.side) + " does not match configured " + std::to_string(side));
    }
    for (float v : p.pixels) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>({patches.size(), 1, side, side}, std::move(values));
}

namespace detail {

template <typename T, typename Params>
Tensor<T> cnn_forward_impl(const Tensor<T>& patches, Params& params, bool train, std::vector<Shape>* trace) {
  if (patches.rank() != 4 || patches.dim(1) != 1 || patches.dim(2) != params.patch_side ||
      patches.dim(3) != params.patch_side) {
    throw ShapeError("cnn_forward expects [B x 1 x " + std::to_string(params.patch_side) + " x " +
                     std::to_string(params.patch_side) + "], got " + shape_str(patches.shape()));
  }
  Tensor<T> x = patches;
  for (auto& layer : params.layers) {
    x = conv2d(x, layer.weight, layer.bias, layer.spec.stride, layer.spec.padding);
    if constexpr (std::is_const_v<Params>) {
      x = batch_norm_eval(x, layer.gamma, layer.beta, layer.bn);
    } else {
      x = batch_norm(x, layer.gamma, layer.beta, layer.bn, train ? Mode::kTrain : Mode::kEval);
    }
    if (layer.spec.relu) x = relu(x);
    if (trace) trace->push_back({x.dim(1), x.dim(2), x.dim(3)});
  }
  return reshape(x, {x.dim(0), kDescriptorDim});
}

}  // namespace detail

// patches: [B x 1 x side x side] -> descriptors [B x 128]. When `trace` is
// given, the [C x H x W] shape after every layer is appended to it.
// Train mode updates the batch-norm running statistics.
template <typename T>
Tensor<T> cnn_forward(const Tensor<T>& patches, CnnParams<T>& params, Mode mode,
                      std::vector<Shape>* trace = nullptr) {
  return detail::cnn_forward_impl<T>(patches, params, mode == Mode::kTrain, trace);
}

// Eval-mode forward; a pure function of its inputs.
template <typename T>
Tensor<T> cnn_forward(const Tensor<T>& patches, const CnnParams<T>& params, std::vector<Shape>* trace = nullptr) {
  return detail::cnn_forward_impl<T>(patches, params, false, trace);
}

}  // namespace kpg
