#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kpg/core/tensor.hpp"

namespace kpg {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// Bias-corrected Adam over a fixed list of parameter tensors.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {})
      : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      state_.m.emplace_back(p.numel(), T(0));
      state_.v.emplace_back(p.numel(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Applies one update. Every parameter must carry a populated grad.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) {
        throw ContractError("adam step: parameter " + std::to_string(i) + " has no gradient");
      }
    }
    ++state_.step_count;
    const double t = static_cast<double>(state_.step_count);
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
    const T correction2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
    const T lr = static_cast<T>(config_.learning_rate);
    const T eps = static_cast<T>(config_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto values = params_[i].mutable_data();
      auto grad = params_[i].grad();
      auto& m = state_.m[i];
      auto& v = state_.v[i];
      for (std::size_t j = 0; j < values.size(); ++j) {
        const T g = grad[j];
        m[j] = b1 * m[j] + (T(1) - b1) * g;
        v[j] = b2 * v[j] + (T(1) - b2) * g * g;
        const T m_hat = m[j] / correction1;
        const T v_hat = v[j] / correction2;
        values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

  const AdamState<T>& state() const { return state_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  AdamState<T> state_;
};

}  // namespace kpg
