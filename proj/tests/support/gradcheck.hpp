#pragma once

// Finite-difference gradient checking shared by the unit and acceptance
// tests.
//
// The loss is given as a generic callable `fn(const std::vector<Tensor<T>>&)`
// returning a scalar Tensor<T>, instantiable for float and double. Numeric
// gradients always use double central differences; the analytic side runs in
// the requested scalar type on the same (float-representable) inputs.
//
// Error per input tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||),
// over the checked entries (the denominator is floored at 1e-6). The check
// reports the worst tensor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/tensor.hpp"

namespace kpg::testing {

struct GradInput {
  Shape shape;
  std::vector<double> values;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-6;
  // 0 checks every entry; otherwise this many random entries per input.
  std::size_t samples_per_input = 0;
  std::uint64_t seed = 1;
};

inline GradInput random_input(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return {std::move(shape), std::move(v)};
}

namespace detail {

template <typename T>
std::vector<Tensor<T>> make_leaves(const std::vector<GradInput>& inputs, bool requires_grad) {
  std::vector<Tensor<T>> out;
  for (const auto& in : inputs) {
    std::vector<T> v(in.values.begin(), in.values.end());
    Tensor<T> t(in.shape, std::move(v));
    t.set_requires_grad(requires_grad);
    out.push_back(t);
  }
  return out;
}

}  // namespace detail

template <typename T, typename Fn>
GradCheckResult gradcheck(Fn&& fn, std::vector<GradInput> inputs, const GradCheckOptions& opt = {}) {
  // Round inputs to float so both precisions see identical values.
  for (auto& in : inputs) {
    for (auto& v : in.values) v = static_cast<double>(static_cast<float>(v));
  }

  std::mt19937_64 rng(opt.seed);
  std::vector<std::vector<std::size_t>> picks(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].values.size();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    if (opt.samples_per_input && opt.samples_per_input < n) {
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(opt.samples_per_input);
      std::sort(all.begin(), all.end());
    }
    picks[k] = std::move(all);
  }

  auto leaves = detail::make_leaves<T>(inputs, true);
  const Tensor<T> loss = fn(leaves);
  backward(loss);

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (auto i : picks[k]) {
      auto eval_at = [&](double delta) {
        auto shifted = inputs;
        shifted[k].values[i] += delta;
        NoGradGuard no_grad;
        return static_cast<double>(fn(detail::make_leaves<double>(shifted, false)).item());
      };
      const double numeric = (eval_at(opt.step) - eval_at(-opt.step)) / (2.0 * opt.step);
      const double analytic = leaves[k].has_grad() ? static_cast<double>(leaves[k].grad()[i]) : 0.0;
      diff_sq += (analytic - numeric) * (analytic - numeric);
      a_sq += analytic * analytic;
      n_sq += numeric * numeric;
      ++result.checked;
    }
    // Inputs with (numerically) zero gradient are compared in absolute terms.
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-6});
    const double err = std::sqrt(diff_sq) / denom;
    if (err > result.max_error) {
      result.max_error = err;
      result.worst_input = k;
    }
  }
  return result;
}

}  // namespace kpg::testing
