#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "kpg/core/tensor.hpp"

namespace kpg {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::MapMat<T>(out.data(), m, n).noalias() =
      detail::CMapMat<T>(a.data().data(), m, k) * detail::CMapMat<T>(b.data().data(), k, n);
  return Tensor<T>::make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const auto& node) {
    detail::CMapMat<T> g(node.grad.data(), m, n);
    if (auto* ga = parent_grad(node, 0)) {
      detail::MapMat<T>(ga->data(), m, k).noalias() +=
          g * detail::CMapMat<T>(b.data().data(), k, n).transpose();
    }
    if (auto* gb = parent_grad(node, 1)) {
      detail::MapMat<T>(gb->data(), k, n).noalias() +=
          detail::CMapMat<T>(a.data().data(), m, k).transpose() * g;
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  detail::MapMat<T>(out.data(), n, m) = detail::CMapMat<T>(a.data().data(), m, n).transpose();
  return Tensor<T>::make_result({n, m}, std::move(out), {a}, [m, n](const auto& node) {
    if (auto* ga = parent_grad(node, 0)) {
      detail::MapMat<T>(ga->data(), m, n) +=
          detail::CMapMat<T>(node.grad.data(), n, m).transpose();
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](const auto& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(node, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
    }
    if (auto* g = parent_grad(node, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [a, b](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i] * b[i];
    }
    if (auto* g = parent_grad(node, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i] * a[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [factor](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i] * factor;
    }
  });
}

// a[M x N] + bias[N] broadcast over rows.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require_rank(a, 2, "add_rowwise");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.numel() != n) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) + " vs rows of " +
                     shape_str(a.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, bias}, [m, n](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
    }
    if (auto* g = parent_grad(node, 1)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) (*g)[c] += node.grad[r * n + c];
      }
    }
  });
}

// Subgradient at zero is zero. NaN passes through so that corrupt inputs
// surface in the loss instead of being silently zeroed.
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] < T(0) ? T(0) : a[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [a](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (a[i] > T(0)) (*g)[i] += node.grad[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  return Tensor<T>::make_result({1}, {total}, {a}, [](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (auto& v : *g) v += node.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

namespace detail {

template <typename T>
void softmax_row(const T* in, T* out, std::size_t n) {
  const T top = *std::max_element(in, in + n);
  T total = T(0);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - top);
    total += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= total;
}

template <typename T>
Tensor<T> softmax_rows_impl(const Tensor<T>& a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(a.data().data() + r * cols, out.data() + r * cols, cols);
  auto probs = std::make_shared<std::vector<T>>(out);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [probs, rows, cols](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* p = probs->data() + r * cols;
        const T* go = node.grad.data() + r * cols;
        T dot = T(0);
        for (std::size_t j = 0; j < cols; ++j) dot += p[j] * go[j];
        for (std::size_t j = 0; j < cols; ++j) (*g)[r * cols + j] += p[j] * (go[j] - dot);
      }
    }
  });
}

}  // namespace detail

// Softmax over a vector, stabilized by max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  detail::require_rank(a, 1, "softmax");
  return detail::softmax_rows_impl(a, 1, a.numel());
}

// Row-wise softmax of an M x N matrix.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  detail::require_rank(a, 2, "softmax_rows");
  return detail::softmax_rows_impl(a, a.dim(0), a.dim(1));
}

// log(sum(exp(row))) per row of an M x N matrix; output [M].
template <typename T>
Tensor<T> logsumexp_rows(const Tensor<T>& a) {
  detail::require_rank(a, 2, "logsumexp_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m);
  auto probs = std::make_shared<std::vector<T>>(a.numel());
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = a.data().data() + r * n;
    const T top = *std::max_element(row, row + n);
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - top);
    out[r] = top + std::log(total);
    for (std::size_t j = 0; j < n; ++j) (*probs)[r * n + j] = std::exp(row[j] - out[r]);
  }
  return Tensor<T>::make_result({m}, std::move(out), {a}, [probs, m, n](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += node.grad[r] * (*probs)[r * n + j];
      }
    }
  });
}

// Scales every row of an M x N matrix to unit Euclidean norm.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a) {
  detail::require_rank(a, 2, "l2_normalize_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.numel());
  auto norms = std::make_shared<std::vector<T>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    T sq = T(0);
    for (std::size_t j = 0; j < n; ++j) sq += a[r * n + j] * a[r * n + j];
    const T norm = std::sqrt(sq);
    // NaN rows pass through; the caller's finiteness check reports them.
    if (norm <= std::numeric_limits<T>::min()) {
      throw DegenerateError("l2_normalize_rows: zero-norm row " + std::to_string(r));
    }
    (*norms)[r] = norm;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = a[r * n + j] / norm;
  }
  auto unit = std::make_shared<std::vector<T>>(out);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [norms, unit, m, n](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        const T* u = unit->data() + r * n;
        const T* go = node.grad.data() + r * n;
        T dot = T(0);
        for (std::size_t j = 0; j < n; ++j) dot += u[j] * go[j];
        for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += (go[j] - u[j] * dot) / (*norms)[r];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Restructuring

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return Tensor<T>::make_result(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()), {a},
                                [](const auto& node) {
                                  if (auto* g = parent_grad(node, 0)) {
                                    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
                                  }
                                });
}

// [M x K1] | [M x K2] -> [M x (K1+K2)].
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "concat_cols");
  detail::require_rank(b, 2, "concat_cols");
  const std::size_t m = a.dim(0), ka = a.dim(1), kb = b.dim(1);
  if (b.dim(0) != m) {
    throw ShapeError("concat_cols: row counts differ " + shape_str(a.shape()) + " | " +
                     shape_str(b.shape()));
  }
  const std::size_t k = ka + kb;
  std::vector<T> out(m * k);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.data().begin() + r * ka, ka, out.begin() + r * k);
    std::copy_n(b.data().begin() + r * kb, kb, out.begin() + r * k + ka);
  }
  return Tensor<T>::make_result({m, k}, std::move(out), {a, b}, [m, ka, kb, k](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < ka; ++c) (*g)[r * ka + c] += node.grad[r * k + c];
      }
    }
    if (auto* g = parent_grad(node, 1)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < kb; ++c) (*g)[r * kb + c] += node.grad[r * k + ka + c];
      }
    }
  });
}

// [M1 x K] over [M2 x K] -> [(M1+M2) x K].
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "concat_rows");
  detail::require_rank(b, 2, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_rows: column counts differ " + shape_str(a.shape()) + " / " + shape_str(b.shape()));
  }
  const std::size_t na = a.numel();
  std::vector<T> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor<T>::make_result({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), {a, b}, [na](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < na; ++i) (*g)[i] += node.grad[i];
    }
    if (auto* g = parent_grad(node, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[na + i];
    }
  });
}

// Gathers flat elements of `a` into a tensor of `shape`. Indices may repeat.
template <typename T>
Tensor<T> take(const Tensor<T>& a, std::vector<std::size_t> indices, Shape shape) {
  if (shape_numel(shape) != indices.size()) throw ShapeError("take: index count does not match shape");
  std::vector<T> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.numel()) throw ShapeError("take: index out of range");
    out[i] = a[indices[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return Tensor<T>::make_result(std::move(shape), std::move(out), {a}, [idx](const auto& node) {
    if (auto* g = parent_grad(node, 0)) {
      for (std::size_t i = 0; i < idx->size(); ++i) (*g)[(*idx)[i]] += node.grad[i];
    }
  });
}

// Rows of an [M x K] matrix in the given order; rows may repeat.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& rows) {
  detail::require_rank(a, 2, "gather_rows");
  const std::size_t k = a.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * k);
  for (auto r : rows) {
    if (r >= a.dim(0)) throw ShapeError("gather_rows: row index out of range");
    for (std::size_t c = 0; c < k; ++c) idx.push_back(r * k + c);
  }
  return take(a, std::move(idx), {rows.size(), k});
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dGeometry {
  std::size_t in_channels, in_h, in_w;
  std::size_t out_channels, kernel, stride, padding;
  std::size_t out_h, out_w;
};

inline Conv2dGeometry conv2d_geometry(std::size_t in_channels, std::size_t h, std::size_t w,
                                      std::size_t out_channels, std::size_t kernel,
                                      std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  if (kernel > h + 2 * padding || kernel > w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(h + 2 * padding) + "x" + std::to_string(w + 2 * padding));
  }
  return {in_channels, h, w, out_channels, kernel, stride, padding,
          (h + 2 * padding - kernel) / stride + 1, (w + 2 * padding - kernel) / stride + 1};
}

namespace detail {

// Unfolds one C x H x W sample into a (C*k*k) x (out_h*out_w) column matrix.
template <typename T>
void im2col(const T* in, const Conv2dGeometry& g, T* col) {
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.in_h) &&
                                ix < static_cast<long>(g.in_w);
            row[oy * g.out_w + ox] = inside ? in[(c * g.in_h + iy) * g.in_w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const Conv2dGeometry& g, T* out) {
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            out[(c * g.in_h + iy) * g.in_w + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Zero-padded 2-D cross-correlation.
//   input:   [B x C_in x H x W]
//   kernels: [C_out x C_in x k x k]
//   bias:    [C_out] or undefined
// Returns [B x C_out x H' x W'] with H' = (H + 2p - k) / s + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(2) != kernels.dim(3)) throw ShapeError("conv2d: kernels must be square");
  if (kernels.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) + " vs kernel channels " +
                     std::to_string(kernels.dim(1)));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != kernels.dim(0)) throw ShapeError("conv2d: bias length mismatch");

  const std::size_t batch = input.dim(0);
  const Conv2dGeometry g = conv2d_geometry(input.dim(1), input.dim(2), input.dim(3), kernels.dim(0),
                                           kernels.dim(2), stride, padding);
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_size = g.out_channels * cols;

  std::vector<T> out(batch * out_size);
  std::vector<T> col(rows * cols);
  detail::CMapMat<T> wmat(kernels.data().data(), g.out_channels, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col(input.data().data() + b * in_size, g, col.data());
    detail::MapMat<T> y(out.data() + b * out_size, g.out_channels, cols);
    y.noalias() = wmat * detail::CMapMat<T>(col.data(), rows, cols);
    if (has_bias) {
      for (std::size_t c = 0; c < g.out_channels; ++c) y.row(c).array() += bias[c];
    }
  }

  auto backward_fn = [input, kernels, g, batch, rows, cols, in_size, out_size,
                      has_bias](const auto& node) {
    auto* gin = parent_grad(node, 0);
    auto* gw = parent_grad(node, 1);
    auto* gb = has_bias ? parent_grad(node, 2) : nullptr;
    std::vector<T> col(rows * cols);
    detail::CMapMat<T> wmat(kernels.data().data(), g.out_channels, rows);
    for (std::size_t b = 0; b < batch; ++b) {
      detail::CMapMat<T> gy(node.grad.data() + b * out_size, g.out_channels, cols);
      if (gw) {
        detail::im2col(input.data().data() + b * in_size, g, col.data());
        detail::MapMat<T>(gw->data(), g.out_channels, rows).noalias() +=
            gy * detail::CMapMat<T>(col.data(), rows, cols).transpose();
      }
      if (gb) {
        // Plain loop: Eigen's vectorized sum() peels by pointer alignment,
        // which would make the result depend on the allocation address.
        const T* gp = node.grad.data() + b * out_size;
        for (std::size_t c = 0; c < g.out_channels; ++c) {
          T acc = T(0);
          for (std::size_t k = 0; k < cols; ++k) acc += gp[c * cols + k];
          (*gb)[c] += acc;
        }
      }
      if (gin) {
        detail::MapMat<T>(col.data(), rows, cols).noalias() = wmat.transpose() * gy;
        detail::col2im_add(col.data(), g, gin->data() + b * in_size);
      }
    }
  };
  Shape out_shape{batch, g.out_channels, g.out_h, g.out_w};
  if (has_bias) {
    return Tensor<T>::make_result(std::move(out_shape), std::move(out), {input, kernels, bias},
                                  std::move(backward_fn));
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {input, kernels},
                                std::move(backward_fn));
}

// Single-sample convenience form: [C_in x H x W] -> [C_out x H' x W'].
template <typename T>
Tensor<T> conv2d_single(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride,
                        std::size_t padding) {
  detail::require_rank(input, 3, "conv2d input");
  auto batched = reshape(input, {1, input.dim(0), input.dim(1), input.dim(2)});
  auto out = conv2d(batched, kernels, Tensor<T>(), stride, padding);
  return reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

// Per-channel normalization of [B x C x ...] with learnable scale/shift.
// Train mode uses batch statistics (biased variance) and updates running
// statistics as running = (1 - momentum) * running + momentum * batch.
namespace detail {

// `update` is non-null exactly in train mode.
template <typename T>
Tensor<T> batch_norm_impl(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const BatchNormState<T>& state, BatchNormState<T>* update) {
  const Mode mode = update ? Mode::kTrain : Mode::kEval;
  if (input.rank() < 2) throw ShapeError("batch_norm: input needs at least [B x C]");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels ||
      state.running_mean.numel() != channels || state.running_var.numel() != channels) {
    throw ShapeError("batch_norm: per-channel parameter length mismatch");
  }
  if (mode == Mode::kTrain && batch < 2) {
    throw DegenerateError("batch_norm: train mode needs a batch of at least 2 samples");
  }
  const std::size_t spatial = input.numel() / (batch * channels);
  const T count = static_cast<T>(batch * spatial);
  const T eps = state.epsilon;
  auto index = [=](std::size_t b, std::size_t c, std::size_t s) {
    return (b * channels + c) * spatial + s;
  };

  std::vector<T> mu(channels), var(channels);
  if (mode == Mode::kTrain) {
    for (std::size_t c = 0; c < channels; ++c) {
      T acc = T(0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < spatial; ++s) acc += input[index(b, c, s)];
      }
      mu[c] = acc / count;
      T sq = T(0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < spatial; ++s) {
          const T d = input[index(b, c, s)] - mu[c];
          sq += d * d;
        }
      }
      var[c] = sq / count;
    }
    auto rm = update->running_mean.mutable_data();
    auto rv = update->running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = (T(1) - update->momentum) * rm[c] + update->momentum * mu[c];
      rv[c] = (T(1) - update->momentum) * rv[c] + update->momentum * var[c];
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = state.running_mean[c];
      var[c] = state.running_var[c];
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  std::vector<T> out(input.numel());
  for (std::size_t c = 0; c < channels; ++c) {
    (*inv_std)[c] = T(1) / std::sqrt(var[c] + eps);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = index(b, c, s);
        (*xhat)[i] = (input[i] - mu[c]) * (*inv_std)[c];
        out[i] = gamma[c] * (*xhat)[i] + beta[c];
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  return Tensor<T>::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [xhat, inv_std, gamma, batch, channels, spatial, count, train, index](const auto& node) {
        const auto& go = node.grad;
        auto* gin = parent_grad(node, 0);
        auto* gg = parent_grad(node, 1);
        auto* gbeta = parent_grad(node, 2);
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_go = T(0), sum_go_xhat = T(0);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = index(b, c, s);
              sum_go += go[i];
              sum_go_xhat += go[i] * (*xhat)[i];
            }
          }
          if (gg) (*gg)[c] += sum_go_xhat;
          if (gbeta) (*gbeta)[c] += sum_go;
          if (!gin) continue;
          const T k = gamma[c] * (*inv_std)[c];
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = index(b, c, s);
              if (train) {
                (*gin)[i] += k * (go[i] - sum_go / count - (*xhat)[i] * sum_go_xhat / count);
              } else {
                (*gin)[i] += k * go[i];
              }
            }
          }
        }
      });
}

}  // namespace detail

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode) {
  return detail::batch_norm_impl(input, gamma, beta, state, mode == Mode::kTrain ? &state : nullptr);
}

// Running-statistics normalization; leaves `state` untouched.
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const BatchNormState<T>& state) {
  return detail::batch_norm_impl(input, gamma, beta, state, static_cast<BatchNormState<T>*>(nullptr));
}

}  // namespace kpg
