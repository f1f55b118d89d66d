#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/imaging/transforms.hpp"

namespace kpg {

struct Keypoint {
  Point2 position;
  double response = 0.0;
};

struct DetectorOptions {
  int max_points = 512;
  double harris_k = 0.04;
  double window_sigma = 1.5;
  // Absolute floor on the Harris response; intensities live in [0, 1].
  double min_response = 1e-6;
  // When positive, key-points whose patch of this side would leave the image
  // are discarded before the top-N cut.
  int patch_side = 0;
};

namespace detail {

// Separable Gaussian smoothing with edge replication.
inline std::vector<double> gaussian_smooth(const std::vector<double>& in, int w, int h, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= total;

  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

// Harris corner response det(M) - k trace(M)^2 at every pixel, where M is the
// Gaussian-weighted structure tensor of 3x3 Sobel gradients (scaled by 1/8).
inline std::vector<double> harris_response(const Image& img, double k = 0.04, double sigma = 1.5) {
  if (img.channels != 1) throw ParameterError("harris_response expects a grayscale image");
  const int w = img.width, h = img.height;
  auto px = [&](int x, int y) -> double { return img.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  std::vector<double> ixx(w * h), iyy(w * h), ixy(w * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) - px(x - 1, y - 1) -
                         2 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
      ixx[y * w + x] = gx * gx;
      iyy[y * w + x] = gy * gy;
      ixy[y * w + x] = gx * gy;
    }
  }
  const auto sxx = detail::gaussian_smooth(ixx, w, h, sigma);
  const auto syy = detail::gaussian_smooth(iyy, w, h, sigma);
  const auto sxy = detail::gaussian_smooth(ixy, w, h, sigma);
  std::vector<double> r(w * h);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double trace = sxx[i] + syy[i];
    r[i] = sxx[i] * syy[i] - sxy[i] * sxy[i] - k * trace * trace;
  }
  return r;
}

// Harris corners after 3x3 non-maximum suppression, strongest first. Among
// equal responses the pixel earlier in (y, x) order survives.
inline std::vector<Keypoint> detect_corners(const Image& img, const DetectorOptions& opt) {
  if (opt.max_points < 0) throw ParameterError("max_points must be non-negative");
  const int w = img.width, h = img.height;
  const auto r = harris_response(img, opt.harris_k, opt.window_sigma);

  std::vector<Keypoint> found;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = r[y * w + x];
      if (!(v > opt.min_response)) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const double n = r[ny * w + nx];
          const bool neighbor_first = dy < 0 || (dy == 0 && dx < 0);
          if (n > v || (n == v && neighbor_first)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      const Point2 p{static_cast<double>(x), static_cast<double>(y)};
      if (opt.patch_side > 0 && !patch_fits(w, h, p, opt.patch_side)) continue;
      found.push_back({p, v});
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (found.size() > static_cast<std::size_t>(opt.max_points)) found.resize(opt.max_points);
  return found;
}

inline std::vector<Keypoint> detect_corners(const Image& img, int max_points) {
  DetectorOptions opt;
  opt.max_points = max_points;
  return detect_corners(img, opt);
}

inline std::vector<Point2> positions(const std::vector<Keypoint>& kps) {
  std::vector<Point2> out;
  out.reserve(kps.size());
  for (const auto& k : kps) out.push_back(k.position);
  return out;
}

}  // namespace kpg
