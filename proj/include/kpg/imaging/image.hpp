#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"

namespace kpg {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Interleaved row-major image with intensities in [0, 1]. Pixel (x, y) has its
// center at integer coordinates.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c = 1, float fill = 0.0f) : width(w), height(h), channels(c) {
    if (w <= 0 || h <= 0) throw ParameterError("image extents must be positive");
    if (c != 1 && c != 3) throw ParameterError("image must have 1 or 3 channels");
    pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
  }

  bool empty() const { return pixels.empty(); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  bool contains(double x, double y) const {
    constexpr double kTol = 1e-9;
    return x >= -kTol && y >= -kTol && x <= width - 1 + kTol && y <= height - 1 + kTol;
  }

  // Bilinear sample; the caller guarantees contains(x, y).
  float bilinear(double x, double y, int c = 0) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * at(x0, y0, c) + fx * at(x1, y0, c);
    const double bottom = (1.0 - fx) * at(x0, y1, c) + fx * at(x1, y1, c);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
  }

  bool in_unit_range() const {
    return std::all_of(pixels.begin(), pixels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  }
};

// Square grayscale window centered on a key-point.
struct Patch {
  int side = 0;
  std::vector<float> pixels;
  Point2 center;
};

}  // namespace kpg
