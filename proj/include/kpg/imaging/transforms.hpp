#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/affine.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

inline Image to_grayscale(const Image& img) {
  if (img.channels != 3) throw ParameterError("to_grayscale expects a 3-channel image");
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float v = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
      out.at(x, y) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

inline Image ensure_grayscale(const Image& img) { return img.channels == 1 ? img : to_grayscale(img); }

struct ClaheOptions {
  int tiles_x = 8;
  int tiles_y = 8;
  double clip_limit = 2.0;
};

// Contrast-limited adaptive histogram equalization over a 256-bin histogram.
// Each tile's histogram is clipped at clip_limit * (tile pixels / 256), the
// clipped mass is spread evenly over all bins, and the per-tile cumulative
// mappings are blended bilinearly between tile centers.
inline Image clahe(const Image& img, const ClaheOptions& opt = {}) {
  constexpr int kBins = 256;
  if (img.channels != 1) throw ParameterError("clahe expects a grayscale image");
  if (opt.tiles_x < 1 || opt.tiles_y < 1) throw ParameterError("clahe tile grid must be at least 1x1");
  if (!(opt.clip_limit > 0.0)) throw ParameterError("clahe clip limit must be positive");
  if (img.width < opt.tiles_x || img.height < opt.tiles_y) {
    throw ParameterError("image is smaller than the clahe tile grid");
  }

  auto bin_of = [](float v) { return std::clamp(static_cast<int>(std::lround(v * (kBins - 1))), 0, kBins - 1); };
  auto x_edge = [&](int i) { return i * img.width / opt.tiles_x; };
  auto y_edge = [&](int j) { return j * img.height / opt.tiles_y; };

  std::vector<std::array<double, kBins>> luts(static_cast<std::size_t>(opt.tiles_x) * opt.tiles_y);
  for (int ty = 0; ty < opt.tiles_y; ++ty) {
    for (int tx = 0; tx < opt.tiles_x; ++tx) {
      std::array<double, kBins> hist{};
      const int x0 = x_edge(tx), x1 = x_edge(tx + 1), y0 = y_edge(ty), y1 = y_edge(ty + 1);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) hist[bin_of(img.at(x, y))] += 1.0;
      }
      const double area = static_cast<double>(x1 - x0) * (y1 - y0);
      const double clip = std::max(1.0, opt.clip_limit * area / kBins);
      double excess = 0.0;
      for (auto& h : hist) {
        if (h > clip) {
          excess += h - clip;
          h = clip;
        }
      }
      const double spread = excess / kBins;
      auto& lut = luts[static_cast<std::size_t>(ty) * opt.tiles_x + tx];
      double cdf = 0.0;
      for (int b = 0; b < kBins; ++b) {
        cdf += hist[b] + spread;
        lut[b] = std::clamp(cdf / area, 0.0, 1.0);
      }
    }
  }

  // Tile centers along one axis, and the bracketing pair + weight for a coordinate.
  auto locate = [](int coord, int tiles, auto edge) {
    auto center = [&](int i) { return 0.5 * (edge(i) + edge(i + 1) - 1); };
    if (coord <= center(0)) return std::tuple{0, 0, 0.0};
    if (coord >= center(tiles - 1)) return std::tuple{tiles - 1, tiles - 1, 0.0};
    int i = 0;
    while (coord >= center(i + 1)) ++i;
    const double w = (coord - center(i)) / (center(i + 1) - center(i));
    return std::tuple{i, i + 1, w};
  };

  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    const auto [ya, yb, wy] = locate(y, opt.tiles_y, y_edge);
    for (int x = 0; x < img.width; ++x) {
      const auto [xa, xb, wx] = locate(x, opt.tiles_x, x_edge);
      const int b = bin_of(img.at(x, y));
      auto lut = [&](int tx, int ty) { return luts[static_cast<std::size_t>(ty) * opt.tiles_x + tx][b]; };
      const double top = (1.0 - wx) * lut(xa, ya) + wx * lut(xb, ya);
      const double bottom = (1.0 - wx) * lut(xa, yb) + wx * lut(xb, yb);
      out.at(x, y) = static_cast<float>(std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0));
    }
  }
  return out;
}

// Inverse-mapping warp with bilinear interpolation. The output has the same
// extents as the input unless given; samples falling outside are zero.
inline Image warp_affine(const Image& img, const AffineTransform& t, int out_width = 0, int out_height = 0) {
  if (!t.invertible()) throw ParameterError("warp_affine: singular transform");
  const AffineTransform inv = t.inverse();
  Image out(out_width > 0 ? out_width : img.width, out_height > 0 ? out_height : img.height, img.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      if (!img.contains(src.x, src.y)) continue;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.bilinear(src.x, src.y, c);
    }
  }
  return out;
}

// 1 where warp_affine draws from the source image, 0 elsewhere.
inline Image warp_support(int width, int height, const AffineTransform& t) {
  const AffineTransform inv = t.inverse();
  Image mask(width, height, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      mask.at(x, y) = (src.x >= -1e-9 && src.y >= -1e-9 && src.x <= width - 1 + 1e-9 &&
                       src.y <= height - 1 + 1e-9)
                          ? 1.0f
                          : 0.0f;
    }
  }
  return mask;
}

// Horizontal line kernel of `kernel_size` taps, each 1/kernel_size, with
// edge-replicated borders. Even sizes reach one tap further to the right.
inline Image motion_blur(const Image& img, int kernel_size) {
  if (kernel_size < 1) throw ParameterError("motion_blur: kernel size must be positive");
  if (kernel_size > img.width || kernel_size > img.height) {
    throw ParameterError("motion_blur: kernel larger than image");
  }
  const int first = -(kernel_size - 1) / 2;
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kernel_size; ++k) {
          const int sx = std::clamp(x + first + k, 0, img.width - 1);
          acc += img.at(sx, y, c);
        }
        out.at(x, y, c) = std::clamp(static_cast<float>(acc / kernel_size), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

// Top-left corner of the side x side window centered on the rounded point.
inline std::pair<int, int> patch_origin(const Point2& center, int side) {
  return {static_cast<int>(std::lround(center.x)) - side / 2, static_cast<int>(std::lround(center.y)) - side / 2};
}

inline bool patch_fits(int width, int height, const Point2& center, int side) {
  const auto [x0, y0] = patch_origin(center, side);
  return x0 >= 0 && y0 >= 0 && x0 + side <= width && y0 + side <= height;
}

// Returns nothing when the window leaves the image.
inline std::optional<Patch> extract_patch(const Image& img, const Point2& center, int side = 128) {
  if (side <= 0 || side % 2 != 0) throw ParameterError("patch side must be positive and even");
  if (img.channels != 1) throw ParameterError("extract_patch expects a grayscale image");
  if (!patch_fits(img.width, img.height, center, side)) return std::nullopt;
  const auto [x0, y0] = patch_origin(center, side);
  Patch p{side, std::vector<float>(static_cast<std::size_t>(side) * side), center};
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) p.pixels[static_cast<std::size_t>(y) * side + x] = img.at(x0 + x, y0 + y);
  }
  return p;
}

}  // namespace kpg
