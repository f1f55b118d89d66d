#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/mosaic/homography.hpp"

namespace kpg {

struct CompositeOptions {
  long max_canvas_pixels = 64L * 1024 * 1024;
};

struct Panorama {
  Image image;
  Point2 origin;  // canvas position of the reference frame's pixel (0, 0)
  double overlap_rms = 0.0;       // RMS difference between overlapping frame samples
  std::size_t overlap_pixels = 0;
  std::vector<Homography> frame_to_reference;
};

// Chains pairwise maps: links[i] takes frame i+1 into frame i coordinates;
// the result maps every frame into frame 0.
inline std::vector<Homography> chain_homographies(const std::vector<Homography>& links) {
  std::vector<Homography> out{Homography()};
  for (const auto& h : links) out.push_back(out.back() * h);
  return out;
}

// Feathered compositing: each frame contributes with weight equal to the
// distance of the sample to its nearest frame border (plus one pixel), and
// overlapping samples are averaged by those weights.
inline Panorama composite_panorama(const std::vector<Image>& frames, const std::vector<Homography>& links,
                                   const CompositeOptions& opt = {}) {
  if (frames.empty()) throw ContractError("composite_panorama: no frames");
  if (links.size() + 1 != frames.size()) {
    throw ContractError("composite_panorama: need exactly one homography per consecutive frame pair");
  }
  const int channels = frames.front().channels;
  for (const auto& f : frames) {
    if (f.channels != channels) throw ParameterError("composite_panorama: frames differ in channel count");
  }

  Panorama pano;
  pano.frame_to_reference = chain_homographies(links);

  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const double w = frames[f].width - 1, h = frames[f].height - 1;
    for (const Point2 c : {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}}) {
      const Point2 p = pano.frame_to_reference[f].apply(c);
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ResourceError("composite_panorama: frame maps to infinity");
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  }
  // Canvas pixels are the integer positions covered by some frame.
  constexpr double kSnap = 1e-6;
  const double x0 = std::ceil(min_x - kSnap), y0 = std::ceil(min_y - kSnap);
  const double width = std::floor(max_x + kSnap) - x0 + 1;
  const double height = std::floor(max_y + kSnap) - y0 + 1;
  if (width * height > static_cast<double>(opt.max_canvas_pixels) || width > 1e6 || height > 1e6) {
    throw ResourceError("composite_panorama: canvas of " + std::to_string(static_cast<long>(width)) + "x" +
                        std::to_string(static_cast<long>(height)) + " exceeds the configured limit");
  }
  pano.origin = {-x0, -y0};
  const int cw = static_cast<int>(width), ch = static_cast<int>(height);

  const std::size_t n_px = static_cast<std::size_t>(cw) * ch;
  std::vector<double> acc(n_px * channels, 0.0), weight(n_px, 0.0);
  std::vector<float> first(n_px * channels, 0.0f);
  std::vector<int> contributors(n_px, 0);
  double sq_diff = 0.0;
  std::size_t diff_count = 0;

  // Frames are accumulated in sequence order, each over its own bounding box.
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Image& img = frames[f];
    const Homography to_frame = pano.frame_to_reference[f].inverse();
    double bx0 = std::numeric_limits<double>::infinity(), by0 = bx0, bx1 = -bx0, by1 = -bx0;
    const double w = img.width - 1, h = img.height - 1;
    for (const Point2 c : {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}}) {
      const Point2 p = pano.frame_to_reference[f].apply(c);
      bx0 = std::min(bx0, p.x);
      by0 = std::min(by0, p.y);
      bx1 = std::max(bx1, p.x);
      by1 = std::max(by1, p.y);
    }
    const int xs = std::max(0, static_cast<int>(std::floor(bx0 - x0)));
    const int ys = std::max(0, static_cast<int>(std::floor(by0 - y0)));
    const int xe = std::min(cw - 1, static_cast<int>(std::ceil(bx1 - x0)));
    const int ye = std::min(ch - 1, static_cast<int>(std::ceil(by1 - y0)));
    for (int y = ys; y <= ye; ++y) {
      for (int x = xs; x <= xe; ++x) {
        const Point2 p = to_frame.apply({x + x0, y + y0});
        if (!img.contains(p.x, p.y)) continue;
        const double border = std::min({p.x, p.y, w - p.x, h - p.y});
        const double wt = std::max(border, 0.0) + 1.0;
        const std::size_t i = static_cast<std::size_t>(y) * cw + x;
        for (int c = 0; c < channels; ++c) {
          const float v = img.bilinear(p.x, p.y, c);
          acc[i * channels + c] += wt * v;
          if (contributors[i] == 0) {
            first[i * channels + c] = v;
          } else {
            const double d = v - first[i * channels + c];
            sq_diff += d * d;
            ++diff_count;
          }
        }
        weight[i] += wt;
        ++contributors[i];
      }
    }
  }

  Image canvas(cw, ch, channels);
  for (std::size_t i = 0; i < n_px; ++i) {
    if (contributors[i] >= 2) ++pano.overlap_pixels;
    if (weight[i] > 0.0) {
      for (int c = 0; c < channels; ++c) canvas.pixels[i * channels + c] = static_cast<float>(acc[i * channels + c] / weight[i]);
    }
  }
  pano.overlap_rms = diff_count ? std::sqrt(sq_diff / diff_count) : 0.0;
  pano.image = std::move(canvas);
  return pano;
}

}  // namespace kpg
