#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/affine.hpp"
#include "kpg/imaging/image.hpp"
#include "kpg/imaging/io.hpp"
#include "kpg/imaging/transforms.hpp"
#include "kpg/mosaic/homography.hpp"

namespace kpg {

inline constexpr double kDefaultVesselDensity = 1.0;

namespace detail {

struct Stroke {
  std::array<Point2, 4> control;
  double width0 = 1.0;
  double width1 = 1.0;
  double contrast = 0.3;
};

inline Point2 bezier(const std::array<Point2, 4>& c, double t) {
  const double u = 1.0 - t;
  const double a = u * u * u, b = 3 * u * u * t, d = 3 * u * t * t, e = t * t * t;
  return {a * c[0].x + b * c[1].x + d * c[2].x + e * c[3].x, a * c[0].y + b * c[1].y + d * c[2].y + e * c[3].y};
}

// Darkens `shade` (per-pixel fraction of light removed by this stroke) with a
// one-pixel anti-aliased edge. Overlapping samples of one stroke take the max.
inline void stamp_stroke(const Stroke& s, int w, int h, std::vector<float>& shade) {
  double length = 0.0;
  for (int k = 0; k < 3; ++k) length += distance(s.control[k], s.control[k + 1]);
  const int samples = std::max(8, static_cast<int>(length * 2.0));
  for (int n = 0; n <= samples; ++n) {
    const double t = static_cast<double>(n) / samples;
    const Point2 p = bezier(s.control, t);
    const double r = 0.5 * (s.width0 + (s.width1 - s.width0) * t);
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - r - 1))), x1 = std::min(w - 1, static_cast<int>(std::ceil(p.x + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - r - 1))), y1 = std::min(h - 1, static_cast<int>(std::ceil(p.y + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x - p.x, y - p.y);
        const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
        float& v = shade[static_cast<std::size_t>(y) * w + x];
        v = std::max(v, static_cast<float>(s.contrast * cover));
      }
    }
  }
}

}  // namespace detail

// Grayscale stand-in for an endoscopic frame: smooth low-frequency background,
// dark curvilinear "vessels" (random cubic curves, 1-4 px wide, some with side
// branches) and mild Gaussian noise. Deterministic in the seed.
inline Image generate_synthetic_image(std::uint64_t seed, int width, int height,
                                      double vessel_density = kDefaultVesselDensity) {
  if (width < 64 || height < 64) throw ParameterError("synthetic frames must be at least 64x64");
  if (vessel_density < 0.0) throw ParameterError("vessel density must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Image img(width, height, 1);
  // Background: a few long-wavelength cosines around mid-gray.
  const double base = uniform(0.5, 0.65);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 4; ++k) {
    const double wavelength = uniform(120.0, 400.0), angle = uniform(0.0, 2 * std::numbers::pi);
    const double f = 2 * std::numbers::pi / wavelength;
    waves.push_back({f * std::cos(angle), f * std::sin(angle), uniform(0.0, 2 * std::numbers::pi), uniform(0.02, 0.06)});
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = base;
      for (const auto& wv : waves) v += wv.amp * std::cos(wv.kx * x + wv.ky * y + wv.phase);
      img.at(x, y) = static_cast<float>(v);
    }
  }

  // Vessels; the count scales with the frame area.
  const double area_ratio = static_cast<double>(width) * height / (256.0 * 256.0);
  const int trunks = static_cast<int>(std::lround(vessel_density * 7.0 * area_ratio));
  std::vector<float> shade(static_cast<std::size_t>(width) * height, 0.0f);
  std::vector<float> total(shade.size(), 0.0f);
  auto draw = [&](const detail::Stroke& s) {
    std::fill(shade.begin(), shade.end(), 0.0f);
    detail::stamp_stroke(s, width, height, shade);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] = 1.0f - (1.0f - total[i]) * (1.0f - shade[i]);
  };
  for (int t = 0; t < trunks; ++t) {
    detail::Stroke s;
    const double margin = 0.15 * std::max(width, height);
    for (auto& c : s.control) c = {uniform(-margin, width + margin), uniform(-margin, height + margin)};
    s.width0 = uniform(2.0, 4.0);
    s.width1 = uniform(1.0, s.width0);
    s.contrast = uniform(0.2, 0.4);
    draw(s);
    const int branches = static_cast<int>(uniform(1.0, 3.999));
    for (int b = 0; b < branches; ++b) {
      detail::Stroke br;
      const double t0 = uniform(0.1, 0.9);
      const Point2 root = detail::bezier(s.control, t0);
      const double len = uniform(30.0, 90.0), angle = uniform(0.0, 2 * std::numbers::pi);
      const double bend = uniform(-0.8, 0.8);
      br.control[0] = root;
      for (int k = 1; k < 4; ++k) {
        const double a = angle + bend * k / 3.0, r = len * k / 3.0;
        br.control[k] = {root.x + r * std::cos(a), root.y + r * std::sin(a)};
      }
      br.width0 = uniform(1.0, std::max(1.0, s.width0 - 0.5));
      br.width1 = 1.0;
      br.contrast = s.contrast * uniform(0.7, 1.0);
      draw(br);
    }
  }

  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = img.pixels[i] * (1.0 - total[i]) + noise(rng);
    img.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return img;
}

inline Image generate_synthetic_frame(std::uint64_t seed, int size = 256, double vessel_density = kDefaultVesselDensity) {
  return generate_synthetic_image(seed, size, size, vessel_density);
}

// Consecutive frames of a camera drifting over one synthetic scene. links[k]
// maps frame k+1 pixel coordinates into frame k, exactly.
struct SyntheticSequence {
  std::vector<Image> frames;
  std::vector<Homography> links;
};

inline SyntheticSequence generate_synthetic_sequence(std::uint64_t seed, int frame_size, int frames,
                                                     double vessel_density = kDefaultVesselDensity) {
  if (frames < 1) throw ParameterError("a sequence needs at least one frame");
  constexpr double kMaxStep = 12.0, kMaxTurnDeg = 2.0;
  const int scene_size = frame_size + 2 * static_cast<int>(std::ceil(frames * (kMaxStep + 4.0))) + 64;
  const Image scene = generate_synthetic_image(seed, scene_size, scene_size, vessel_density);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double c = (frame_size - 1) / 2.0;
  const Point2 frame_center{c, c};
  double heading = unit(rng) * 2 * std::numbers::pi;
  // scene_to_frame maps scene coordinates into the current frame.
  const double offset = (scene_size - frame_size) / 2.0;
  AffineTransform scene_to_frame = AffineTransform::translation(-offset, -offset);

  auto inside_scene = [&](const AffineTransform& s2f) {
    const AffineTransform f2s = s2f.inverse();
    const double e = frame_size - 1;
    for (const Point2 p : {Point2{0, 0}, Point2{e, 0}, Point2{0, e}, Point2{e, e}}) {
      const Point2 q = f2s.apply(p);
      if (q.x < 1 || q.y < 1 || q.x > scene_size - 2 || q.y > scene_size - 2) return false;
    }
    return true;
  };

  SyntheticSequence seq;
  seq.frames.push_back(warp_affine(scene, scene_to_frame, frame_size, frame_size));
  for (int k = 1; k < frames; ++k) {
    AffineTransform motion;
    for (int attempt = 0;; ++attempt) {
      heading += (unit(rng) - 0.5) * 0.6;
      const double step = 5.0 + (kMaxStep - 5.0) * unit(rng);
      const double turn = (unit(rng) * 2.0 - 1.0) * kMaxTurnDeg;
      // The camera moves by `step` along the heading, so content shifts the other way.
      motion = AffineTransform::translation(-step * std::cos(heading), -step * std::sin(heading))
                   .after(AffineTransform::rotation_deg(turn, frame_center));
      if (inside_scene(motion.after(scene_to_frame))) break;
      heading += std::numbers::pi / 2;
      if (attempt > 16) throw EstimationError("synthetic camera path left the scene");
    }
    scene_to_frame = motion.after(scene_to_frame);
    seq.frames.push_back(warp_affine(scene, scene_to_frame, frame_size, frame_size));
    // frame k -> frame k-1 is the inverse of this step's motion.
    seq.links.push_back(Homography::from_affine(motion.inverse()));
  }
  return seq;
}

namespace detail {
inline std::string zero_pad(std::size_t v, int digits) {
  std::string s = std::to_string(v);
  return std::string(std::max(0, digits - static_cast<int>(s.size())), '0') + s;
}
}  // namespace detail

struct SynthOptions {
  std::size_t frames = 200;
  std::size_t sequence_length = 10;
  int size = 256;
  double vessel_density = kDefaultVesselDensity;
  std::uint64_t seed = 0;
};

// Writes seq_XXX/frame_YYYY.png plus seq_XXX/homographies.csv (row k maps
// frame k+1 into frame k). Returns the number of sequences written.
inline std::size_t write_synthetic_dataset(const std::string& root, const SynthOptions& opt) {
  if (opt.frames == 0 || opt.sequence_length == 0) throw ParameterError("frame and sequence counts must be positive");
  namespace fs = std::filesystem;
  fs::create_directories(root);
  const std::size_t sequences = (opt.frames + opt.sequence_length - 1) / opt.sequence_length;
  std::size_t remaining = opt.frames;
  for (std::size_t s = 0; s < sequences; ++s) {
    const std::size_t n = std::min(opt.sequence_length, remaining);
    remaining -= n;
    const auto seq = generate_synthetic_sequence(opt.seed * 1000003ULL + s, opt.size, static_cast<int>(n),
                                                 opt.vessel_density);
    const fs::path dir = fs::path(root) / ("seq_" + detail::zero_pad(s, 3));
    fs::create_directories(dir);
    for (std::size_t k = 0; k < n; ++k) {
      write_image((dir / ("frame_" + detail::zero_pad(k, 4) + ".png")).string(), seq.frames[k]);
    }
    write_homographies_csv((dir / "homographies.csv").string(), seq.links);
  }
  return sequences;
}

}  // namespace kpg
