#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kpg/core/log.hpp"
#include "kpg/detector/harris.hpp"
#include "kpg/imaging/affine.hpp"
#include "kpg/imaging/transforms.hpp"
#include "kpg/pipeline/config.hpp"

namespace kpg {

enum class AugmentationFamily { kRotation, kTranslation, kScale };

inline std::string family_name(AugmentationFamily f) {
  switch (f) {
    case AugmentationFamily::kRotation:
      return "rotation";
    case AugmentationFamily::kTranslation:
      return "translation";
    case AugmentationFamily::kScale:
      return "scale";
  }
  return "?";
}

struct Augmentation {
  AugmentationFamily family = AugmentationFamily::kRotation;
  double parameter = 0.0;  // signed degrees, dx in px, or scale factor
  double parameter2 = 0.0;  // dy for translations
  AffineTransform transform;
};

inline Augmentation make_augmentation(AugmentationFamily family, double p, double p2, Point2 center) {
  Augmentation a{family, p, p2, {}};
  switch (family) {
    case AugmentationFamily::kRotation:
      a.transform = AffineTransform::rotation_deg(p, center);
      break;
    case AugmentationFamily::kTranslation:
      a.transform = AffineTransform::translation(p, p2);
      break;
    case AugmentationFamily::kScale:
      a.transform = AffineTransform::scaling(p, center);
      break;
  }
  return a;
}

// One family uniformly, then one value of it uniformly. Rotations pick a sign;
// translations draw a signed value for each axis. Rotation and scaling act
// about `center`.
inline Augmentation sample_augmentation(std::mt19937_64& rng, const AugmentationSet& set = {}, Point2 center = {}) {
  auto pick = [&](const std::vector<double>& values) {
    return values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)];
  };
  auto sign = [&] { return std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0; };
  const auto family = static_cast<AugmentationFamily>(std::uniform_int_distribution<int>(0, 2)(rng));
  switch (family) {
    case AugmentationFamily::kRotation: {
      const double deg = pick(set.rotations_deg);
      return make_augmentation(family, sign() * deg, 0.0, center);
    }
    case AugmentationFamily::kTranslation: {
      const double dx = sign() * pick(set.translations_px);
      const double dy = sign() * pick(set.translations_px);
      return make_augmentation(family, dx, dy, center);
    }
    case AugmentationFamily::kScale:
      return make_augmentation(family, pick(set.scales), 0.0, center);
  }
  return {};
}

inline Point2 image_center(const Image& img) { return {(img.width - 1) / 2.0, (img.height - 1) / 2.0}; }

// Two graphs over the same key-points: V at the detected positions with
// patches from `frame`, the augmented view at T(p) with patches re-extracted
// from the warped frame. Row i of both views is the same key-point.
struct GraphViews {
  std::vector<Point2> positions;
  std::vector<Patch> patches;
  std::vector<Point2> augmented_positions;
  std::vector<Patch> augmented_patches;
  std::vector<std::pair<std::size_t, std::size_t>> correspondence;

  std::size_t size() const { return positions.size(); }
};

struct ViewOptions {
  std::size_t patch_side = 128;
  std::size_t max_keypoints = 512;
  DetectorOptions detector;

  static ViewOptions from(const TrainConfig& cfg) {
    ViewOptions v;
    v.patch_side = cfg.patch_side;
    v.max_keypoints = cfg.max_keypoints;
    return v;
  }
};

inline DetectorOptions detector_options(const ViewOptions& opt) {
  DetectorOptions d = opt.detector;
  d.max_points = static_cast<int>(opt.max_keypoints);
  d.patch_side = static_cast<int>(opt.patch_side);
  return d;
}

// Key-points whose transformed window leaves the warped frame are dropped
// from both views. Returns nothing (with a warning) when fewer than two
// survive.
inline std::optional<GraphViews> build_graph_views(const Image& frame, const AffineTransform& t,
                                                   const ViewOptions& opt) {
  const int side = static_cast<int>(opt.patch_side);
  const auto kps = detect_corners(frame, detector_options(opt));
  const Image warped = warp_affine(frame, t);
  GraphViews v;
  for (const auto& kp : kps) {
    const Point2 moved = t.apply(kp.position);
    auto original = extract_patch(frame, kp.position, side);
    auto augmented = extract_patch(warped, moved, side);
    if (!original || !augmented) continue;
    const std::size_t i = v.positions.size();
    v.positions.push_back(kp.position);
    v.patches.push_back(std::move(*original));
    v.augmented_positions.push_back(moved);
    v.augmented_patches.push_back(std::move(*augmented));
    v.correspondence.emplace_back(i, i);
  }
  if (v.size() < 2) {
    warn("frame skipped: only " + std::to_string(v.size()) + " key-point(s) survive the augmentation");
    return std::nullopt;
  }
  return v;
}

}  // namespace kpg
