#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/log.hpp"
#include "kpg/detector/harris.hpp"
#include "kpg/matcher/matcher.hpp"
#include "kpg/model/model.hpp"
#include "kpg/mosaic/homography.hpp"
#include "kpg/pipeline/dataset.hpp"
#include "kpg/pipeline/views.hpp"

namespace kpg {

struct EvalOptions {
  std::size_t max_keypoints = 512;
  double projection_error = kDefaultProjectionError;
  // NN matching when unset, NNT otherwise.
  std::optional<double> match_threshold;
  DetectorOptions detector;
  std::size_t cnn_chunk = 64;
};

// Descriptors of one image's key-points: eval-mode CNN in chunks, then the GNN
// over all of them. Returns the [N x 128] global features.
template <typename T>
Tensor<T> describe_keypoints(const Model<T>& model, const Image& img, const std::vector<Point2>& points,
                             std::size_t chunk = 64) {
  if (points.empty()) throw ContractError("describe_keypoints: no key-points");
  NoGradGuard no_grad;
  const std::size_t side = model.patch_side();
  std::vector<Tensor<T>> parts;
  for (std::size_t start = 0; start < points.size(); start += chunk) {
    std::vector<Patch> patches;
    for (std::size_t k = start; k < std::min(points.size(), start + chunk); ++k) {
      auto p = extract_patch(img, points[k], static_cast<int>(side));
      if (!p) throw ContractError("describe_keypoints: patch window leaves the image");
      patches.push_back(std::move(*p));
    }
    parts.push_back(cnn_forward(patches_to_tensor<T>(patches, side), model.cnn));
  }
  Tensor<T> visual = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) visual = concat_rows(visual, parts[k]);
  KeypointGraph<T> g;
  g.positions = points;
  g.image_size = {img.width, img.height};
  g.visual = visual;
  gnn_forward(g, model.gnn);
  return g.global;
}

inline std::vector<Point2> detect_for_model(const Image& img, std::size_t patch_side, const EvalOptions& opt) {
  DetectorOptions d = opt.detector;
  d.max_points = static_cast<int>(opt.max_keypoints);
  d.patch_side = static_cast<int>(patch_side);
  return positions(detect_corners(img, d));
}

// True when the whole patch window around p lands inside a width x height
// image after `map`.
template <PointMap Map>
bool window_maps_inside(const Point2& p, int side, const Map& map, int width, int height) {
  const auto [x0, y0] = patch_origin(p, side);
  const double x1 = x0 + side - 1, y1 = y0 + side - 1;
  for (const Point2 c : {Point2{double(x0), double(y0)}, Point2{x1, double(y0)}, Point2{double(x0), y1}, Point2{x1, y1}}) {
    const Point2 q = map.apply(c);
    if (!(q.x >= 0 && q.y >= 0 && q.x <= width - 1 && q.y <= height - 1)) return false;
  }
  return true;
}

struct PairEvaluation {
  std::size_t detected_a = 0;
  std::size_t detected_b = 0;
  std::size_t retrieved = 0;
  std::size_t correct = 0;
  std::optional<double> precision;
  double matching_score = 0.0;
};

// Matches key-points of `a` against those of `b`, where `a_to_b` is the exact
// pixel map between the two images. Only key-points whose patch window is
// visible in the other image take part. A match is correct when the
// projected a-point lies within the projection-error bound of its partner.
template <typename T>
PairEvaluation evaluate_pair(const Model<T>& model, const Image& a, const Image& b, const Homography& a_to_b,
                             const EvalOptions& opt = {}) {
  const int side = static_cast<int>(model.patch_side());
  const Homography b_to_a = a_to_b.inverse();
  std::vector<Point2> pa, pb;
  for (const auto& p : detect_for_model(a, side, opt)) {
    if (window_maps_inside(p, side, a_to_b, b.width, b.height)) pa.push_back(p);
  }
  for (const auto& p : detect_for_model(b, side, opt)) {
    if (window_maps_inside(p, side, b_to_a, a.width, a.height)) pb.push_back(p);
  }
  PairEvaluation r;
  r.detected_a = pa.size();
  r.detected_b = pb.size();
  if (pa.empty() || pb.empty()) return r;

  const auto ga = describe_keypoints(model, a, pa, opt.cnn_chunk);
  const auto gb = describe_keypoints(model, b, pb, opt.cnn_chunk);
  MatchSet matches = opt.match_threshold ? match_nnt(ga, gb, *opt.match_threshold) : match_nn(ga, gb);
  for (auto& m : matches.pairs) m.correct = distance(a_to_b.apply(pa[m.i]), pb[m.j]) <= opt.projection_error;
  r.retrieved = matches.size();
  r.correct = matches.correct_count();
  if (r.retrieved > 0) r.precision = static_cast<double>(r.correct) / r.retrieved;
  r.matching_score = matching_score(matches, pa.size(), pb.size());
  return r;
}

// Pooled precision (all correct over all retrieved) and mean per-pair
// matching score.
struct EvalSummary {
  std::size_t pairs = 0;
  std::size_t retrieved = 0;
  std::size_t correct = 0;
  double matching_score_sum = 0.0;

  void add(const PairEvaluation& e) {
    if (e.detected_a == 0 || e.detected_b == 0) return;
    ++pairs;
    retrieved += e.retrieved;
    correct += e.correct;
    matching_score_sum += e.matching_score;
  }
  std::optional<double> precision() const {
    if (retrieved == 0) return std::nullopt;
    return static_cast<double>(correct) / retrieved;
  }
  std::optional<double> matching_score() const {
    if (pairs == 0) return std::nullopt;
    return matching_score_sum / pairs;
  }
};

// Each frame against a copy of itself warped by one augmentation drawn from
// `rng`.
template <typename T>
EvalSummary evaluate_augmented(const Model<T>& model, const std::vector<Image>& frames, const AugmentationSet& set,
                               std::mt19937_64& rng, const EvalOptions& opt = {}) {
  EvalSummary s;
  for (const auto& f : frames) {
    const auto aug = sample_augmentation(rng, set, image_center(f));
    s.add(evaluate_pair(model, f, warp_affine(f, aug.transform), Homography::from_affine(aug.transform), opt));
  }
  return s;
}

struct ReportRow {
  std::string suite;
  std::string transform;
  std::string parameter;
  EvalSummary summary;
};

// Every frame under every listed transform, one family at a time, then under
// horizontal motion blur (geometry unchanged).
template <typename T>
std::vector<ReportRow> individual_suite(const Model<T>& model, const std::vector<Image>& frames,
                                        const AugmentationSet& set, const EvalOptions& opt = {},
                                        const std::vector<int>& blur_kernels = {3, 5, 10, 15}) {
  std::vector<ReportRow> rows;
  auto run = [&](AugmentationFamily family, double p, double p2, const std::string& label) {
    ReportRow row{"individual", family_name(family), label, {}};
    for (const auto& f : frames) {
      const auto aug = make_augmentation(family, p, p2, image_center(f));
      row.summary.add(
          evaluate_pair(model, f, warp_affine(f, aug.transform), Homography::from_affine(aug.transform), opt));
    }
    rows.push_back(std::move(row));
  };
  auto fmt = [](double v) {
    std::ostringstream o;
    o << v;
    return o.str();
  };
  for (double d : set.rotations_deg) run(AugmentationFamily::kRotation, d, 0.0, fmt(d));
  for (double t : set.translations_px) run(AugmentationFamily::kTranslation, t, t, fmt(t));
  for (double s : set.scales) run(AugmentationFamily::kScale, s, 0.0, fmt(s));
  for (int k : blur_kernels) {
    ReportRow row{"individual", "blur", std::to_string(k), {}};
    for (const auto& f : frames) row.summary.add(evaluate_pair(model, f, motion_blur(f, k), Homography(), opt));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Consecutive frames of each sequence with known inter-frame homographies.
// Sequences without them are skipped with a warning.
template <typename T>
std::vector<ReportRow> viewpoint_suite(const Model<T>& model, const Dataset& ds,
                                       const std::vector<std::size_t>& split, const EvalOptions& opt = {}) {
  std::vector<ReportRow> rows;
  ReportRow all{"viewpoint", "consecutive", "all", {}};
  for (auto s : split) {
    const auto& seq = ds.sequences[s];
    if (seq.frames.size() < 2) continue;
    if (seq.links.empty()) {
      warn("sequence '" + seq.name + "' has no homographies.csv; skipped in the viewpoint suite");
      continue;
    }
    ReportRow row{"viewpoint", "consecutive", seq.name, {}};
    Image prev = load_frame(seq.frames[0]);
    for (std::size_t k = 0; k + 1 < seq.frames.size(); ++k) {
      Image next = load_frame(seq.frames[k + 1]);
      const auto e = evaluate_pair(model, next, prev, seq.links[k], opt);
      row.summary.add(e);
      all.summary.add(e);
      prev = std::move(next);
    }
    rows.push_back(std::move(row));
  }
  rows.push_back(std::move(all));
  return rows;
}

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "suite,transform,parameter,pairs,retrieved,correct,precision,matching_score\n" << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.suite << ',' << r.transform << ',' << r.parameter << ',' << r.summary.pairs << ','
        << r.summary.retrieved << ',' << r.summary.correct << ',' << detail::optional_field(r.summary.precision())
        << ',' << detail::optional_field(r.summary.matching_score()) << '\n';
  }
}

}  // namespace kpg
