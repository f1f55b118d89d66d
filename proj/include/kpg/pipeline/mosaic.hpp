#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kpg/mosaic/panorama.hpp"
#include "kpg/pipeline/dataset.hpp"
#include "kpg/pipeline/evaluate.hpp"

namespace kpg {

struct MosaicOptions {
  EvalOptions matching;
  RansacOptions ransac;
  CompositeOptions composite;
};

// Homography taking `next` into `prev` from NN matches of learned
// descriptors, filtered by RANSAC. Both images must be preprocessed.
template <typename T>
Homography estimate_link(const Model<T>& model, const Image& prev, const Image& next, const MosaicOptions& opt) {
  const std::size_t side = model.patch_side();
  const auto pn = detect_for_model(next, side, opt.matching);
  const auto pp = detect_for_model(prev, side, opt.matching);
  if (pn.size() < 4 || pp.size() < 4) throw EstimationError("too few key-points to estimate a homography");
  const auto gn = describe_keypoints(model, next, pn, opt.matching.cnn_chunk);
  const auto gp = describe_keypoints(model, prev, pp, opt.matching.cnn_chunk);
  const MatchSet matches = opt.matching.match_threshold ? match_nnt(gn, gp, *opt.matching.match_threshold)
                                                        : match_nn(gn, gp);
  std::vector<PointPair> pairs;
  for (const auto& m : matches.pairs) pairs.push_back({pn[m.i], pp[m.j]});
  if (pairs.size() < 4) throw EstimationError("too few matches to estimate a homography");
  return ransac_homography(pairs, opt.ransac);
}

struct MosaicResult {
  Panorama panorama;
  std::vector<Homography> links;
};

// Frames are matched after preprocessing and composited as given.
template <typename T>
MosaicResult mosaic_frames(const Model<T>& model, const std::vector<Image>& frames, const MosaicOptions& opt = {}) {
  if (frames.empty()) throw ContractError("mosaic: no frames");
  MosaicResult r;
  Image prev = preprocess(frames.front());
  for (std::size_t k = 1; k < frames.size(); ++k) {
    Image next = preprocess(frames[k]);
    r.links.push_back(estimate_link(model, prev, next, opt));
    prev = std::move(next);
  }
  r.panorama = composite_panorama(frames, r.links, opt.composite);
  return r;
}

// Accumulated error of an estimated chain against known links: for every
// frame, the largest distance between its corners mapped into frame 0 by the
// two chains. Entry 0 is always 0.
inline std::vector<double> chain_drift(const std::vector<Homography>& estimated, const std::vector<Homography>& known,
                                       int width, int height) {
  if (estimated.size() != known.size()) throw ContractError("chain_drift: link counts differ");
  const auto a = chain_homographies(estimated), b = chain_homographies(known);
  const double w = width - 1, h = height - 1;
  std::vector<double> drift;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double worst = 0.0;
    for (const Point2 c : {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}}) {
      const auto p = a[k].apply(c), q = b[k].apply(c);
      worst = std::max(worst, std::hypot(p.x - q.x, p.y - q.y));
    }
    drift.push_back(worst);
  }
  return drift;
}

}  // namespace kpg
