#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/affine.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

struct PointPair {
  Point2 src;
  Point2 dst;
};

// 3x3 projective map, scaled so H(2,2) == 1 whenever that entry is nonzero.
class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& h) : h_(h) { normalize(); }

  static Homography from_affine(const AffineTransform& t) {
    const auto& m = t.matrix();
    Eigen::Matrix3d h;
    h << m[0], m[1], m[2], m[3], m[4], m[5], 0, 0, 1;
    return Homography(h);
  }

  const Eigen::Matrix3d& matrix() const { return h_; }

  Point2 apply(const Point2& p) const {
    const Eigen::Vector3d q = h_ * Eigen::Vector3d(p.x, p.y, 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
  }

  bool invertible() const { return std::abs(h_.determinant()) > 1e-12; }

  Homography inverse() const {
    if (!invertible()) throw DegenerateError("homography is singular");
    return Homography(h_.inverse());
  }

  // (this * other)(p) = this(other(p)).
  Homography operator*(const Homography& other) const { return Homography(h_ * other.h_); }

  std::vector<std::size_t> inliers;

 private:
  void normalize() {
    if (std::abs(h_(2, 2)) > 1e-12) h_ /= h_(2, 2);
  }

  Eigen::Matrix3d h_;
};

namespace detail {

// Similarity transform moving the centroid to the origin with mean distance
// sqrt(2).
inline Eigen::Matrix3d hartley_normalizer(const std::vector<Point2>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  if (mean_dist < 1e-12) throw DegenerateError("dlt: all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline bool collinear(const Point2& a, const Point2& b, const Point2& c, double tol) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({distance(a, b), distance(a, c), distance(b, c), 1e-12});
  return std::abs(cross) / scale < tol;
}

}  // namespace detail

// True when some three of the given points are (nearly) collinear.
inline bool has_collinear_triple(const std::vector<Point2>& pts, double tol = 1e-6) {
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      for (std::size_t c = b + 1; c < pts.size(); ++c) {
        if (detail::collinear(pts[a], pts[b], pts[c], tol)) return true;
      }
    }
  }
  return false;
}

// Least-squares homography src -> dst by the normalized DLT: Hartley
// normalization of both point sets, right singular vector of the smallest
// singular value, then denormalization.
inline Homography dlt_homography(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 4) throw ContractError("dlt_homography needs at least 4 correspondences");
  std::vector<Point2> src, dst;
  for (const auto& p : pairs) {
    src.push_back(p.src);
    dst.push_back(p.dst);
  }
  if (pairs.size() == 4 && (has_collinear_triple(src) || has_collinear_triple(dst))) {
    throw DegenerateError("dlt_homography: three of four points are collinear");
  }
  const Eigen::Matrix3d ts = detail::hartley_normalizer(src);
  const Eigen::Matrix3d td = detail::hartley_normalizer(dst);

  Eigen::MatrixXd a(2 * pairs.size(), 9);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(src[k].x, src[k].y, 1.0);
    const Eigen::Vector3d d = td * Eigen::Vector3d(dst[k].x, dst[k].y, 1.0);
    const double x = s.x() / s.z(), y = s.y() / s.z(), u = d.x() / d.z(), v = d.y() / d.z();
    a.row(2 * k) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * k + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) <= 1e-12 * std::max(1.0, sv(0))) {
    throw DegenerateError("dlt_homography: rank-deficient point configuration");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  Homography out(full);
  if (!out.invertible()) throw DegenerateError("dlt_homography: estimated matrix is singular");
  out.inliers.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) out.inliers[k] = k;
  return out;
}

inline double reprojection_error(const Homography& h, const PointPair& p) { return distance(h.apply(p.src), p.dst); }

struct RansacOptions {
  int iterations = 2000;
  double inlier_threshold_px = 3.0;
  std::uint64_t seed = 0;
};

// Classic RANSAC over minimal 4-point samples. The random draws depend only
// on the seed and the number of pairs. The best sample model is refit on its
// inliers; the refit is kept when it does not lose inliers.
inline Homography ransac_homography(const std::vector<PointPair>& pairs, const RansacOptions& opt = {}) {
  if (pairs.size() < 4) throw ContractError("ransac_homography needs at least 4 correspondences");
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

  auto inliers_of = [&](const Homography& h) {
    std::vector<std::size_t> in;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double e = reprojection_error(h, pairs[k]);
      if (std::isfinite(e) && e <= opt.inlier_threshold_px) in.push_back(k);
    }
    return in;
  };

  Homography best;
  std::vector<std::size_t> best_inliers;
  bool found = false;
  for (int it = 0; it < opt.iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t s = 0; s < 4; ++s) {
      do {
        idx[s] = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + s, idx[s]) != idx.begin() + s);
    }
    std::vector<PointPair> sample;
    for (auto k : idx) sample.push_back(pairs[k]);
    Homography h;
    try {
      h = dlt_homography(sample);
    } catch (const DegenerateError&) {
      continue;
    }
    auto in = inliers_of(h);
    if (in.size() > best_inliers.size()) {
      best = h;
      best_inliers = std::move(in);
      found = true;
    }
  }
  if (!found || best_inliers.size() < 4) throw EstimationError("ransac_homography: no model with at least 4 inliers");

  std::vector<PointPair> support;
  for (auto k : best_inliers) support.push_back(pairs[k]);
  try {
    Homography refit = dlt_homography(support);
    auto refit_inliers = inliers_of(refit);
    if (refit_inliers.size() >= best_inliers.size()) {
      best = refit;
      best_inliers = std::move(refit_inliers);
    }
  } catch (const DegenerateError&) {
  }
  best.inliers = std::move(best_inliers);
  return best;
}

// One line per homography: 9 entries, row-major.
inline void write_homographies_csv(const std::string& path, const std::vector<Homography>& hs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "h00,h01,h02,h10,h11,h12,h20,h21,h22\n" << std::setprecision(17);
  for (const auto& h : hs) {
    const auto& m = h.matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << m(r, c) << (r == 2 && c == 2 ? '\n' : ',');
    }
  }
}

inline std::vector<Homography> read_homographies_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("h00", 0) != 0) throw IoError("'" + path + "' lacks the h00..h22 header");
  std::vector<Homography> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    Eigen::Matrix3d m;
    std::string field;
    for (int k = 0; k < 9; ++k) {
      if (!std::getline(ss, field, ',')) throw IoError("'" + path + "': expected 9 values per row");
      try {
        m(k / 3, k % 3) = std::stod(field);
      } catch (const std::exception&) {
        throw IoError("'" + path + "': bad number '" + field + "'");
      }
    }
    out.emplace_back(m);
  }
  return out;
}

}  // namespace kpg
