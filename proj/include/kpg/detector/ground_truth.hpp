#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "kpg/detector/harris.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

inline constexpr double kDefaultProjectionError = 5.0;

struct Correspondence {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

// Anything that maps image-a pixel coordinates into image b.
template <typename M>
concept PointMap = requires(const M& m, Point2 p) {
  { m.apply(p) } -> std::convertible_to<Point2>;
};

// For each point of a, the nearest point of b within pe_threshold of its
// projection (ties go to the smaller index). Points without one are absent.
template <PointMap Map>
std::vector<Correspondence> ground_truth_matches(const std::vector<Point2>& a, const std::vector<Point2>& b,
                                                 const Map& map, double pe_threshold = kDefaultProjectionError) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point2 projected = map.apply(a[i]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = distance(projected, b[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best <= pe_threshold) out.push_back({i, best_j, best});
  }
  return out;
}

template <PointMap Map>
std::vector<Correspondence> ground_truth_matches(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                                 const Map& map, double pe_threshold = kDefaultProjectionError) {
  return ground_truth_matches(positions(a), positions(b), map, pe_threshold);
}

}  // namespace kpg
