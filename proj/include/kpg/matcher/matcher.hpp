#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kpg/core/tensor.hpp"
#include "kpg/detector/ground_truth.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

struct Match {
  std::size_t i = 0;  // index in image a
  std::size_t j = 0;  // index in image b
  double distance = 0.0;
  std::optional<bool> correct;
};

// Candidate correspondences, at most one per index of image a, kept in
// ascending order of i.
struct MatchSet {
  std::vector<Match> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::vector<Match> sorted_by_distance() const {
    auto out = pairs;
    std::stable_sort(out.begin(), out.end(), [](const Match& a, const Match& b) { return a.distance < b.distance; });
    return out;
  }

  std::size_t correct_count() const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const Match& m) { return m.correct.value_or(false); }));
  }
};

// Nearest neighbour in Euclidean distance for every row of `a` among the rows
// of `b`; ties go to the smaller index.
template <typename T>
MatchSet match_nn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("match_nn: descriptor sets must be matrices");
  if (a.dim(1) != b.dim(1)) throw ShapeError("match_nn: descriptor dimensions differ");
  const std::size_t na = a.dim(0), nb = b.dim(0), d = a.dim(1);
  MatchSet out;
  out.pairs.reserve(na);
  for (std::size_t i = 0; i < na; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < nb; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(a[i * d + k]) - static_cast<double>(b[j * d + k]);
        sq += diff * diff;
      }
      if (sq < best) {
        best = sq;
        best_j = j;
      }
    }
    out.pairs.push_back({i, best_j, std::sqrt(best), std::nullopt});
  }
  return out;
}

// NN matches whose distance is strictly below `threshold`.
inline MatchSet filter_by_threshold(const MatchSet& nn, double threshold) {
  if (threshold < 0.0) throw ParameterError("match threshold must be non-negative");
  MatchSet out;
  for (const auto& m : nn.pairs) {
    if (m.distance < threshold) out.pairs.push_back(m);
  }
  return out;
}

template <typename T>
MatchSet match_nnt(const Tensor<T>& a, const Tensor<T>& b, double threshold) {
  if (threshold < 0.0) throw ParameterError("match threshold must be non-negative");
  return filter_by_threshold(match_nn(a, b), threshold);
}

// Sets each pair's correctness flag from the ground-truth correspondences.
inline void mark_correctness(MatchSet& matches, const std::vector<Correspondence>& ground_truth) {
  std::set<std::pair<std::size_t, std::size_t>> truth;
  for (const auto& c : ground_truth) truth.insert({c.a, c.b});
  for (auto& m : matches.pairs) m.correct = truth.contains({m.i, m.j});
}

struct PrecisionRecall {
  std::optional<double> precision;  // none when nothing was retrieved
  std::optional<double> recall;     // none when the ground truth is empty
  std::optional<double> one_minus_precision;
  std::size_t correct = 0;
  std::size_t retrieved = 0;
  std::size_t ground_truth = 0;
};

// precision = correct / retrieved, recall = correct / |ground truth|. Marks
// the correctness flags of `matches` as a side effect.
inline PrecisionRecall precision_recall(MatchSet& matches, const std::vector<Correspondence>& ground_truth) {
  mark_correctness(matches, ground_truth);
  PrecisionRecall pr;
  pr.correct = matches.correct_count();
  pr.retrieved = matches.size();
  pr.ground_truth = ground_truth.size();
  if (pr.retrieved > 0) {
    pr.precision = static_cast<double>(pr.correct) / pr.retrieved;
    pr.one_minus_precision = 1.0 - *pr.precision;
  }
  if (pr.ground_truth > 0) pr.recall = static_cast<double>(pr.correct) / pr.ground_truth;
  return pr;
}

// Correct matches over the smaller detection count. Uses the pairs'
// correctness flags.
inline double matching_score(const MatchSet& matches, std::size_t detected_a, std::size_t detected_b) {
  if (detected_a == 0 || detected_b == 0) throw ContractError("matching_score: detection counts must be positive");
  return std::min(1.0, static_cast<double>(matches.correct_count()) / std::min(detected_a, detected_b));
}

struct CurveRow {
  double threshold = 0.0;
  std::optional<double> recall;
  std::optional<double> one_minus_precision;
  std::size_t retrieved = 0;
  std::size_t correct = 0;
};

// One NNT evaluation per threshold; thresholds must be ascending.
template <typename T>
std::vector<CurveRow> curve_sweep(const Tensor<T>& a, const Tensor<T>& b, const std::vector<Correspondence>& ground_truth,
                                  const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ParameterError("curve_sweep: thresholds must be sorted ascending");
  }
  const MatchSet nn = match_nn(a, b);
  std::vector<CurveRow> rows;
  for (double t : thresholds) {
    MatchSet kept = filter_by_threshold(nn, t);
    const auto pr = precision_recall(kept, ground_truth);
    rows.push_back({t, pr.recall, pr.one_minus_precision, pr.retrieved, pr.correct});
  }
  return rows;
}

namespace detail {
inline std::string optional_field(const std::optional<double>& v) {
  if (!v) return "nan";
  std::ostringstream oss;
  oss << std::setprecision(10) << *v;
  return oss.str();
}
}  // namespace detail

// `i,x_a,y_a,j,x_b,y_b,distance,correct`; correct is 1/0, or empty without
// ground truth.
inline void write_matches_csv(const std::string& path, const MatchSet& matches, const std::vector<Point2>& points_a,
                              const std::vector<Point2>& points_b) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "i,x_a,y_a,j,x_b,y_b,distance,correct\n" << std::setprecision(10);
  for (const auto& m : matches.pairs) {
    const auto& pa = points_a.at(m.i);
    const auto& pb = points_b.at(m.j);
    out << m.i << ',' << pa.x << ',' << pa.y << ',' << m.j << ',' << pb.x << ',' << pb.y << ',' << m.distance << ',';
    if (m.correct) out << (*m.correct ? 1 : 0);
    out << '\n';
  }
}

// `threshold,recall,one_minus_precision`; undefined values are written as nan.
inline void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "threshold,recall,one_minus_precision\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.threshold << ',' << detail::optional_field(r.recall) << ',' << detail::optional_field(r.one_minus_precision)
        << '\n';
  }
}

}  // namespace kpg
