#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/pipeline/evaluate.hpp"
#include "kpg/pipeline/train.hpp"

namespace kpg {

enum class AblationAxis { kTau, kMinibatch };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "tau") return AblationAxis::kTau;
  if (s == "minibatch") return AblationAxis::kMinibatch;
  throw ParameterError("unknown ablation axis '" + s + "' (expected tau or minibatch)");
}

inline std::vector<double> default_axis_values(AblationAxis axis) {
  if (axis == AblationAxis::kTau) return {0.06, 0.08, 0.1, 0.12};
  return {5, 10, 15, 20};
}

struct AblationReport {
  AblationAxis axis = AblationAxis::kTau;
  std::vector<double> values;
  std::vector<std::optional<double>> precision;
  std::vector<std::optional<double>> matching_score;
};

// Retrains once per value with the same seed and evaluates every run on the
// same validation warps. The minibatch axis is the number of negatives per
// anchor.
inline AblationReport run_ablation(AblationAxis axis, const std::vector<double>& values,
                                   const std::vector<Image>& train_frames, const std::vector<Image>& val_frames,
                                   const TrainConfig& base, const EvalOptions& eval_opt = {},
                                   const std::function<void(const std::string&)>& progress = {}) {
  if (values.empty()) throw ParameterError("ablation needs at least one value");
  if (val_frames.empty()) throw ContractError("ablation needs validation frames");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < train_frames.size(); ++i) names.push_back("frame_" + std::to_string(i));

  AblationReport report{axis, values, {}, {}};
  for (double v : values) {
    TrainConfig cfg = base;
    if (axis == AblationAxis::kTau) {
      cfg.tau = v;
    } else {
      if (v < 1 || v != std::floor(v)) throw ParameterError("minibatch values must be positive integers");
      cfg.negatives_per_anchor = static_cast<std::size_t>(v);
    }
    const auto trained = train(train_frames, names, cfg);
    std::mt19937_64 rng(base.seed + 7919);
    const auto s = evaluate_augmented(trained.model, val_frames, base.augmentation, rng, eval_opt);
    report.precision.push_back(s.precision());
    report.matching_score.push_back(s.matching_score());
    if (progress) {
      progress("value " + detail::optional_field(v) + ": precision " + detail::optional_field(s.precision()) +
               ", matching score " + detail::optional_field(s.matching_score()));
    }
  }
  return report;
}

// Rows are the metrics, columns the axis values.
inline void write_ablation_csv(const std::string& path, const AblationReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (r.axis == AblationAxis::kTau ? "tau" : "minibatch");
  for (double v : r.values) out << ',' << v;
  out << "\nPrecision";
  for (const auto& p : r.precision) out << ',' << detail::optional_field(p);
  out << "\nMatching Score";
  for (const auto& m : r.matching_score) out << ',' << detail::optional_field(m);
  out << '\n';
}

}  // namespace kpg
