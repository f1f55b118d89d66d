#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpg/core/errors.hpp"
#include "kpg/model/contrastive.hpp"

namespace kpg {

struct AugmentationSet {
  std::vector<double> rotations_deg{5, 10, 15};
  std::vector<double> translations_px{4, 6, 8, 10};
  std::vector<double> scales{0.9, 0.95, 1.05, 1.1, 1.15};
};

struct TrainConfig {
  std::size_t patch_side = 128;
  std::size_t max_keypoints = 512;
  double tau = 0.08;
  std::size_t negatives_per_anchor = 10;
  double learning_rate = 5e-4;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  AugmentationSet augmentation;
  // Desk-scale defaults: 32 px patches, 64 key-points per view.
  bool toy_mode = false;

  // Not part of the method; run bookkeeping.
  std::size_t checkpoint_every = 500;
  bool include_positive_in_denominator = false;

  static TrainConfig toy() {
    TrainConfig c;
    c.toy_mode = true;
    c.patch_side = 32;
    c.max_keypoints = 64;
    return c;
  }

  ContrastiveConfig contrastive() const { return {tau, negatives_per_anchor, include_positive_in_denominator}; }

  void validate() const {
    if (patch_side == 0 || patch_side % 16 != 0) throw ParameterError("patch_side must be a positive multiple of 16");
    if (max_keypoints < 2) throw ParameterError("max_keypoints must be at least 2");
    if (!(tau > 0.0)) throw ParameterError("tau must be positive");
    if (negatives_per_anchor == 0) throw ParameterError("negatives_per_anchor must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    if (epochs == 0) throw ParameterError("epochs must be positive");
    if (checkpoint_every == 0) throw ParameterError("checkpoint_every must be positive");
    const auto& a = augmentation;
    if (a.rotations_deg.empty() || a.translations_px.empty() || a.scales.empty()) {
      throw ParameterError("augmentation lists must be nonempty");
    }
    for (double v : a.rotations_deg) {
      if (!(v > 0.0)) throw ParameterError("rotation angles must be positive");
    }
    for (double v : a.translations_px) {
      if (!(v > 0.0)) throw ParameterError("translations must be positive");
    }
    for (double v : a.scales) {
      if (!(v > 0.0)) throw ParameterError("scale factors must be positive");
    }
  }
};

inline void to_json(nlohmann::json& j, const AugmentationSet& a) {
  j = {{"rotations_deg", a.rotations_deg}, {"translations_px", a.translations_px}, {"scales", a.scales}};
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"patch_side", c.patch_side},
       {"max_keypoints", c.max_keypoints},
       {"tau", c.tau},
       {"negatives_per_anchor", c.negatives_per_anchor},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"augmentation", c.augmentation},
       {"toy_mode", c.toy_mode},
       {"checkpoint_every", c.checkpoint_every},
       {"include_positive_in_denominator", c.include_positive_in_denominator}};
}

// Missing keys keep their defaults (the toy defaults when toy_mode is set);
// unknown keys are rejected so that typos do not pass silently.
inline TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  static const std::vector<std::string> known{"patch_side", "max_keypoints", "tau", "negatives_per_anchor",
                                              "learning_rate", "epochs", "seed", "augmentation", "toy_mode",
                                              "checkpoint_every", "include_positive_in_denominator"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParameterError("unknown config field '" + key + "'");
    }
  }
  TrainConfig c = j.value("toy_mode", false) ? TrainConfig::toy() : TrainConfig{};
  try {
    c.patch_side = j.value("patch_side", c.patch_side);
    c.max_keypoints = j.value("max_keypoints", c.max_keypoints);
    c.tau = j.value("tau", c.tau);
    c.negatives_per_anchor = j.value("negatives_per_anchor", c.negatives_per_anchor);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.include_positive_in_denominator = j.value("include_positive_in_denominator", c.include_positive_in_denominator);
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      c.augmentation.rotations_deg = a.value("rotations_deg", c.augmentation.rotations_deg);
      c.augmentation.translations_px = a.value("translations_px", c.augmentation.translations_px);
      c.augmentation.scales = a.value("scales", c.augmentation.scales);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const std::string& path, const TrainConfig& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << nlohmann::json(c).dump(2) << '\n';
}

}  // namespace kpg
