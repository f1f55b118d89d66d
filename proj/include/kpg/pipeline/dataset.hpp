#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/core/log.hpp"
#include "kpg/imaging/io.hpp"
#include "kpg/imaging/transforms.hpp"
#include "kpg/mosaic/homography.hpp"

namespace kpg {

struct Sequence {
  std::string name;
  std::vector<std::string> frames;  // lexicographic order
  // links[k] maps frame k+1 into frame k; empty when not provided.
  std::vector<Homography> links;
};

struct Dataset {
  std::string root;
  std::vector<Sequence> sequences;
  std::vector<std::size_t> train;       // sequence indices
  std::vector<std::size_t> validation;  // sequence indices

  std::vector<std::string> frames_of(const std::vector<std::size_t>& split) const {
    std::vector<std::string> out;
    for (auto s : split) out.insert(out.end(), sequences[s].frames.begin(), sequences[s].frames.end());
    return out;
  }
  std::vector<std::string> train_frames() const { return frames_of(train); }
  std::vector<std::string> validation_frames() const { return frames_of(validation); }
};

// Grayscale conversion then CLAHE with default tiles and clip limit.
inline Image preprocess(const Image& img) { return clahe(ensure_grayscale(img)); }

inline Image load_frame(const std::string& path) { return preprocess(read_image(path)); }

namespace detail {

inline Sequence scan_sequence(const std::filesystem::path& dir, std::string name) {
  namespace fs = std::filesystem;
  Sequence seq{std::move(name), {}, {}};
  std::vector<std::string> candidates;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_path(entry.path().string())) candidates.push_back(entry.path().string());
  }
  std::sort(candidates.begin(), candidates.end());
  bool skipped = false;
  for (const auto& path : candidates) {
    if (probe_image(path)) {
      seq.frames.push_back(path);
    } else {
      warn("skipping unreadable image '" + path + "'");
      skipped = true;
    }
  }
  const fs::path links = dir / "homographies.csv";
  if (fs::exists(links)) {
    try {
      auto hs = read_homographies_csv(links.string());
      if (skipped || hs.size() + 1 != seq.frames.size()) {
        warn("ignoring '" + links.string() + "': it does not line up with the readable frames");
      } else {
        seq.links = std::move(hs);
      }
    } catch (const IoError& e) {
      warn(std::string("ignoring homographies: ") + e.what());
    }
  }
  return seq;
}

}  // namespace detail

// Sequences are the subdirectories of `root` (a root holding images directly
// counts as one sequence). The train/validation split is by sequence: a
// seeded shuffle, then round(5/21 of the sequences) go to validation, the
// rest to training.
inline Dataset load_dataset(const std::string& root, std::uint64_t split_seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset root '" + root + "' is not a directory");
  Dataset ds;
  ds.root = root;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto seq = detail::scan_sequence(d, d.filename().string());
    if (seq.frames.empty()) {
      warn("sequence '" + seq.name + "' has no readable frames");
      continue;
    }
    ds.sequences.push_back(std::move(seq));
  }
  if (ds.sequences.empty()) {
    auto seq = detail::scan_sequence(root, ".");
    if (!seq.frames.empty()) ds.sequences.push_back(std::move(seq));
  }
  if (ds.sequences.empty()) throw IoError("dataset root '" + root + "' holds no readable frames");

  const std::size_t n = ds.sequences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = std::min(n - 1, static_cast<std::size_t>(std::lround(n * 5.0 / 21.0)));
  ds.validation.assign(order.begin(), order.begin() + n_val);
  ds.train.assign(order.begin() + n_val, order.end());
  std::sort(ds.validation.begin(), ds.validation.end());
  std::sort(ds.train.begin(), ds.train.end());
  if (ds.validation.empty()) warn("validation split is empty (" + std::to_string(n) + " sequence(s))");
  return ds;
}

}  // namespace kpg
