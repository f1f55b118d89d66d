#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/detector/harris.hpp"

namespace kpg {

// CSV with header `x,y,response`.
inline void write_keypoints_csv(const std::string& path, const std::vector<Keypoint>& kps) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "x,y,response\n" << std::setprecision(17);
  for (const auto& k : kps) out << k.position.x << ',' << k.position.y << ',' << k.response << '\n';
}

// Accepts externally produced lists; the result is re-sorted by descending
// response.
inline std::vector<Keypoint> read_keypoints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open key-point file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty key-point file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,response") throw IoError("key-point file '" + path + "' lacks header x,y,response");
  std::vector<Keypoint> kps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    Keypoint k;
    if (!(fields >> k.position.x >> k.position.y >> k.response) || k.response < 0.0) {
      throw IoError("bad key-point record at " + path + ":" + std::to_string(line_no));
    }
    kps.push_back(k);
  }
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  return kps;
}

}  // namespace kpg
