#pragma once

// Flat binary parameter checkpoints.
//
// Layout, all integers unsigned little-endian:
//   magic        8 bytes   "KPGCKPT\0"
//   version      u32       currently 1
//   count        u32       number of records
//   record[count]:
//     name_len   u32
//     name       name_len bytes, UTF-8, no terminator
//     rank       u32
//     extents    rank x u32
//     values     product(extents) x IEEE-754 binary32, little-endian

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "kpg/core/errors.hpp"
#include "kpg/core/tensor.hpp"

namespace kpg {

inline constexpr std::array<char, 8> kCheckpointMagic{'K', 'P', 'G', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (shape_numel(r.shape) != r.values.size()) {
      throw ShapeError("checkpoint record '" + r.name + "' has inconsistent shape");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    detail::put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : r.values) detail::put_f32(out, v);
  }
  return out;
}

inline std::vector<CheckpointRecord> decode_checkpoint(std::string bytes) {
  detail::ByteReader in(std::move(bytes));
  const std::string magic = in.str(kCheckpointMagic.size());
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw IoError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(in.u32());
    r.values.resize(shape_numel(r.shape));
    for (auto& v : r.values) v = in.f32();
    records.push_back(std::move(r));
  }
  if (!in.done()) throw IoError("trailing bytes after checkpoint records");
  return records;
}

inline void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  const std::string bytes = encode_checkpoint(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

template <typename T>
CheckpointRecord to_record(const std::string& name, const Tensor<T>& t) {
  CheckpointRecord r{name, t.shape(), {}};
  r.values.reserve(t.numel());
  for (T v : t.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

}  // namespace kpg
