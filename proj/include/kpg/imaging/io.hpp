#pragma once

// PNG (via libpng's simplified API) and binary PGM (P5) reading/writing.
// Intensities map as byte / 255.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

namespace detail {

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Skips whitespace and '#' comments in a PNM header.
inline int read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int value = -1;
  if (!(in >> value)) throw IoError("malformed PGM header");
  return value;
}

struct PgmHeader {
  int width, height, maxval;
};

inline PgmHeader read_pgm_header(std::istream& in) {
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') throw IoError("not a binary PGM (P5) file");
  PgmHeader h{read_pnm_int(in), read_pnm_int(in), read_pnm_int(in)};
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) throw IoError("invalid PGM header values");
  in.get();  // single whitespace before the raster
  return h;
}

}  // namespace detail

inline Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const auto h = detail::read_pgm_header(in);
  Image img(h.width, h.height, 1);
  const bool wide = h.maxval > 255;
  for (auto& px : img.pixels) {
    unsigned value = 0;
    if (wide) {
      unsigned char b[2];
      if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated PGM raster in '" + path + "'");
      value = (static_cast<unsigned>(b[0]) << 8) | b[1];
    } else {
      char b;
      if (!in.get(b)) throw IoError("truncated PGM raster in '" + path + "'");
      value = static_cast<unsigned char>(b);
    }
    px = std::min(1.0f, static_cast<float>(value) / static_cast<float>(h.maxval));
  }
  return img;
}

inline void write_pgm(const std::string& path, const Image& img) {
  if (img.channels != 1) throw ParameterError("PGM output requires a grayscale image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (float v : img.pixels) out.put(static_cast<char>(detail::to_byte(v)));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read PNG '" + path + "': " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG '" + path + "': " + message);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buffer[i] / 255.0f;
  return img;
}

inline void write_png(const std::string& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(img.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = detail::to_byte(img.pixels[i]);
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path + "': " + png.message);
  }
}

inline bool is_image_path(const std::string& path) {
  const auto ext = detail::lower_extension(path);
  return ext == ".png" || ext == ".pgm";
}

// Dispatches on extension (.png / .pgm).
inline Image read_image(const std::string& path) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw IoError("unsupported image extension '" + ext + "'");
}

inline void write_image(const std::string& path, const Image& img) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".pgm") return write_pgm(path, img);
  throw IoError("unsupported image extension '" + ext + "'");
}

// Reads only the header; returns extents or nothing if unreadable.
inline std::optional<std::pair<int, int>> probe_image(const std::string& path) {
  const auto ext = detail::lower_extension(path);
  try {
    if (ext == ".png") {
      png_image png{};
      png.version = PNG_IMAGE_VERSION;
      if (!png_image_begin_read_from_file(&png, path.c_str())) return std::nullopt;
      std::pair<int, int> dims{static_cast<int>(png.width), static_cast<int>(png.height)};
      png_image_free(&png);
      return dims;
    }
    if (ext == ".pgm") {
      std::ifstream in(path, std::ios::binary);
      if (!in) return std::nullopt;
      const auto h = detail::read_pgm_header(in);
      const auto raster_start = in.tellg();
      in.seekg(0, std::ios::end);
      const auto raster = static_cast<std::streamoff>(h.width) * h.height * (h.maxval > 255 ? 2 : 1);
      if (in.tellg() - raster_start < raster) return std::nullopt;
      return std::pair{h.width, h.height};
    }
  } catch (const IoError&) {
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace kpg
