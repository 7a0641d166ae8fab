#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prm/io/files.hpp"
#include "prm/mask.hpp"
#include "prm/tensor.hpp"

namespace prm::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

inline std::string encode_pgm(const GrayImage& img) {
  if (img.pixels.size() != img.height * img.width) throw FormatError("pgm: pixel count does not match dims");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline GrayImage decode_pgm(const std::string& bytes, const std::string& what = "pgm") {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos, v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    if (pos == start) throw FormatError(what + ": malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError(what + ": not a binary PGM");
  pos = 2;
  GrayImage img;
  img.width = number();
  img.height = number();
  if (number() != 255) throw FormatError(what + ": only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError(what + ": malformed header");
  ++pos;
  if (bytes.size() - pos != img.width * img.height)
    throw FormatError(what + ": expected " + std::to_string(img.width * img.height) + " pixels, found " +
                      std::to_string(bytes.size() - pos));
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) { atomic_write(path, encode_pgm(img)); }
inline GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path), path.string()); }

/// Channels are stacked vertically: a C x H x W tensor becomes a (C*H) x W PGM. Values are
/// clamped to [0,1] and rounded to the nearest 1/255.
inline GrayImage image_to_gray(const Tensor& t) {
  GrayImage g{t.channels() * t.height(), t.width(), {}};
  g.pixels.reserve(t.size());
  for (double v : t.data()) g.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return g;
}

inline Tensor gray_to_image(const GrayImage& g, std::size_t channels) {
  if (channels == 0 || g.height % channels != 0)
    throw FormatError("pgm: height " + std::to_string(g.height) + " is not a multiple of " + std::to_string(channels));
  Tensor t(channels, g.height / channels, g.width);
  auto d = t.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<double>(g.pixels[k]) / 255.0;
  return t;
}

inline GrayImage mask_to_gray(const BinaryMask& m) {
  GrayImage g{m.height(), m.width(), {}};
  g.pixels.reserve(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) g.pixels.push_back(m.at(k) ? 255 : 0);
  return g;
}

inline BinaryMask gray_to_mask(const GrayImage& g, const std::string& what = "mask") {
  BinaryMask m(g.height, g.width);
  for (std::size_t k = 0; k < g.pixels.size(); ++k) {
    if (g.pixels[k] != 0 && g.pixels[k] != 255) throw FormatError(what + ": mask pixels must be 0 or 255");
    if (g.pixels[k]) m.set(k / g.width, k % g.width, true);
  }
  return m;
}

/// Min-max scaled rendering of a single plane, for inspection only.
inline GrayImage plane_to_gray(const Tensor& plane) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (double v : plane.data()) {
    lo = first ? v : std::min(lo, v);
    hi = first ? v : std::max(hi, v);
    first = false;
  }
  GrayImage g{plane.channels() * plane.height(), plane.width(), {}};
  for (double v : plane.data())
    g.pixels.push_back(hi > lo ? static_cast<std::uint8_t>(std::lround((v - lo) / (hi - lo) * 255.0)) : 0);
  return g;
}

}  // namespace prm::io
