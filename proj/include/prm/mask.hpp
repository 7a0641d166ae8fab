#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prm/tensor.hpp"

namespace prm {

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height_(h), width_(w), bits_(h * w, 0) {}
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits) : height_(h), width_(w), bits_(std::move(bits)) {
    if (bits_.size() != h * w) throw ShapeError("mask: bit count does not match dims");
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool empty() const { return area() == 0; }

  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * width_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { bits_[i * width_ + j] = v ? 1 : 0; }
  bool at(std::size_t k) const { return bits_[k] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t area() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline void require_same_dims(const BinaryMask& a, std::size_t h, std::size_t w, const char* what) {
  if (a.height() != h || a.width() != w) {
    throw ShapeError(std::string(what) + ": mask " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs " + std::to_string(h) + "x" + std::to_string(w));
  }
}

namespace detail {

// 3x3 cross structuring element; pixels outside the image count as background.
inline BinaryMask cross_morph(const BinaryMask& m, bool dilate) {
  const std::size_t H = m.height(), W = m.width();
  BinaryMask out(H, W);
  auto get = [&](long i, long j) {
    if (i < 0 || j < 0 || i >= static_cast<long>(H) || j >= static_cast<long>(W)) return false;
    return m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  };
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const long a = static_cast<long>(i), b = static_cast<long>(j);
      const bool n[5] = {get(a, b), get(a - 1, b), get(a + 1, b), get(a, b - 1), get(a, b + 1)};
      bool v = dilate ? false : true;
      for (bool x : n) v = dilate ? (v || x) : (v && x);
      out.set(i, j, v);
    }
  return out;
}

}  // namespace detail

inline BinaryMask dilate(const BinaryMask& m) { return detail::cross_morph(m, true); }
inline BinaryMask erode(const BinaryMask& m) { return detail::cross_morph(m, false); }

/// Contour band: dilation minus erosion.
inline BinaryMask morph_gradient(const BinaryMask& m) {
  const BinaryMask d = dilate(m), e = erode(m);
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j) out.set(i, j, d(i, j) && !e(i, j));
  return out;
}

/// |A n B| / |A u B|, zero when both are empty.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(b, a.height(), a.width(), "mask_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    inter += a.at(k) && b.at(k);
    uni += a.at(k) || b.at(k);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Sum of plane values over mask pixels.
inline double masked_sum(std::span<const double> plane, const BinaryMask& m) {
  if (plane.size() != m.size()) throw ShapeError("masked_sum: plane size does not match mask");
  double s = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m.at(k)) s += plane[k];
  return s;
}

}  // namespace prm
