#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prm/mask.hpp"
#include "prm/metrics.hpp"
#include "prm/retrieval.hpp"
#include "prm/tensor.hpp"
#include "prm/train.hpp"

namespace prm {

struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::size_t count = 500;
  std::size_t image_size = 64;
  std::size_t num_classes = 3;
  std::size_t max_instances = 3;
  std::size_t min_extent = 0;  // blob side range in pixels; 0 picks image_size / 9
  std::size_t max_extent = 0;  // 0 picks image_size / 5
};

inline std::size_t min_blob_extent(const SyntheticConfig& cfg) {
  return cfg.min_extent ? cfg.min_extent : std::max<std::size_t>(3, cfg.image_size / 9);
}
inline std::size_t max_blob_extent(const SyntheticConfig& cfg) {
  return std::max(min_blob_extent(cfg), cfg.max_extent ? cfg.max_extent : cfg.image_size / 5);
}

/// One generated image with its annotations. Pixel values are multiples of 1/255 so the
/// image survives an 8-bit PGM round trip exactly.
struct SyntheticSample {
  std::uint64_t seed = 0;
  Tensor image;
  EvalSample truth;
};

class InfeasibleLayout : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// RGB signature of a class: evenly spaced hues at high saturation.
inline std::array<double, 3> class_color(std::size_t c, std::size_t num_classes) {
  const double h = 6.0 * static_cast<double>(c) / static_cast<double>(num_classes);
  const double v = 0.9, s = 0.8;
  const double chroma = v * s, x = chroma * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0)), m = v - chroma;
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h) % 6) {
    case 0: rgb = {chroma, x, 0}; break;
    case 1: rgb = {x, chroma, 0}; break;
    case 2: rgb = {0, chroma, x}; break;
    case 3: rgb = {0, x, chroma}; break;
    case 4: rgb = {x, 0, chroma}; break;
    default: rgb = {chroma, 0, x}; break;
  }
  for (double& ch : rgb) ch += m;
  return rgb;
}

namespace detail {

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct BlobRect {
  std::size_t row, col, h, w;
};

inline BinaryMask blob_mask(const BlobRect& r, bool ellipse, std::size_t size) {
  BinaryMask m(size, size);
  const double cy = static_cast<double>(r.row) + (static_cast<double>(r.h) - 1.0) / 2.0;
  const double cx = static_cast<double>(r.col) + (static_cast<double>(r.w) - 1.0) / 2.0;
  const double ry = static_cast<double>(r.h) / 2.0, rx = static_cast<double>(r.w) / 2.0;
  for (std::size_t i = r.row; i < r.row + r.h; ++i)
    for (std::size_t j = r.col; j < r.col + r.w; ++j) {
      if (ellipse) {
        const double dy = (static_cast<double>(i) - cy) / ry, dx = (static_cast<double>(j) - cx) / rx;
        if (dy * dy + dx * dx > 1.0) continue;
      }
      m.set(i, j);
    }
  return m;
}

}  // namespace detail

inline SyntheticSample gen_sample(std::uint64_t seed, const SyntheticConfig& cfg) {
  const std::size_t S = cfg.image_size;
  const std::size_t min_extent = min_blob_extent(cfg), max_extent = max_blob_extent(cfg), margin = 3;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_dist(1, cfg.max_instances);
  std::uniform_int_distribution<std::size_t> cls_dist(0, cfg.num_classes - 1);
  std::uniform_int_distribution<std::size_t> ext_dist(min_extent, max_extent);
  std::uniform_real_distribution<double> noise(-0.08, 0.08);
  std::bernoulli_distribution coin(0.5);

  SyntheticSample out;
  out.seed = seed;
  out.truth.height = out.truth.width = S;
  out.truth.labels.assign(cfg.num_classes, 0);

  const std::size_t n = n_dist(rng);
  std::vector<detail::BlobRect> rects;
  for (std::size_t attempt = 0; rects.size() < n; ++attempt) {
    if (attempt > 20000) throw InfeasibleLayout("gen_synthetic: could not place " + std::to_string(n) + " blobs");
    const std::size_t h = ext_dist(rng), w = ext_dist(rng);
    std::uniform_int_distribution<std::size_t> r_dist(0, S - h), c_dist(0, S - w);
    const detail::BlobRect r{r_dist(rng), c_dist(rng), h, w};
    const bool clear = std::all_of(rects.begin(), rects.end(), [&](const detail::BlobRect& o) {
      return r.row + r.h + margin <= o.row || o.row + o.h + margin <= r.row || r.col + r.w + margin <= o.col ||
             o.col + o.w + margin <= r.col;
    });
    if (clear) {
      rects.push_back(r);
    } else if (attempt % 500 == 499) {
      rects.clear();
    }
  }

  out.image = Tensor(3, S, S);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (double& v : out.image.plane(ch)) v = 0.12 + noise(rng);

  for (const auto& r : rects) {
    const std::size_t c = cls_dist(rng);
    GtInstance g{c, {}, detail::blob_mask(r, coin(rng), S)};
    g.box = bounding_box(g.mask);
    // Soft edge: a faint one-pixel fringe just outside the mask.
    const BinaryMask fringe = dilate(g.mask);
    const auto color = class_color(c, cfg.num_classes);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        if (!fringe(i, j)) continue;
        const double a = g.mask(i, j) ? 1.0 : 0.35;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double& px = out.image(ch, i, j);
          px = (1.0 - a) * px + a * (color[ch] + 0.5 * noise(rng));
        }
      }
    out.truth.labels[c] = 1;
    out.truth.instances.push_back(std::move(g));
  }
  for (double& v : out.image.data()) v = detail::quantize8(v);
  return out;
}

/// Deterministic dataset of axis-aligned rectangles and ellipses on a noisy background.
inline std::vector<SyntheticSample> gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.image_size < 32) throw std::invalid_argument("gen_synthetic: image_size must be >= 32");
  if (cfg.num_classes < 2) throw std::invalid_argument("gen_synthetic: num_classes must be >= 2");
  if (cfg.max_instances < 1) throw std::invalid_argument("gen_synthetic: max_instances must be >= 1");
  if (max_blob_extent(cfg) > cfg.image_size) throw std::invalid_argument("gen_synthetic: blob extent exceeds image");
  const std::size_t cell = min_blob_extent(cfg) + 3;
  if (cfg.max_instances * cell * cell > cfg.image_size * cfg.image_size / 2) {
    throw InfeasibleLayout("gen_synthetic: " + std::to_string(cfg.max_instances) +
                           " blobs do not fit a " + std::to_string(cfg.image_size) + " px image");
  }
  std::vector<SyntheticSample> out;
  out.reserve(cfg.count);
  for (std::size_t k = 0; k < cfg.count; ++k) out.push_back(gen_sample(mix_seed(cfg.seed, k), cfg));
  return out;
}

inline LabeledImage to_labeled(const SyntheticSample& s) { return {s.image, s.truth.labels}; }

namespace detail {

inline BinaryMask shift_mask(const BinaryMask& m, long dy, long dx) {
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j) {
      if (!m(i, j)) continue;
      const long a = static_cast<long>(i) + dy, b = static_cast<long>(j) + dx;
      if (a < 0 || b < 0 || a >= static_cast<long>(m.height()) || b >= static_cast<long>(m.width())) continue;
      out.set(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
  return out;
}

inline BinaryMask box_mask(const Box& b, std::size_t h, std::size_t w) {
  BinaryMask m(h, w);
  for (std::size_t i = b.row0; i <= b.row1 && i < h; ++i)
    for (std::size_t j = b.col0; j <= b.col1 && j < w; ++j) m.set(i, j);
  return m;
}

inline BinaryMask crop_half(const BinaryMask& m, const Box& b, int side) {
  BinaryMask out = m;
  const std::size_t mr = (b.row0 + b.row1) / 2, mc = (b.col0 + b.col1) / 2;
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j) {
      const bool drop = (side == 0 && i > mr) || (side == 1 && i < mr) || (side == 2 && j > mc) || (side == 3 && j < mc);
      if (drop) out.set(i, j, false);
    }
  return out;
}

}  // namespace detail

/// Gallery of every GT mask plus `distractors` jittered variants (shifted, dilated, eroded,
/// box-filled, half-cropped, re-shaped), deduplicated and shuffled. Proposal ids are gallery slots.
inline std::vector<SegmentProposal> make_jittered_gallery(const EvalSample& truth, std::size_t distractors,
                                                          std::uint64_t seed) {
  std::vector<BinaryMask> masks;
  for (const auto& g : truth.instances) masks.push_back(g.mask);
  if (masks.empty()) throw std::invalid_argument("make_jittered_gallery: sample has no instances");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, truth.instances.size() - 1);
  std::uniform_int_distribution<int> kind(0, 7), shift(-4, 4), side(0, 3), grow(1, 3);
  const std::size_t H = truth.height, W = truth.width;
  std::size_t added = 0;
  for (std::size_t attempt = 0; added < distractors && attempt < 100 * (distractors + 1); ++attempt) {
    const auto& g = truth.instances[pick(rng)];
    BinaryMask m;
    switch (kind(rng)) {
      case 0: m = detail::shift_mask(g.mask, shift(rng), shift(rng)); break;
      case 1: {
        m = g.mask;
        for (int k = grow(rng); k > 0; --k) m = dilate(m);
        break;
      }
      case 2: {
        m = g.mask;
        for (int k = 1 + grow(rng) / 2; k > 0; --k) m = erode(m);
        break;
      }
      case 3: m = detail::box_mask(g.box, H, W); break;
      case 4: m = detail::crop_half(g.mask, g.box, side(rng)); break;
      case 5: m = dilate(detail::shift_mask(g.mask, shift(rng), shift(rng))); break;
      case 6: {
        const detail::BlobRect r{g.box.row0, g.box.col0, g.box.row1 - g.box.row0 + 1, g.box.col1 - g.box.col0 + 1};
        m = detail::blob_mask(r, true, H);
        break;
      }
      default: {
        const std::size_t h = g.box.row1 - g.box.row0 + 1, w = g.box.col1 - g.box.col0 + 1;
        std::uniform_int_distribution<std::size_t> r0(0, H - h), c0(0, W - w);
        const std::size_t r = r0(rng), c = c0(rng);
        m = detail::box_mask({r, c, r + h - 1, c + w - 1}, H, W);
        break;
      }
    }
    if (m.empty() || std::find(masks.begin(), masks.end(), m) != masks.end()) continue;
    masks.push_back(std::move(m));
    ++added;
  }
  std::vector<std::size_t> order(masks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SegmentProposal> gallery;
  for (std::size_t k = 0; k < order.size(); ++k) gallery.push_back({static_cast<long>(k), std::move(masks[order[k]])});
  return gallery;
}

}  // namespace prm
