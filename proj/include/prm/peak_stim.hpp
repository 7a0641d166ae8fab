#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "prm/tensor.hpp"

namespace prm {

struct StimulationConfig {
  std::size_t radius = 3;
  /// Emit one pseudo-peak for constant maps so every class has at least one peak.
  bool fallback = true;
};

struct Peak {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
  bool fallback = false;

  bool operator==(const Peak&) const = default;
};

/// peaks[c] lists the peaks of class map c in row-major order.
struct PeakList {
  std::vector<std::vector<Peak>> peaks;

  std::size_t num_classes() const { return peaks.size(); }
  std::size_t count(std::size_t c) const { return peaks.at(c).size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& p : peaks) n += p.size();
    return n;
  }
};

using ClassScores = std::vector<double>;

namespace detail {

inline bool is_window_max(std::span<const double> plane, std::size_t H, std::size_t W, std::size_t i,
                          std::size_t j, std::size_t r) {
  const double v = plane[i * W + j];
  const std::size_t i0 = i >= r ? i - r : 0, i1 = std::min(H - 1, i + r);
  const std::size_t j0 = j >= r ? j - r : 0, j1 = std::min(W - 1, j + r);
  for (std::size_t a = i0; a <= i1; ++a)
    for (std::size_t b = j0; b <= j1; ++b)
      if (plane[a * W + b] > v) return false;
  return true;
}

/// Window maxima of one plane with each 8-connected equal-valued plateau reduced to its
/// first pixel in row-major order.
inline std::vector<Peak> plane_peaks(std::span<const double> plane, std::size_t H, std::size_t W,
                                     const StimulationConfig& cfg) {
  std::vector<char> candidate(H * W, 0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) candidate[i * W + j] = is_window_max(plane, H, W, i, j, cfg.radius);

  std::vector<char> seen(H * W, 0);
  std::vector<Peak> out;
  std::vector<std::size_t> stack;
  std::size_t plateau_size = 0;
  for (std::size_t idx = 0; idx < H * W; ++idx) {
    if (!candidate[idx] || seen[idx]) continue;
    out.push_back({idx / W, idx % W, plane[idx], false});
    const double v = plane[idx];
    seen[idx] = 1;
    stack.assign(1, idx);
    std::size_t component = 0;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++component;
      const long ci = static_cast<long>(cur / W), cj = static_cast<long>(cur % W);
      for (long di = -1; di <= 1; ++di)
        for (long dj = -1; dj <= 1; ++dj) {
          const long ni = ci + di, nj = cj + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<long>(H) || nj >= static_cast<long>(W)) continue;
          const auto n = static_cast<std::size_t>(ni) * W + static_cast<std::size_t>(nj);
          if (!seen[n] && candidate[n] && plane[n] == v) {
            seen[n] = 1;
            stack.push_back(n);
          }
        }
    }
    plateau_size = component;
  }
  // A single plateau spanning the whole map means the map is constant.
  if (out.size() == 1 && plateau_size == H * W) {
    if (!cfg.fallback) return {};
    out.front().fallback = true;
  }
  return out;
}

}  // namespace detail

inline PeakList find_peaks(const Tensor& maps, const StimulationConfig& cfg = {}) {
  if (cfg.radius < 1) throw std::invalid_argument("find_peaks: radius must be >= 1");
  PeakList list;
  list.peaks.reserve(maps.channels());
  for (std::size_t c = 0; c < maps.channels(); ++c)
    list.peaks.push_back(detail::plane_peaks(maps.plane(c), maps.height(), maps.width(), cfg));
  return list;
}

/// Mean response at the peaks of each class.
inline ClassScores stimulate_forward(const Tensor& maps, const PeakList& peaks) {
  if (peaks.num_classes() != maps.channels()) {
    throw ShapeError("stimulate_forward: " + std::to_string(peaks.num_classes()) + " peak sets for " +
                     std::to_string(maps.channels()) + " class maps");
  }
  ClassScores s(maps.channels(), 0.0);
  for (std::size_t c = 0; c < maps.channels(); ++c) {
    const auto& pc = peaks.peaks[c];
    if (pc.empty()) throw std::invalid_argument("stimulate_forward: class " + std::to_string(c) + " has no peaks");
    double acc = 0.0;
    for (const auto& p : pc) acc += maps(c, p.row, p.col);
    s[c] = acc / static_cast<double>(pc.size());
  }
  return s;
}

/// Gradient of the class maps: grad[c] / N^c at each peak of class c.
inline Tensor stimulate_backward(const PeakList& peaks, const ClassScores& grad_scores, const Shape& shape) {
  if (peaks.num_classes() != shape.channels || grad_scores.size() != shape.channels) {
    throw ShapeError("stimulate_backward: class count mismatch with shape " + to_string(shape));
  }
  Tensor g(shape);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const auto& pc = peaks.peaks[c];
    if (pc.empty()) continue;
    const double share = grad_scores[c] / static_cast<double>(pc.size());
    for (const auto& p : pc) g(c, p.row, p.col) += share;
  }
  return g;
}

inline ClassScores gap_forward(const Tensor& maps) {
  ClassScores s(maps.channels(), 0.0);
  for (std::size_t c = 0; c < maps.channels(); ++c) {
    double acc = 0.0;
    for (double v : maps.plane(c)) acc += v;
    s[c] = acc / static_cast<double>(maps.shape().plane());
  }
  return s;
}

inline Tensor gap_backward(const ClassScores& grad_scores, const Shape& shape) {
  if (grad_scores.size() != shape.channels) throw ShapeError("gap_backward: class count mismatch");
  Tensor g(shape);
  const double inv = 1.0 / static_cast<double>(shape.plane());
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (double& v : g.plane(c)) v = grad_scores[c] * inv;
  return g;
}

struct LossResult {
  double loss = 0.0;
  ClassScores grad;
};

/// One-vs-all logistic loss averaged over classes: mean ln(1 + exp(-y s)), y in {-1, +1}.
inline LossResult multilabel_loss(const ClassScores& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("multilabel_loss: score/label length mismatch");
  const double inv = 1.0 / static_cast<double>(scores.size());
  LossResult r{0.0, ClassScores(scores.size(), 0.0)};
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (labels[c] != 0 && labels[c] != 1) throw std::invalid_argument("multilabel_loss: labels must be 0/1");
    const double y = labels[c] ? 1.0 : -1.0;
    const double z = -y * scores[c];
    r.loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) * inv;
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.grad[c] = -y * sig * inv;
  }
  return r;
}

}  // namespace prm
