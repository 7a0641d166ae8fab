#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "prm/layers.hpp"
#include "prm/network.hpp"
#include "prm/peak_stim.hpp"
#include "prm/tensor.hpp"

namespace prm {

/// Visiting-probability distribution over one layer's activations. Mass that reaches an
/// output with no positive transition is moved to `leaked` instead of being redistributed.
struct RelevanceState {
  Tensor distribution;
  double leaked = 0.0;

  double mass() const { return distribution.sum() + leaked; }
};

struct PeakResponseMap {
  std::size_t class_id = 0;
  Peak peak;
  Tensor map;  // 1 x H x W at input resolution, summed over input channels
  double leaked = 0.0;
};

inline RelevanceState init_relevance(std::size_t c, std::size_t row, std::size_t col, const Shape& shape) {
  if (c >= shape.channels || row >= shape.height || col >= shape.width) {
    throw ShapeError("init_relevance: peak (" + std::to_string(c) + "," + std::to_string(row) + "," +
                     std::to_string(col) + ") outside " + to_string(shape));
  }
  RelevanceState s{Tensor(shape), 0.0};
  s.distribution(c, row, col) = 1.0;
  return s;
}

/// Transition P(U|V) = Z * U^+ * W^+ normalized jointly over input channels and kernel taps.
/// Negative activations are clamped to zero so transitions stay non-negative.
inline RelevanceState backprop_conv(const Conv& conv, const Tensor& input, const RelevanceState& state) {
  validate(conv);
  require_shape(state.distribution, conv_output_shape(conv, input.shape()), "backprop_conv state");
  RelevanceState out{Tensor(input.shape()), state.leaked};
  const auto H = static_cast<long>(input.height());
  const auto W = static_cast<long>(input.width());
  const Tensor& dist = state.distribution;
  for (std::size_t o = 0; o < dist.channels(); ++o) {
    for (std::size_t p = 0; p < dist.height(); ++p) {
      for (std::size_t q = 0; q < dist.width(); ++q) {
        const double m = dist(o, p, q);
        if (m == 0.0) continue;
        const long i0 = static_cast<long>(p * conv.stride) - static_cast<long>(conv.pad);
        const long j0 = static_cast<long>(q * conv.stride) - static_cast<long>(conv.pad);
        auto for_taps = [&](auto&& fn) {
          for (std::size_t ci = 0; ci < conv.in_channels; ++ci)
            for (std::size_t u = 0; u < conv.kernel_h; ++u) {
              const long i = i0 + static_cast<long>(u);
              if (i < 0 || i >= H) continue;
              for (std::size_t v = 0; v < conv.kernel_w; ++v) {
                const long j = j0 + static_cast<long>(v);
                if (j < 0 || j >= W) continue;
                const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
                const double a = std::max(0.0, input(ci, ii, jj));
                const double w = std::max(0.0, conv.w(o, ci, u, v));
                if (a > 0.0 && w > 0.0) fn(ci, ii, jj, a * w);
              }
            }
        };
        double z = 0.0;
        for_taps([&](std::size_t, std::size_t, std::size_t, double t) { z += t; });
        if (z <= 0.0) {
          out.leaked += m;
          continue;
        }
        const double scale = m / z;
        for_taps([&](std::size_t ci, std::size_t ii, std::size_t jj, double t) { out.distribution(ci, ii, jj) += t * scale; });
      }
    }
  }
  return out;
}

/// Each output's mass moves to its forward argmax (first in row-major order on ties).
inline RelevanceState backprop_pool(const MaxPool& pool, const Tensor& input, const RelevanceState& state) {
  require_shape(state.distribution, pool_output_shape(pool.window, pool.stride, input.shape()),
                "backprop_pool state");
  RelevanceState out{Tensor(input.shape()), state.leaked};
  const Tensor& dist = state.distribution;
  for (std::size_t c = 0; c < dist.channels(); ++c)
    for (std::size_t p = 0; p < dist.height(); ++p)
      for (std::size_t q = 0; q < dist.width(); ++q) {
        const double m = dist(c, p, q);
        if (m == 0.0) continue;
        auto [i, j] = max_pool_argmax(input, c, p, q, pool);
        out.distribution(c, i, j) += m;
      }
  return out;
}

/// Average pooling as a uniform positive-weight conv: mass splits in proportion to activation.
inline RelevanceState backprop_pool(const AvgPool& pool, const Tensor& input, const RelevanceState& state) {
  require_shape(state.distribution, pool_output_shape(pool.window, pool.stride, input.shape()),
                "backprop_pool state");
  RelevanceState out{Tensor(input.shape()), state.leaked};
  const Tensor& dist = state.distribution;
  for (std::size_t c = 0; c < dist.channels(); ++c)
    for (std::size_t p = 0; p < dist.height(); ++p)
      for (std::size_t q = 0; q < dist.width(); ++q) {
        const double m = dist(c, p, q);
        if (m == 0.0) continue;
        double z = 0.0;
        for (std::size_t u = 0; u < pool.window; ++u)
          for (std::size_t v = 0; v < pool.window; ++v)
            z += std::max(0.0, input(c, p * pool.stride + u, q * pool.stride + v));
        if (z <= 0.0) {
          out.leaked += m;
          continue;
        }
        for (std::size_t u = 0; u < pool.window; ++u)
          for (std::size_t v = 0; v < pool.window; ++v) {
            const std::size_t i = p * pool.stride + u, j = q * pool.stride + v;
            out.distribution(c, i, j) += m * std::max(0.0, input(c, i, j)) / z;
          }
      }
  return out;
}

/// ReLU adds no transition of its own: deactivated units already carry zero activation below.
inline RelevanceState backprop_relu(const RelevanceState& state) { return state; }

inline RelevanceState backprop_layer(const LayerSpec& layer, const Tensor& input, const RelevanceState& state) {
  return std::visit(overloaded{[&](const Conv& c) { return backprop_conv(c, input, state); },
                               [&](const Relu&) {
                                 require_shape(state.distribution, input.shape(), "backprop_relu state");
                                 return backprop_relu(state);
                               },
                               [&](const MaxPool& p) { return backprop_pool(p, input, state); },
                               [&](const AvgPool& p) { return backprop_pool(p, input, state); }},
                    layer);
}

/// Walks one class peak from the top response map down to the input.
inline PeakResponseMap peak_response_map(const NetworkSpec& net, const ForwardTrace& trace, std::size_t class_id,
                                         const Peak& peak) {
  if (trace.inputs.size() != net.layers.size()) {
    throw ShapeError("peak_response_map: trace does not match network depth");
  }
  RelevanceState state = init_relevance(class_id, peak.row, peak.col, trace.output.shape());
  for (std::size_t k = net.layers.size(); k-- > 0;) state = backprop_layer(net.layers[k], trace.inputs[k], state);

  const Tensor& d = state.distribution;
  PeakResponseMap prm{class_id, peak, Tensor(1, d.height(), d.width()), state.leaked};
  for (std::size_t c = 0; c < d.channels(); ++c) {
    auto src = d.plane(c);
    auto dst = prm.map.plane(0);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return prm;
}

}  // namespace prm
