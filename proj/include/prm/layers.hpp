#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "prm/tensor.hpp"

namespace prm {

/// Convolution with zero padding, cross-correlation convention (no kernel flip).
struct Conv {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::vector<double> weights;  // out x in x kh x kw
  std::vector<double> bias;     // out

  static Conv zeros(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw,
                    std::size_t stride = 1, std::size_t pad = 0) {
    Conv c{out, in, kh, kw, stride, pad, {}, {}};
    c.weights.assign(out * in * kh * kw, 0.0);
    c.bias.assign(out, 0.0);
    return c;
  }

  std::size_t weight_index(std::size_t o, std::size_t i, std::size_t u, std::size_t v) const {
    return ((o * in_channels + i) * kernel_h + u) * kernel_w + v;
  }
  double& w(std::size_t o, std::size_t i, std::size_t u, std::size_t v) {
    return weights[weight_index(o, i, u, v)];
  }
  double w(std::size_t o, std::size_t i, std::size_t u, std::size_t v) const {
    return weights[weight_index(o, i, u, v)];
  }
  std::size_t param_count() const { return weights.size() + bias.size(); }

  bool operator==(const Conv&) const = default;
};

struct Relu {
  bool operator==(const Relu&) const = default;
};

struct MaxPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  bool operator==(const MaxPool&) const = default;
};

struct AvgPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  bool operator==(const AvgPool&) const = default;
};

using LayerSpec = std::variant<Conv, Relu, MaxPool, AvgPool>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline const char* layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{[](const Conv&) { return "conv"; },
                               [](const Relu&) { return "relu"; },
                               [](const MaxPool&) { return "maxpool"; },
                               [](const AvgPool&) { return "avgpool"; }},
                    layer);
}

inline void validate(const Conv& c) {
  if (c.stride < 1 || c.kernel_h < 1 || c.kernel_w < 1 || c.out_channels < 1 || c.in_channels < 1) {
    throw std::invalid_argument("conv: stride, kernel and channel dims must be >= 1");
  }
  if (c.weights.size() != c.out_channels * c.in_channels * c.kernel_h * c.kernel_w) {
    throw ShapeError("conv: weight array length " + std::to_string(c.weights.size()) +
                     " inconsistent with declared dims");
  }
  if (c.bias.size() != c.out_channels) {
    throw ShapeError("conv: bias length " + std::to_string(c.bias.size()) + " != out channels " +
                     std::to_string(c.out_channels));
  }
}

template <class Pool>
inline void validate_pool(const Pool& p) {
  if (p.window < 1 || p.stride < 1) throw std::invalid_argument("pool: window and stride must be >= 1");
}

inline void validate(const LayerSpec& layer) {
  std::visit(overloaded{[](const Conv& c) { validate(c); }, [](const Relu&) {},
                        [](const MaxPool& p) { validate_pool(p); },
                        [](const AvgPool& p) { validate_pool(p); }},
             layer);
}

inline Shape conv_output_shape(const Conv& c, const Shape& in) {
  if (in.channels != c.in_channels) {
    throw ShapeError("conv: input has " + std::to_string(in.channels) + " channels, layer expects " +
                     std::to_string(c.in_channels));
  }
  const std::size_t ph = in.height + 2 * c.pad;
  const std::size_t pw = in.width + 2 * c.pad;
  if (ph < c.kernel_h || pw < c.kernel_w) {
    throw ShapeError("conv: kernel " + std::to_string(c.kernel_h) + "x" + std::to_string(c.kernel_w) +
                     " larger than padded input " + to_string(in));
  }
  return {c.out_channels, (ph - c.kernel_h) / c.stride + 1, (pw - c.kernel_w) / c.stride + 1};
}

inline Shape pool_output_shape(std::size_t window, std::size_t stride, const Shape& in) {
  if (window > in.height || window > in.width) {
    throw ShapeError("pool: window " + std::to_string(window) + " larger than input " + to_string(in));
  }
  return {in.channels, (in.height - window) / stride + 1, (in.width - window) / stride + 1};
}

inline Shape output_shape(const LayerSpec& layer, const Shape& in) {
  return std::visit(overloaded{[&](const Conv& c) { return conv_output_shape(c, in); },
                               [&](const Relu&) { return in; },
                               [&](const MaxPool& p) { return pool_output_shape(p.window, p.stride, in); },
                               [&](const AvgPool& p) { return pool_output_shape(p.window, p.stride, in); }},
                    layer);
}

inline Tensor conv_forward(const Tensor& input, const Conv& c) {
  validate(c);
  const Shape os = conv_output_shape(c, input.shape());
  Tensor out(os);
  const auto H = static_cast<long>(input.height());
  const auto W = static_cast<long>(input.width());
  for (std::size_t o = 0; o < os.channels; ++o) {
    for (std::size_t p = 0; p < os.height; ++p) {
      for (std::size_t q = 0; q < os.width; ++q) {
        double acc = c.bias[o];
        const long i0 = static_cast<long>(p * c.stride) - static_cast<long>(c.pad);
        const long j0 = static_cast<long>(q * c.stride) - static_cast<long>(c.pad);
        for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
          for (std::size_t u = 0; u < c.kernel_h; ++u) {
            const long i = i0 + static_cast<long>(u);
            if (i < 0 || i >= H) continue;
            for (std::size_t v = 0; v < c.kernel_w; ++v) {
              const long j = j0 + static_cast<long>(v);
              if (j < 0 || j >= W) continue;
              acc += c.w(o, ci, u, v) * input(ci, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            }
          }
        }
        out(o, p, q) = acc;
      }
    }
  }
  return out;
}

inline Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = std::max(0.0, v);
  return out;
}

/// Location of the window maximum; ties resolve to the first in row-major order.
inline std::pair<std::size_t, std::size_t> max_pool_argmax(const Tensor& input, std::size_t c,
                                                            std::size_t p, std::size_t q,
                                                            const MaxPool& pool) {
  std::size_t bi = p * pool.stride, bj = q * pool.stride;
  double best = input(c, bi, bj);
  for (std::size_t u = 0; u < pool.window; ++u) {
    for (std::size_t v = 0; v < pool.window; ++v) {
      const std::size_t i = p * pool.stride + u, j = q * pool.stride + v;
      if (input(c, i, j) > best) {
        best = input(c, i, j);
        bi = i;
        bj = j;
      }
    }
  }
  return {bi, bj};
}

inline Tensor pool_forward(const Tensor& input, const MaxPool& pool) {
  validate_pool(pool);
  const Shape os = pool_output_shape(pool.window, pool.stride, input.shape());
  Tensor out(os);
  for (std::size_t c = 0; c < os.channels; ++c)
    for (std::size_t p = 0; p < os.height; ++p)
      for (std::size_t q = 0; q < os.width; ++q) {
        auto [i, j] = max_pool_argmax(input, c, p, q, pool);
        out(c, p, q) = input(c, i, j);
      }
  return out;
}

inline Tensor pool_forward(const Tensor& input, const AvgPool& pool) {
  validate_pool(pool);
  const Shape os = pool_output_shape(pool.window, pool.stride, input.shape());
  Tensor out(os);
  const double inv = 1.0 / static_cast<double>(pool.window * pool.window);
  for (std::size_t c = 0; c < os.channels; ++c)
    for (std::size_t p = 0; p < os.height; ++p)
      for (std::size_t q = 0; q < os.width; ++q) {
        double acc = 0.0;
        for (std::size_t u = 0; u < pool.window; ++u)
          for (std::size_t v = 0; v < pool.window; ++v)
            acc += input(c, p * pool.stride + u, q * pool.stride + v);
        out(c, p, q) = acc * inv;
      }
  return out;
}

inline Tensor layer_forward(const LayerSpec& layer, const Tensor& input) {
  return std::visit(overloaded{[&](const Conv& c) { return conv_forward(input, c); },
                               [&](const Relu&) { return relu_forward(input); },
                               [&](const MaxPool& p) { return pool_forward(input, p); },
                               [&](const AvgPool& p) { return pool_forward(input, p); }},
                    layer);
}

/// Align-corners bilinear resize to a larger (or equal) grid.
inline Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_upsample: zero-sized target");
  if (input.size() == 0) throw ShapeError("bilinear_upsample: empty input");
  if (out_h < input.height() || out_w < input.width()) {
    throw ShapeError("bilinear_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " smaller than input " + to_string(input.shape()));
  }
  const std::size_t H = input.height(), W = input.width();
  auto src_coord = [](std::size_t dst, std::size_t in, std::size_t out) {
    if (out == 1 || in == 1) return 0.0;
    return static_cast<double>(dst) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor out(input.channels(), out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = src_coord(y, H, out_h);
    const auto y0 = std::min(static_cast<std::size_t>(sy), H - 1);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = src_coord(x, W, out_w);
      const auto x0 = std::min(static_cast<std::size_t>(sx), W - 1);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < input.channels(); ++c) {
        const double top = input(c, y0, x0) * (1.0 - fx) + input(c, y0, x1) * fx;
        const double bot = input(c, y1, x0) * (1.0 - fx) + input(c, y1, x1) * fx;
        out(c, y, x) = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

/// Gradients of one layer. weights/bias are empty for parameter-free layers.
struct LayerGradient {
  Tensor input;
  std::vector<double> weights;
  std::vector<double> bias;
};

inline LayerGradient conv_backward(const Conv& c, const Tensor& input, const Tensor& grad_out) {
  validate(c);
  require_shape(grad_out, conv_output_shape(c, input.shape()), "conv backward grad_out");
  LayerGradient g{Tensor(input.shape()), std::vector<double>(c.weights.size(), 0.0),
                  std::vector<double>(c.bias.size(), 0.0)};
  const auto H = static_cast<long>(input.height());
  const auto W = static_cast<long>(input.width());
  for (std::size_t o = 0; o < grad_out.channels(); ++o) {
    for (std::size_t p = 0; p < grad_out.height(); ++p) {
      for (std::size_t q = 0; q < grad_out.width(); ++q) {
        const double go = grad_out(o, p, q);
        if (go == 0.0) continue;
        g.bias[o] += go;
        const long i0 = static_cast<long>(p * c.stride) - static_cast<long>(c.pad);
        const long j0 = static_cast<long>(q * c.stride) - static_cast<long>(c.pad);
        for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
          for (std::size_t u = 0; u < c.kernel_h; ++u) {
            const long i = i0 + static_cast<long>(u);
            if (i < 0 || i >= H) continue;
            for (std::size_t v = 0; v < c.kernel_w; ++v) {
              const long j = j0 + static_cast<long>(v);
              if (j < 0 || j >= W) continue;
              const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
              g.weights[c.weight_index(o, ci, u, v)] += go * input(ci, ii, jj);
              g.input(ci, ii, jj) += go * c.w(o, ci, u, v);
            }
          }
        }
      }
    }
  }
  return g;
}

inline LayerGradient layer_backward(const LayerSpec& layer, const Tensor& input, const Tensor& grad_out) {
  return std::visit(
      overloaded{
          [&](const Conv& c) { return conv_backward(c, input, grad_out); },
          [&](const Relu&) {
            require_shape(grad_out, input.shape(), "relu backward grad_out");
            LayerGradient g{grad_out, {}, {}};
            auto in = input.data();
            auto gi = g.input.data();
            for (std::size_t k = 0; k < gi.size(); ++k)
              if (!(in[k] > 0.0)) gi[k] = 0.0;
            return g;
          },
          [&](const MaxPool& pool) {
            require_shape(grad_out, pool_output_shape(pool.window, pool.stride, input.shape()),
                          "maxpool backward grad_out");
            LayerGradient g{Tensor(input.shape()), {}, {}};
            for (std::size_t c = 0; c < grad_out.channels(); ++c)
              for (std::size_t p = 0; p < grad_out.height(); ++p)
                for (std::size_t q = 0; q < grad_out.width(); ++q) {
                  auto [i, j] = max_pool_argmax(input, c, p, q, pool);
                  g.input(c, i, j) += grad_out(c, p, q);
                }
            return g;
          },
          [&](const AvgPool& pool) {
            require_shape(grad_out, pool_output_shape(pool.window, pool.stride, input.shape()),
                          "avgpool backward grad_out");
            LayerGradient g{Tensor(input.shape()), {}, {}};
            const double inv = 1.0 / static_cast<double>(pool.window * pool.window);
            for (std::size_t c = 0; c < grad_out.channels(); ++c)
              for (std::size_t p = 0; p < grad_out.height(); ++p)
                for (std::size_t q = 0; q < grad_out.width(); ++q)
                  for (std::size_t u = 0; u < pool.window; ++u)
                    for (std::size_t v = 0; v < pool.window; ++v)
                      g.input(c, p * pool.stride + u, q * pool.stride + v) += grad_out(c, p, q) * inv;
            return g;
          }},
      layer);
}

}  // namespace prm
