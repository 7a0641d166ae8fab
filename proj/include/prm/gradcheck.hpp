#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prm/layers.hpp"
#include "prm/network.hpp"
#include "prm/peak_stim.hpp"

namespace prm {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// 2^-20. With test data on a 1/64 grid, x +- h and the products and sums downstream stay exact
// in binary64, so the only error left in a central difference is what the gradient gets wrong.
inline constexpr double kGradStep = 0x1p-20;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale == 0.0 ? 0.0 : std::abs(analytic - numeric) / scale;
}

/// Central differences of a vector-valued f, contracted with `weights` after differencing.
/// x is restored afterwards.
inline void check_entries(std::vector<double>& x, const std::vector<double>& grad,
                          const std::function<Tensor()>& f, const Tensor& weights, double h, GradCheckResult& acc) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const Tensor up = f();
    x[k] = saved - h;
    const Tensor down = f();
    x[k] = saved;
    double numeric = 0.0;
    auto u = up.data(), d = down.data(), w = weights.data();
    for (std::size_t j = 0; j < u.size(); ++j) numeric += w[j] * (u[j] - d[j]);
    numeric /= 2.0 * h;
    acc.max_rel_error = std::max(acc.max_rel_error, relative_error(grad[k], numeric));
    ++acc.checked;
  }
}

/// Same for a scalar f.
inline void check_entries(std::vector<double>& x, const std::vector<double>& grad, const std::function<double()>& f,
                          double h, GradCheckResult& acc) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f();
    x[k] = saved - h;
    const double down = f();
    x[k] = saved;
    acc.max_rel_error = std::max(acc.max_rel_error, relative_error(grad[k], (up - down) / (2.0 * h)));
    ++acc.checked;
  }
}

namespace detail {

/// Values k/64 with k uniform in [-range*64, range*64], never zero.
inline double grid_value(std::mt19937_64& rng, int range = 2) {
  std::uniform_int_distribution<int> d(-64 * range, 64 * range - 1);
  const int k = d(rng);
  return static_cast<double>(k >= 0 ? k + 1 : k) / 64.0;
}

inline Tensor grid_tensor(const Shape& s, std::mt19937_64& rng) {
  Tensor t(s);
  for (double& v : t.data()) v = grid_value(rng);
  return t;
}

/// Distinct grid values, so no pooling window holds a tie.
inline Tensor distinct_tensor(const Shape& s, std::mt19937_64& rng) {
  Tensor t(s);
  std::vector<double> v(t.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k) / 64.0 - 1.0;
  std::shuffle(v.begin(), v.end(), rng);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

inline Conv grid_conv(std::size_t o, std::size_t i, std::size_t kh, std::size_t kw, std::size_t s, std::size_t p,
                      std::mt19937_64& rng) {
  Conv c = Conv::zeros(o, i, kh, kw, s, p);
  for (double& w : c.weights) w = grid_value(rng, 1);
  for (double& b : c.bias) b = grid_value(rng, 1);
  return c;
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// Input and parameter gradients of one layer under L = <g, layer(x)>.
inline GradCheckResult check_layer(const std::string& name, LayerSpec layer, const Tensor& input, std::mt19937_64& rng,
                                   double h) {
  GradCheckResult r{name, 0.0, 0};
  const Tensor g = grid_tensor(output_shape(layer, input.shape()), rng);
  const LayerGradient grad = layer_backward(layer, input, g);

  std::vector<double> x = to_vector(input);
  check_entries(x, to_vector(grad.input), [&] { return layer_forward(layer, Tensor(input.shape(), x)); }, g, h, r);
  if (auto* c = std::get_if<Conv>(&layer)) {
    auto f = [&] { return conv_forward(input, *c); };
    check_entries(c->weights, grad.weights, f, g, h, r);
    check_entries(c->bias, grad.bias, f, g, h, r);
  }
  return r;
}

}  // namespace detail

/// Finite-difference suite: every layer kind, a small network end to end, and the stimulation
/// layer with a frozen peak set feeding the multi-label loss. One call per seed.
inline std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, double h = kGradStep) {
  using detail::grid_conv;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;

  out.push_back(detail::check_layer("conv 3x3 s1 p1", grid_conv(3, 2, 3, 3, 1, 1, rng), detail::grid_tensor({2, 6, 7}, rng),
                                    rng, h));
  out.push_back(detail::check_layer("conv 3x2 s2 p0", grid_conv(2, 3, 3, 2, 2, 0, rng), detail::grid_tensor({3, 7, 6}, rng),
                                    rng, h));
  out.push_back(detail::check_layer("conv 3x3 s3 p1", grid_conv(2, 2, 3, 3, 3, 1, rng), detail::grid_tensor({2, 7, 7}, rng),
                                    rng, h));
  out.push_back(detail::check_layer("conv 1x1", grid_conv(4, 3, 1, 1, 1, 0, rng), detail::grid_tensor({3, 4, 5}, rng), rng, h));
  out.push_back(detail::check_layer("relu", Relu{}, detail::grid_tensor({2, 5, 5}, rng), rng, h));
  out.push_back(detail::check_layer("maxpool 2/2", MaxPool{2, 2}, detail::distinct_tensor({2, 6, 6}, rng), rng, h));
  out.push_back(detail::check_layer("maxpool 3/2", MaxPool{3, 2}, detail::distinct_tensor({2, 7, 7}, rng), rng, h));
  out.push_back(detail::check_layer("avgpool 2/2", AvgPool{2, 2}, detail::grid_tensor({2, 6, 6}, rng), rng, h));
  out.push_back(detail::check_layer("avgpool 2/1", AvgPool{2, 1}, detail::grid_tensor({2, 5, 6}, rng), rng, h));
  out.push_back(detail::check_layer("avgpool 4/2", AvgPool{4, 2}, detail::grid_tensor({2, 8, 8}, rng), rng, h));

  {
    GradCheckResult r{"network conv-relu-maxpool-conv", 0.0, 0};
    NetworkSpec net;
    net.num_classes = 2;
    net.layers = {grid_conv(3, 2, 3, 3, 1, 1, rng), Relu{}, MaxPool{2, 2}, grid_conv(2, 3, 1, 1, 1, 0, rng)};
    const Tensor image = detail::grid_tensor({2, 6, 6}, rng);
    const ForwardTrace trace = network_forward(net, image);
    const Tensor g = detail::grid_tensor(trace.output.shape(), rng);
    const NetworkGradient grad = network_backward(net, trace, g);
    auto f = [&] { return network_forward(net, image).output; };
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      if (auto* c = std::get_if<Conv>(&net.layers[k])) {
        check_entries(c->weights, grad.layers[k].weights, f, g, h, r);
        check_entries(c->bias, grad.layers[k].bias, f, g, h, r);
      }
    }
    out.push_back(r);
  }

  {
    GradCheckResult r{"stimulation + loss (frozen peaks)", 0.0, 0};
    const Tensor maps = detail::distinct_tensor({3, 8, 8}, rng);
    const PeakList peaks = find_peaks(maps, {2, true});
    std::vector<int> labels(3);
    for (int& y : labels) y = static_cast<int>(rng() & 1u);
    const LossResult lr = multilabel_loss(stimulate_forward(maps, peaks), labels);
    const Tensor grad = stimulate_backward(peaks, lr.grad, maps.shape());
    std::vector<double> x = detail::to_vector(maps);
    check_entries(x, detail::to_vector(grad),
                  [&] { return multilabel_loss(stimulate_forward(Tensor(maps.shape(), x), peaks), labels).loss; }, h, r);
    out.push_back(r);
  }
  return out;
}

}  // namespace prm
