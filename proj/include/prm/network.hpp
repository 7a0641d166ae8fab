#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prm/layers.hpp"
#include "prm/tensor.hpp"

namespace prm {

/// Plain feed-forward stack whose last layer is the 1x1 classifier conv.
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;

  std::size_t input_channels() const {
    for (const auto& l : layers)
      if (const auto* c = std::get_if<Conv>(&l)) return c->in_channels;
    return 0;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      if (const auto* c = std::get_if<Conv>(&l)) n += c->param_count();
    return n;
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// Layer-level checks only: every layer is well formed and conv channel counts chain.
inline void validate_layers(const NetworkSpec& net) {
  if (net.layers.empty()) throw std::invalid_argument("network has no layers");
  std::size_t channels = 0;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    validate(net.layers[k]);
    if (const auto* c = std::get_if<Conv>(&net.layers[k])) {
      if (channels != 0 && c->in_channels != channels) {
        throw ShapeError("network: layer " + std::to_string(k) + " expects " +
                         std::to_string(c->in_channels) + " channels, previous layer yields " +
                         std::to_string(channels));
      }
      channels = c->out_channels;
    }
  }
}

/// Full classifier contract: layer checks plus a final conv with num_classes outputs.
inline void validate(const NetworkSpec& net) {
  validate_layers(net);
  const auto* head = std::get_if<Conv>(&net.layers.back());
  if (head == nullptr) throw std::invalid_argument("network: final layer must be a conv classifier");
  if (head->out_channels != net.num_classes) {
    throw ShapeError("network: classifier has " + std::to_string(head->out_channels) +
                     " outputs, num_classes is " + std::to_string(net.num_classes));
  }
}

/// Per-layer inputs recorded by the forward pass; inputs[k] feeds layers[k].
struct ForwardTrace {
  std::vector<Tensor> inputs;
  Tensor output;
};

/// Runs any well-formed stack; the classifier-head contract is checked by validate().
inline ForwardTrace network_forward(const NetworkSpec& net, const Tensor& image) {
  validate_layers(net);
  ForwardTrace trace;
  trace.inputs.reserve(net.layers.size());
  Tensor x = image;
  for (const auto& layer : net.layers) {
    trace.inputs.push_back(x);
    x = layer_forward(layer, trace.inputs.back());
  }
  trace.output = std::move(x);
  return trace;
}

/// Parameter gradients for every layer (empty entries for parameter-free ones) plus the image gradient.
struct NetworkGradient {
  std::vector<LayerGradient> layers;
  Tensor input;
};

inline NetworkGradient network_backward(const NetworkSpec& net, const ForwardTrace& trace,
                                        const Tensor& grad_output) {
  if (trace.inputs.size() != net.layers.size()) {
    throw ShapeError("network_backward: trace has " + std::to_string(trace.inputs.size()) +
                     " entries for " + std::to_string(net.layers.size()) + " layers");
  }
  NetworkGradient g;
  g.layers.resize(net.layers.size());
  Tensor grad = grad_output;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    g.layers[k] = layer_backward(net.layers[k], trace.inputs[k], grad);
    grad = g.layers[k].input;
  }
  g.input = std::move(grad);
  return g;
}

/// Visits every conv parameter (weights then bias, layer order) as a mutable double.
template <class Fn>
void for_each_param(NetworkSpec& net, Fn&& fn) {
  for (auto& l : net.layers) {
    if (auto* c = std::get_if<Conv>(&l)) {
      for (double& w : c->weights) fn(w);
      for (double& b : c->bias) fn(b);
    }
  }
}

template <class Fn>
void for_each_param(const NetworkSpec& net, Fn&& fn) {
  for (const auto& l : net.layers) {
    if (const auto* c = std::get_if<Conv>(&l)) {
      for (double w : c->weights) fn(w);
      for (double b : c->bias) fn(b);
    }
  }
}

/// He-initialized conv with zero bias.
inline Conv he_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                    std::mt19937_64& rng) {
  Conv c = Conv::zeros(out, in, k, k, stride, pad);
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in * k * k)));
  for (double& w : c.weights) w = nd(rng);
  return c;
}

/// Four-conv toy classifier: conv3, stride-3 conv3 (pad 1), conv3, 1x1 head, ReLU between.
/// Output cell j is centred on input pixel 3j, so a 3k+1 px image maps onto an align-corners
/// grid exactly (64 px -> 22 x 22 response maps).
inline NetworkSpec make_toy_network(std::size_t in_channels, std::size_t num_classes, std::uint64_t seed,
                                    std::size_t width = 8) {
  std::mt19937_64 rng(seed);
  NetworkSpec net;
  net.num_classes = num_classes;
  net.layers.push_back(he_conv(width, in_channels, 3, 1, 1, rng));
  net.layers.push_back(Relu{});
  net.layers.push_back(he_conv(2 * width, width, 3, 3, 1, rng));
  net.layers.push_back(Relu{});
  net.layers.push_back(he_conv(2 * width, 2 * width, 3, 1, 1, rng));
  net.layers.push_back(Relu{});
  net.layers.push_back(he_conv(num_classes, 2 * width, 1, 1, 0, rng));
  return net;
}

}  // namespace prm
