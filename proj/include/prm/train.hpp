#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prm/network.hpp"
#include "prm/peak_stim.hpp"

namespace prm {

enum class Aggregation { PeakStimulation, GlobalAverage };

struct LabeledImage {
  Tensor image;
  std::vector<int> labels;
};

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 8;
  double learning_rate = 0.1;
  std::uint64_t seed = 7;
  Aggregation aggregation = Aggregation::PeakStimulation;
  StimulationConfig stimulation{};
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Class scores for a response map stack under the chosen aggregation.
inline ClassScores aggregate_scores(const Tensor& maps, Aggregation agg, const StimulationConfig& cfg) {
  if (agg == Aggregation::GlobalAverage) return gap_forward(maps);
  return stimulate_forward(maps, find_peaks(maps, cfg));
}

struct SampleGradient {
  double loss = 0.0;
  std::vector<double> grad;  // flat, in for_each_param order
};

/// Loss and flat parameter gradient for one sample. Peaks are re-detected on this forward pass.
inline SampleGradient sample_gradient(const NetworkSpec& net, const LabeledImage& sample, Aggregation agg,
                                      const StimulationConfig& cfg) {
  const ForwardTrace trace = network_forward(net, sample.image);
  const Tensor& maps = trace.output;
  Tensor grad_maps;
  LossResult loss;
  if (agg == Aggregation::GlobalAverage) {
    loss = multilabel_loss(gap_forward(maps), sample.labels);
    grad_maps = gap_backward(loss.grad, maps.shape());
  } else {
    const PeakList peaks = find_peaks(maps, cfg);
    loss = multilabel_loss(stimulate_forward(maps, peaks), sample.labels);
    grad_maps = stimulate_backward(peaks, loss.grad, maps.shape());
  }
  const NetworkGradient ng = network_backward(net, trace, grad_maps);
  SampleGradient out{loss.loss, {}};
  out.grad.reserve(net.param_count());
  for (const auto& lg : ng.layers) {
    out.grad.insert(out.grad.end(), lg.weights.begin(), lg.weights.end());
    out.grad.insert(out.grad.end(), lg.bias.begin(), lg.bias.end());
  }
  return out;
}

/// Mean loss over a dataset.
inline double dataset_loss(const NetworkSpec& net, const std::vector<LabeledImage>& data, Aggregation agg,
                           const StimulationConfig& cfg) {
  double acc = 0.0;
  for (const auto& s : data) acc += multilabel_loss(aggregate_scores(network_forward(net, s.image).output, agg, cfg), s.labels).loss;
  return data.empty() ? 0.0 : acc / static_cast<double>(data.size());
}

/// Minibatch SGD on every conv parameter. Sample order is reshuffled each epoch from the seed.
inline NetworkSpec train_toy(NetworkSpec net, const std::vector<LabeledImage>& data, const TrainConfig& cfg) {
  validate(net);
  if (data.empty()) throw std::invalid_argument("train_toy: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_toy: batch size must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  std::vector<double> grad(net.param_count());
  const double scale = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const SampleGradient sg = sample_gradient(net, data[order[cursor++]], cfg.aggregation, cfg.stimulation);
      loss += sg.loss * scale;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += sg.grad[k] * scale;
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("train_toy: non-finite loss at step " + std::to_string(step));
    }
    std::size_t k = 0;
    for_each_param(net, [&](double& p) { p -= cfg.learning_rate * grad[k++]; });
  }
  return net;
}

}  // namespace prm
