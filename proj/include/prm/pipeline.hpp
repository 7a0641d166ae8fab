#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "prm/layers.hpp"
#include "prm/metrics.hpp"
#include "prm/network.hpp"
#include "prm/peak_backprop.hpp"
#include "prm/peak_stim.hpp"
#include "prm/retrieval.hpp"
#include "prm/train.hpp"

namespace prm {

/// Per-class score plus the location of the maximum class peak on the response map
/// upsampled to image resolution.
inline std::vector<PointPrediction> point_predictions(const NetworkSpec& net, const Tensor& image, Aggregation agg,
                                                      const StimulationConfig& stim) {
  const Tensor maps = network_forward(net, image).output;
  const ClassScores scores = aggregate_scores(maps, agg, stim);
  const Tensor up = bilinear_upsample(maps, image.height(), image.width());
  std::vector<PointPrediction> out(maps.channels());
  for (std::size_t c = 0; c < maps.channels(); ++c) {
    auto plane = up.plane(c);
    std::size_t best = 0;
    for (std::size_t k = 1; k < plane.size(); ++k)
      if (plane[k] > plane[best]) best = k;
    out[c] = {scores[c], best / up.width(), best % up.width()};
  }
  return out;
}

/// Quality of every PRM walked from a positive-valued peak of a class scoring above `cutoff`.
inline std::vector<double> prm_qualities(const NetworkSpec& net, const Tensor& image, const EvalSample& truth,
                                         const StimulationConfig& stim, double cutoff = 0.0) {
  const ForwardTrace trace = network_forward(net, image);
  const PeakList peaks = find_peaks(trace.output, stim);
  const ClassScores scores = stimulate_forward(trace.output, peaks);
  std::vector<double> out;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (!(scores[c] > cutoff)) continue;
    for (const auto& pk : peaks.peaks[c])
      if (pk.value > 0.0) out.push_back(prm_quality(peak_response_map(net, trace, c, pk), truth));
  }
  return out;
}

struct RetrievalOutcome {
  std::vector<std::vector<InstancePrediction>> predictions;  // per image
  std::size_t instances = 0;
  std::size_t exact_hits = 0;  // GT instances whose own mask was retrieved for their class
  double map50 = 0.0;

  double exact_rate() const { return instances == 0 ? 0.0 : static_cast<double>(exact_hits) / static_cast<double>(instances); }
  double objective() const { return 0.5 * (map50 + exact_rate()); }
};

inline RetrievalOutcome evaluate_retrieval(const NetworkSpec& net, const std::vector<Tensor>& images,
                                           const std::vector<EvalSample>& truth,
                                           const std::vector<std::vector<SegmentProposal>>& galleries,
                                           const StimulationConfig& stim, const RetrievalParams& params) {
  if (images.size() != truth.size() || images.size() != galleries.size())
    throw std::invalid_argument("evaluate_retrieval: images, truth and galleries differ in length");
  RetrievalOutcome out;
  for (std::size_t n = 0; n < images.size(); ++n) {
    auto preds = segment_instances(net, images[n], galleries[n], stim, params);
    for (const auto& g : truth[n].instances) {
      ++out.instances;
      for (const auto& p : preds)
        if (p.class_id == g.class_id && p.mask == g.mask) {
          ++out.exact_hits;
          break;
        }
    }
    out.predictions.push_back(std::move(preds));
  }
  out.map50 = map_r(out.predictions, truth, 0.5).aggregate;
  return out;
}

struct SweepPoint {
  RetrievalParams params;
  double map50 = 0.0;
  double exact_rate = 0.0;
  double objective = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  SweepPoint best;
};

/// Grid search over alpha x beta x background bias; the first point with the highest objective
/// (mean of mAP^r@0.5 and the exact-retrieval rate) wins.
inline SweepResult sweep_retrieval(const NetworkSpec& net, const std::vector<Tensor>& images,
                                   const std::vector<EvalSample>& truth,
                                   const std::vector<std::vector<SegmentProposal>>& galleries,
                                   const StimulationConfig& stim, RetrievalParams base,
                                   const std::vector<double>& alphas, const std::vector<double>& betas,
                                   const std::vector<double>& biases) {
  if (alphas.empty() || betas.empty() || biases.empty()) throw std::invalid_argument("sweep_retrieval: empty grid");
  SweepResult res;
  bool first = true;
  for (double bias : biases)
    for (double a : alphas)
      for (double b : betas) {
        RetrievalParams p = base;
        p.alpha = a;
        p.beta = b;
        p.background_bias = bias;
        const auto o = evaluate_retrieval(net, images, truth, galleries, stim, p);
        SweepPoint pt{p, o.map50, o.exact_rate(), o.objective()};
        if (first || pt.objective > res.best.objective) res.best = pt;
        first = false;
        res.grid.push_back(pt);
      }
  return res;
}

}  // namespace prm
