#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "prm/layers.hpp"
#include "prm/mask.hpp"
#include "prm/network.hpp"
#include "prm/peak_backprop.hpp"
#include "prm/peak_stim.hpp"

namespace prm {

struct SegmentProposal {
  long id = 0;
  BinaryMask mask;
};

struct RetrievalParams {
  double alpha = 1.0;            // instance-aware weight
  double beta = 1.0;             // class-aware weight
  double nms_iou = 0.5;
  double background_bias = 0.0;  // added to the map mean when thresholding Q
  double class_cutoff = 0.0;     // classes with s^c above this are segmented
};

inline void validate(const RetrievalParams& p) {
  if (p.alpha < 0.0 || p.beta < 0.0) throw std::invalid_argument("retrieval: alpha and beta must be >= 0");
  if (!(p.nms_iou > 0.0 && p.nms_iou <= 1.0)) throw std::invalid_argument("retrieval: nms_iou must lie in (0, 1]");
}

struct InstancePrediction {
  std::size_t class_id = 0;
  double confidence = 0.0;  // peak response value
  BinaryMask mask;
  double retrieval_score = 0.0;
  long proposal_id = -1;
  Peak peak;
};

struct BackgroundMask {
  BinaryMask q;
};

/// Q = 1 where the (upsampled) class response lies strictly below mean + bias.
inline BackgroundMask background_mask(const Tensor& plane, double bias = 0.0) {
  if (plane.channels() != 1) throw ShapeError("background_mask: expected a single plane, got " + to_string(plane.shape()));
  const double thr = plane.sum() / static_cast<double>(plane.size()) + bias;
  BackgroundMask bg{BinaryMask(plane.height(), plane.width())};
  for (std::size_t i = 0; i < plane.height(); ++i)
    for (std::size_t j = 0; j < plane.width(); ++j) bg.q.set(i, j, plane(0, i, j) < thr);
  return bg;
}

struct ScoreTerms {
  double instance = 0.0;  // sum R over S
  double boundary = 0.0;  // sum R over the contour of S
  double background = 0.0;  // fraction of S flagged as background

  double combine(const RetrievalParams& p) const { return p.alpha * instance + boundary - p.beta * background; }
};

inline ScoreTerms score_terms(const Tensor& prm_map, const BinaryMask& proposal, const BinaryMask& contour,
                              const BackgroundMask& bg) {
  if (prm_map.channels() != 1) throw ShapeError("score_proposal: PRM must be a single plane");
  require_same_dims(proposal, prm_map.height(), prm_map.width(), "score_proposal proposal");
  require_same_dims(contour, prm_map.height(), prm_map.width(), "score_proposal contour");
  require_same_dims(bg.q, prm_map.height(), prm_map.width(), "score_proposal background");
  ScoreTerms t;
  auto r = prm_map.plane(0);
  std::size_t area = 0, bg_in = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (proposal.at(k)) {
      t.instance += r[k];
      ++area;
      bg_in += bg.q.at(k);
    }
    if (contour.at(k)) t.boundary += r[k];
  }
  t.background = area == 0 ? 0.0 : static_cast<double>(bg_in) / static_cast<double>(area);
  return t;
}

inline double score_proposal(const PeakResponseMap& prm, const SegmentProposal& s, const BackgroundMask& bg,
                             const RetrievalParams& params) {
  return score_terms(prm.map, s.mask, morph_gradient(s.mask), bg).combine(params);
}

/// Greedy class-wise suppression in descending confidence (stable on ties).
inline std::vector<InstancePrediction> nms_masks(std::vector<InstancePrediction> preds, double iou_threshold) {
  std::stable_sort(preds.begin(), preds.end(),
                   [](const InstancePrediction& a, const InstancePrediction& b) { return a.confidence > b.confidence; });
  std::vector<InstancePrediction> kept;
  for (auto& p : preds) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const InstancePrediction& k) {
      return k.class_id == p.class_id && mask_iou(k.mask, p.mask) > iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(p));
  }
  return kept;
}

/// Everything produced while segmenting one image; `instances` is the post-NMS output.
struct SegmentationResult {
  ForwardTrace trace;
  ClassScores scores;
  PeakList peaks;
  std::vector<PeakResponseMap> prms;
  std::vector<InstancePrediction> candidates;  // one per walked peak, before NMS
  std::vector<InstancePrediction> instances;
};

inline SegmentationResult segment_image(const NetworkSpec& net, const Tensor& image,
                                        const std::vector<SegmentProposal>& gallery, const StimulationConfig& stim,
                                        const RetrievalParams& params) {
  validate(params);
  if (gallery.empty()) throw std::invalid_argument("segment_instances: empty proposal gallery");
  const std::size_t H = image.height(), W = image.width();
  std::vector<BinaryMask> contours;
  contours.reserve(gallery.size());
  for (const auto& s : gallery) {
    require_same_dims(s.mask, H, W, "segment_instances proposal");
    if (s.mask.empty()) throw std::invalid_argument("segment_instances: proposal " + std::to_string(s.id) + " is empty");
    contours.push_back(morph_gradient(s.mask));
  }

  SegmentationResult res;
  res.trace = network_forward(net, image);
  const Tensor& maps = res.trace.output;
  res.peaks = find_peaks(maps, stim);
  res.scores = stimulate_forward(maps, res.peaks);

  for (std::size_t c = 0; c < maps.channels(); ++c) {
    if (!(res.scores[c] > params.class_cutoff)) continue;
    const BackgroundMask bg = background_mask(bilinear_upsample(maps.channel(c), H, W), params.background_bias);
    for (const Peak& peak : res.peaks.peaks[c]) {
      PeakResponseMap prm = peak_response_map(net, res.trace, c, peak);
      std::size_t best = 0;
      double best_score = 0.0;
      for (std::size_t k = 0; k < gallery.size(); ++k) {
        const double s = score_terms(prm.map, gallery[k].mask, contours[k], bg).combine(params);
        if (k == 0 || s > best_score) {
          best = k;
          best_score = s;
        }
      }
      res.candidates.push_back({c, peak.value, gallery[best].mask, best_score, gallery[best].id, peak});
      res.prms.push_back(std::move(prm));
    }
  }
  res.instances = nms_masks(res.candidates, params.nms_iou);
  return res;
}

inline std::vector<InstancePrediction> segment_instances(const NetworkSpec& net, const Tensor& image,
                                                         const std::vector<SegmentProposal>& gallery,
                                                         const StimulationConfig& stim, const RetrievalParams& params) {
  return segment_image(net, image, gallery, stim, params).instances;
}

}  // namespace prm
