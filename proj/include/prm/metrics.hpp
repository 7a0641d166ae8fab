#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prm/mask.hpp"
#include "prm/retrieval.hpp"
#include "prm/tensor.hpp"

namespace prm {

/// Inclusive pixel rectangle.
struct Box {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;

  bool contains(std::size_t r, std::size_t c) const { return r >= row0 && r <= row1 && c >= col0 && c <= col1; }
  bool operator==(const Box&) const = default;
};

inline Box bounding_box(const BinaryMask& m) {
  Box b{m.height(), m.width(), 0, 0};
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j)
      if (m(i, j)) {
        b.row0 = std::min(b.row0, i);
        b.col0 = std::min(b.col0, j);
        b.row1 = std::max(b.row1, i);
        b.col1 = std::max(b.col1, j);
      }
  return b;
}

struct GtInstance {
  std::size_t class_id = 0;
  Box box;
  BinaryMask mask;
};

struct EvalSample {
  std::size_t height = 0, width = 0;
  std::vector<int> labels;  // image-level, one per class
  std::vector<GtInstance> instances;
};

struct MetricReport {
  std::string name;
  std::vector<std::optional<double>> per_class;  // nullopt: class excluded from the mean
  double aggregate = 0.0;
};

inline MetricReport make_report(std::string name, std::vector<std::optional<double>> per_class) {
  MetricReport r{std::move(name), std::move(per_class), 0.0};
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& v : r.per_class)
    if (v) {
      acc += *v;
      ++n;
    }
  r.aggregate = n == 0 ? 0.0 : acc / static_cast<double>(n);
  return r;
}

/// Precision at each true-positive rank, summed and divided by the number of positives.
/// `hits` must already be in descending-confidence order.
inline double average_precision(const std::vector<bool>& hits, std::size_t num_positives) {
  if (num_positives == 0) return 0.0;
  double acc = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (hits[k]) {
      ++tp;
      acc += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  return acc / static_cast<double>(num_positives);
}

namespace detail {

template <class T, class Key>
std::vector<std::size_t> order_by_desc(const std::vector<T>& items, Key key) {
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(items[a]) > key(items[b]); });
  return idx;
}

inline std::size_t infer_num_classes(const std::vector<EvalSample>& samples) {
  std::size_t n = 0;
  for (const auto& s : samples) {
    n = std::max(n, s.labels.size());
    for (const auto& g : s.instances) n = std::max(n, g.class_id + 1);
  }
  return n;
}

}  // namespace detail

/// Score and location of the strongest class peak in one image (image coordinates).
struct PointPrediction {
  double score = 0.0;
  std::size_t row = 0, col = 0;
};

/// Pointwise localization: per class, every image is ranked by its class score and counts as a
/// hit iff its max-peak location falls in a same-class GT box. Classes with no positive image
/// are excluded.
inline MetricReport point_localization_ap(const std::vector<std::vector<PointPrediction>>& per_image,
                                          const std::vector<EvalSample>& samples) {
  if (per_image.size() != samples.size()) throw std::invalid_argument("point_localization_ap: image count mismatch");
  const std::size_t C = detail::infer_num_classes(samples);
  std::vector<std::optional<double>> per_class(C);
  for (std::size_t c = 0; c < C; ++c) {
    struct Entry {
      double score;
      bool hit;
    };
    std::vector<Entry> entries;
    std::size_t positives = 0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
      bool has_class = false, hit = false;
      const auto& pp = per_image[n].at(c);
      for (const auto& g : samples[n].instances) {
        if (g.class_id != c) continue;
        has_class = true;
        hit = hit || g.box.contains(pp.row, pp.col);
      }
      positives += has_class;
      entries.push_back({pp.score, hit});
    }
    if (positives == 0) continue;
    std::vector<bool> hits;
    for (std::size_t k : detail::order_by_desc(entries, [](const Entry& e) { return e.score; }))
      hits.push_back(entries[k].hit);
    per_class[c] = average_precision(hits, positives);
  }
  return make_report("pointwise_localization_map", std::move(per_class));
}

/// Largest fraction of PRM energy inside a same-class GT mask; 0 with no such mask or zero energy.
inline double prm_quality(const Tensor& prm_map, std::size_t class_id, const EvalSample& sample) {
  const double total = prm_map.sum();
  if (total <= 0.0) return 0.0;
  double best = 0.0;
  for (const auto& g : sample.instances) {
    if (g.class_id != class_id) continue;
    best = std::max(best, masked_sum(prm_map.plane(0), g.mask) / total);
  }
  return best;
}

inline double prm_quality(const PeakResponseMap& prm, const EvalSample& sample) {
  return prm_quality(prm.map, prm.class_id, sample);
}

/// Instance-mask mAP at one IoU threshold: greedy descending-confidence matching, each GT used once.
inline MetricReport map_r(const std::vector<std::vector<InstancePrediction>>& per_image,
                          const std::vector<EvalSample>& samples, double threshold) {
  if (per_image.size() != samples.size()) throw std::invalid_argument("map_r: image count mismatch");
  std::size_t C = detail::infer_num_classes(samples);
  for (const auto& preds : per_image)
    for (const auto& p : preds) C = std::max(C, p.class_id + 1);

  std::vector<std::optional<double>> per_class(C);
  for (std::size_t c = 0; c < C; ++c) {
    struct Ref {
      std::size_t image, index;
      double confidence;
    };
    std::vector<Ref> refs;
    std::size_t num_gt = 0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
      for (const auto& g : samples[n].instances) num_gt += g.class_id == c;
      for (std::size_t k = 0; k < per_image[n].size(); ++k)
        if (per_image[n][k].class_id == c) refs.push_back({n, k, per_image[n][k].confidence});
    }
    if (num_gt == 0 && refs.empty()) continue;

    std::vector<std::vector<bool>> used(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) used[n].assign(samples[n].instances.size(), false);
    std::vector<bool> hits;
    for (std::size_t r : detail::order_by_desc(refs, [](const Ref& x) { return x.confidence; })) {
      const auto& ref = refs[r];
      const auto& pred = per_image[ref.image][ref.index];
      const auto& gts = samples[ref.image].instances;
      double best = -1.0;
      std::size_t best_k = gts.size();
      for (std::size_t k = 0; k < gts.size(); ++k) {
        if (gts[k].class_id != c || used[ref.image][k]) continue;
        const double iou = mask_iou(pred.mask, gts[k].mask);
        if (iou > best) {
          best = iou;
          best_k = k;
        }
      }
      const bool tp = best_k < gts.size() && best >= threshold;
      if (tp) used[ref.image][best_k] = true;
      hits.push_back(tp);
    }
    per_class[c] = average_precision(hits, num_gt);
  }
  return make_report("mAP^r@" + std::to_string(threshold).substr(0, 4), std::move(per_class));
}

inline std::vector<MetricReport> map_r(const std::vector<std::vector<InstancePrediction>>& per_image,
                                       const std::vector<EvalSample>& samples, const std::vector<double>& thresholds) {
  std::vector<MetricReport> out;
  for (double t : thresholds) out.push_back(map_r(per_image, samples, t));
  return out;
}

/// Average Best Overlap: per class, mean over GT instances of the best same-class prediction IoU.
inline MetricReport abo(const std::vector<std::vector<InstancePrediction>>& per_image,
                        const std::vector<EvalSample>& samples) {
  if (per_image.size() != samples.size()) throw std::invalid_argument("abo: image count mismatch");
  const std::size_t C = detail::infer_num_classes(samples);
  std::vector<double> sum(C, 0.0);
  std::vector<std::size_t> count(C, 0);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    for (const auto& g : samples[n].instances) {
      double best = 0.0;
      for (const auto& p : per_image[n])
        if (p.class_id == g.class_id) best = std::max(best, mask_iou(p.mask, g.mask));
      sum[g.class_id] += best;
      ++count[g.class_id];
    }
  }
  std::vector<std::optional<double>> per_class(C);
  for (std::size_t c = 0; c < C; ++c)
    if (count[c] > 0) per_class[c] = sum[c] / static_cast<double>(count[c]);
  return make_report("ABO", std::move(per_class));
}

/// Dense label map; 0 is background and class c is stored as c + 1.
struct LabelMap {
  std::size_t height = 0, width = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {}
  int operator()(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
  bool operator==(const LabelMap&) const = default;
};

/// Each pixel takes the class of the most confident covering prediction (lower class id on ties).
inline LabelMap merge_semantic(const std::vector<InstancePrediction>& preds, std::size_t height, std::size_t width) {
  LabelMap out(height, width);
  std::vector<double> best(height * width, 0.0);
  std::vector<bool> covered(height * width, false);
  for (const auto& p : preds) {
    require_same_dims(p.mask, height, width, "merge_semantic");
    const int label = static_cast<int>(p.class_id) + 1;
    for (std::size_t k = 0; k < out.labels.size(); ++k) {
      if (!p.mask.at(k)) continue;
      if (!covered[k] || p.confidence > best[k] || (p.confidence == best[k] && label < out.labels[k])) {
        covered[k] = true;
        best[k] = p.confidence;
        out.labels[k] = label;
      }
    }
  }
  return out;
}

inline LabelMap gt_label_map(const EvalSample& s) {
  LabelMap out(s.height, s.width);
  for (const auto& g : s.instances)
    for (std::size_t k = 0; k < out.labels.size(); ++k)
      if (g.mask.at(k)) out.labels[k] = static_cast<int>(g.class_id) + 1;
  return out;
}

/// Pixel IoU per label (background + num_classes), accumulated over all map pairs and averaged
/// over labels present in either GT or prediction.
inline MetricReport miou(const std::vector<std::pair<LabelMap, LabelMap>>& pred_gt, std::size_t num_classes) {
  const std::size_t L = num_classes + 1;
  std::vector<std::size_t> inter(L, 0), uni(L, 0);
  for (const auto& [pred, gt] : pred_gt) {
    if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("miou: label map dims differ");
    for (std::size_t k = 0; k < gt.labels.size(); ++k) {
      const auto a = static_cast<std::size_t>(pred.labels[k]), b = static_cast<std::size_t>(gt.labels[k]);
      if (a >= L || b >= L) throw std::invalid_argument("miou: label out of range");
      if (a == b) {
        ++inter[a];
        ++uni[a];
      } else {
        ++uni[a];
        ++uni[b];
      }
    }
  }
  std::vector<std::optional<double>> per_class(L);
  for (std::size_t l = 0; l < L; ++l)
    if (uni[l] > 0) per_class[l] = static_cast<double>(inter[l]) / static_cast<double>(uni[l]);
  return make_report("mIoU", std::move(per_class));
}

inline MetricReport miou(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes) {
  return miou(std::vector<std::pair<LabelMap, LabelMap>>{{pred, gt}}, num_classes);
}

}  // namespace prm
