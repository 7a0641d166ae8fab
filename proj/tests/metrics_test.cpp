#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "prm/metrics.hpp"
#include "prm/synthetic.hpp"

using namespace prm;

namespace {

BinaryMask rect(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
  BinaryMask m(h, w);
  for (std::size_t i = r0; i <= r1; ++i)
    for (std::size_t j = c0; j <= c1; ++j) m.set(i, j);
  return m;
}

GtInstance gt(std::size_t cls, BinaryMask m) { return {cls, bounding_box(m), std::move(m)}; }

InstancePrediction pred(std::size_t cls, double conf, BinaryMask m) {
  InstancePrediction p;
  p.class_id = cls;
  p.confidence = conf;
  p.mask = std::move(m);
  return p;
}

EvalSample sample(std::vector<GtInstance> inst, std::size_t classes = 1, std::size_t h = 8, std::size_t w = 8) {
  EvalSample s;
  s.height = h;
  s.width = w;
  s.labels.assign(classes, 0);
  for (const auto& g : inst) s.labels[g.class_id] = 1;
  s.instances = std::move(inst);
  return s;
}

}  // namespace

TEST(AveragePrecision, HandRanking) {
  EXPECT_NEAR(average_precision({true, false, true, false}, 2), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(average_precision({true, true}, 2), 1.0);
  EXPECT_EQ(average_precision({false, false}, 2), 0.0);
  EXPECT_EQ(average_precision({true}, 2), 0.5);  // unrecalled positive costs precision
  EXPECT_EQ(average_precision({}, 0), 0.0);
}

TEST(PointLocalization, InsideAndOutside) {
  std::vector<EvalSample> s{sample({gt(0, rect(8, 8, 1, 1, 3, 3))}), sample({gt(0, rect(8, 8, 4, 4, 6, 6))})};
  std::vector<std::vector<PointPrediction>> in{{{0.9, 2, 2}}, {{0.8, 5, 5}}};
  std::vector<std::vector<PointPrediction>> out{{{0.9, 6, 6}}, {{0.8, 0, 0}}};
  EXPECT_EQ(point_localization_ap(in, s).aggregate, 1.0);
  EXPECT_EQ(point_localization_ap(out, s).aggregate, 0.0);
}

TEST(PointLocalization, FourImageRanking) {
  const BinaryMask box = rect(8, 8, 2, 2, 5, 5);
  std::vector<EvalSample> s{sample({gt(0, box)}), sample({}), sample({gt(0, box)}), sample({})};
  std::vector<std::vector<PointPrediction>> p{{{0.9, 3, 3}}, {{0.7, 3, 3}}, {{0.5, 3, 3}}, {{0.2, 3, 3}}};
  EXPECT_NEAR(point_localization_ap(p, s).aggregate, 0.8333333333333333, 1e-12);
}

TEST(PrmQuality, Ratios) {
  const EvalSample s = sample({gt(0, rect(8, 8, 0, 0, 3, 3)), gt(1, rect(8, 8, 4, 4, 7, 7))}, 2);
  Tensor r(1, 8, 8);
  r(0, 1, 1) = 2.0;
  EXPECT_EQ(prm_quality(r, 0, s), 1.0);
  EXPECT_EQ(prm_quality(r, 1, s), 0.0);
  r(0, 6, 1) = 2.0;
  EXPECT_EQ(prm_quality(r, 0, s), 0.5);
  EXPECT_EQ(prm_quality(Tensor(1, 8, 8), 0, s), 0.0);
  EXPECT_EQ(prm_quality(r, 2, s), 0.0);
}

TEST(PrmQuality, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const EvalSample s = sample({gt(0, rect(8, 8, 1, 2, 5, 6))});
  Tensor r(1, 8, 8);
  for (double& v : r.data()) v = u(rng);
  Tensor scaled = r;
  for (double& v : scaled.data()) v *= 7.5;
  EXPECT_NEAR(prm_quality(r, 0, s), prm_quality(scaled, 0, s), 1e-14);
}

TEST(MapR, PerfectAndEmpty) {
  std::vector<EvalSample> s{sample({gt(0, rect(8, 8, 0, 0, 2, 2)), gt(1, rect(8, 8, 4, 4, 6, 7))}, 2)};
  std::vector<std::vector<InstancePrediction>> perfect{{pred(1, 0.1, s[0].instances[1].mask), pred(0, 0.3, s[0].instances[0].mask)}};
  for (const auto& r : map_r(perfect, s, {0.25, 0.5, 0.75})) EXPECT_EQ(r.aggregate, 1.0);
  EXPECT_EQ(map_r({{}}, s, 0.5).aggregate, 0.0);
}

TEST(MapR, DuplicateAfterMatchIsFalsePositive) {
  // GT 10 px; high-score prediction IoU 0.6, low-score IoU 0.9.
  const BinaryMask g = rect(1, 20, 0, 0, 0, 9);
  const BinaryMask hi = rect(1, 20, 0, 0, 0, 5);   // 6/10
  const BinaryMask lo = rect(1, 20, 0, 0, 0, 8);   // 9/10
  ASSERT_NEAR(mask_iou(hi, g), 0.6, 1e-15);
  ASSERT_NEAR(mask_iou(lo, g), 0.9, 1e-15);
  std::vector<EvalSample> s{sample({gt(0, g)}, 1, 1, 20)};
  EXPECT_EQ(map_r({{pred(0, 0.9, hi), pred(0, 0.4, lo)}}, s, 0.5).aggregate, 1.0);
  // at 0.75 only the low-score one qualifies: TP at rank 2
  EXPECT_EQ(map_r({{pred(0, 0.9, hi), pred(0, 0.4, lo)}}, s, 0.75).aggregate, 0.5);
}

TEST(MapR, NonIncreasingInThreshold) {
  SyntheticConfig cfg;
  cfg.count = 10;
  const auto data = gen_synthetic(cfg);
  std::vector<EvalSample> s;
  std::vector<std::vector<InstancePrediction>> p;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& d : data) {
    s.push_back(d.truth);
    std::vector<InstancePrediction> preds;
    for (const auto& g : make_jittered_gallery(d.truth, 6, mix_seed(5, s.size())))
      preds.push_back(pred(static_cast<std::size_t>(u(rng) * 3), u(rng), g.mask));
    p.push_back(preds);
  }
  double last = 2.0;
  for (double t = 0.05; t < 1.0; t += 0.1) {
    const double v = map_r(p, s, t).aggregate;
    EXPECT_LE(v, last + 1e-15);
    EXPECT_GE(v, 0.0);
    last = v;
  }
  // shuffling distinct-confidence predictions changes nothing
  auto shuffled = p;
  for (auto& v : shuffled) std::shuffle(v.begin(), v.end(), rng);
  EXPECT_EQ(map_r(p, s, 0.5).aggregate, map_r(shuffled, s, 0.5).aggregate);
  EXPECT_EQ(abo(p, s).aggregate, abo(shuffled, s).aggregate);
}

TEST(Abo, Examples) {
  const BinaryMask a = rect(8, 8, 0, 0, 1, 3), b = rect(8, 8, 4, 0, 7, 1);
  std::vector<EvalSample> s{sample({gt(0, a), gt(0, b)})};
  EXPECT_EQ(abo({{pred(0, 0.5, a), pred(0, 0.5, b)}}, s).aggregate, 1.0);
  EXPECT_EQ(abo({{}}, s).aggregate, 0.0);
  EXPECT_EQ(abo({{pred(0, 0.5, a), pred(0, 0.5, rect(8, 8, 4, 0, 5, 1))}}, s).aggregate, 0.75);
}

TEST(Abo, IgnoresConfidence) {
  const BinaryMask a = rect(8, 8, 0, 0, 2, 3);
  std::vector<EvalSample> s{sample({gt(0, a)})};
  const BinaryMask off = rect(8, 8, 1, 1, 3, 3);
  EXPECT_EQ(abo({{pred(0, 0.1, off)}}, s).aggregate, abo({{pred(0, 0.99, off)}}, s).aggregate);
}

TEST(MergeSemantic, Examples) {
  const BinaryMask a = rect(4, 4, 0, 0, 1, 2), b = rect(4, 4, 1, 1, 3, 3);
  EXPECT_EQ(merge_semantic({}, 4, 4), LabelMap(4, 4));
  const LabelMap one = merge_semantic({pred(2, 0.5, a)}, 4, 4);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(one.labels[k], a.at(k) ? 3 : 0);
  const LabelMap two = merge_semantic({pred(0, 0.2, a), pred(1, 0.9, b)}, 4, 4);
  EXPECT_EQ(two(1, 1), 2);
  EXPECT_EQ(two(0, 0), 1);
  const LabelMap tie = merge_semantic({pred(1, 0.5, a), pred(0, 0.5, b)}, 4, 4);
  EXPECT_EQ(tie(1, 1), 1);
}

TEST(Miou, Examples) {
  const EvalSample s = sample({gt(0, rect(4, 4, 0, 0, 1, 1))}, 1, 4, 4);
  const LabelMap g = gt_label_map(s);
  EXPECT_EQ(miou(g, g, 1).aggregate, 1.0);
  const MetricReport bg = miou(LabelMap(4, 4), g, 1);
  EXPECT_EQ(bg.per_class[1].value(), 0.0);

  // object has 4 GT pixels; prediction gets 2 of them and adds 2 background pixels
  LabelMap p(4, 4);
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {0, 1}, {3, 2}, {3, 3}})
    p.labels[i * 4 + j] = 1;
  const MetricReport half = miou(p, g, 1);
  EXPECT_NEAR(half.per_class[1].value(), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(half.per_class[0].value(), 10.0 / 14.0, 1e-15);
  EXPECT_NEAR(half.aggregate, (2.0 / 6.0 + 10.0 / 14.0) / 2.0, 1e-15);
  EXPECT_THROW(miou(LabelMap(4, 5), g, 1), ShapeError);
}

TEST(Reports, AbsentClassesExcluded) {
  const auto r = make_report("x", {0.5, std::nullopt, 1.0});
  EXPECT_EQ(r.aggregate, 0.75);
}
