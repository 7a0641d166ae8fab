#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "prm/gradcheck.hpp"
#include "prm/peak_stim.hpp"

using namespace prm;

namespace {

PeakList frozen(std::vector<std::vector<Peak>> p) { return PeakList{std::move(p)}; }

}  // namespace

TEST(FindPeaks, SingleCentre) {
  Tensor m(1, 3, 3);
  m(0, 1, 1) = 5.0;
  const PeakList p = find_peaks(m, {1, true});
  ASSERT_EQ(p.count(0), 1u);
  EXPECT_EQ(p.peaks[0][0], (Peak{1, 1, 5.0, false}));
}

TEST(FindPeaks, ConstantMapFallback) {
  const PeakList p = find_peaks(Tensor(2, 4, 5, 1.5), {});
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(p.count(c), 1u);
    EXPECT_EQ(p.peaks[c][0], (Peak{0, 0, 1.5, true}));
  }
  EXPECT_EQ(find_peaks(Tensor(1, 4, 5, 1.5), {3, false}).count(0), 0u);
}

TEST(FindPeaks, PlateauKeepsSmallestCoordinate) {
  Tensor m(1, 5, 5);
  m(0, 2, 2) = m(0, 2, 3) = m(0, 3, 3) = 4.0;  // one diagonal-connected plateau
  m(0, 0, 4) = 1.0;
  const PeakList p = find_peaks(m, {1, true});
  std::vector<Peak> top;
  for (const auto& pk : p.peaks[0])
    if (pk.value == 4.0) top.push_back(pk);
  ASSERT_EQ(top.size(), 1u);  // zero background far from the plateau also yields peaks
  EXPECT_EQ(top[0].row, 2u);
  EXPECT_EQ(top[0].col, 2u);
}

TEST(FindPeaks, BorderPeaksAdmissible) {
  Tensor m(1, 6, 6);
  m(0, 0, 5) = 2.0;
  m(0, 5, 0) = 3.0;
  const PeakList p = find_peaks(m, {2, true});
  std::set<std::pair<std::size_t, std::size_t>> at;
  for (const auto& pk : p.peaks[0]) at.insert({pk.row, pk.col});
  EXPECT_TRUE(at.count({0, 5}));
  EXPECT_TRUE(at.count({5, 0}));
}

TEST(FindPeaks, RandomMapsMatchBruteForce) {
  std::mt19937_64 rng(0xbeef);
  std::uniform_int_distribution<int> level(0, 5);
  for (int t = 0; t < 200; ++t) {
    // coarse levels make plateaus common
    Tensor m(1, 16, 16);
    for (double& v : m.data()) v = t % 2 ? level(rng) : oracle::random_tensor({1, 1, 1}, rng)(0, 0, 0);
    for (std::size_t r : {1u, 2u, 3u}) {
      const PeakList got = find_peaks(m, {r, true});
      EXPECT_EQ(got.peaks[0], oracle::peaks(m, 0, r)) << "trial " << t << " r " << r;
    }
  }
}

TEST(FindPeaks, EveryPeakDominatesItsWindow) {
  std::mt19937_64 rng(17);
  const Tensor m = oracle::random_tensor({3, 12, 9}, rng);
  const std::size_t r = 2;
  const PeakList p = find_peaks(m, {r, true});
  for (std::size_t c = 0; c < 3; ++c)
    for (const auto& pk : p.peaks[c]) {
      EXPECT_EQ(pk.value, m(c, pk.row, pk.col));
      for (std::size_t i = pk.row >= r ? pk.row - r : 0; i <= std::min<std::size_t>(11, pk.row + r); ++i)
        for (std::size_t j = pk.col >= r ? pk.col - r : 0; j <= std::min<std::size_t>(8, pk.col + r); ++j)
          EXPECT_GE(pk.value, m(c, i, j));
    }
}

TEST(FindPeaks, InvariantUnderConstantShift) {
  std::mt19937_64 rng(23);
  Tensor m(2, 10, 10);
  std::uniform_int_distribution<int> level(0, 7);
  for (double& v : m.data()) v = level(rng) * 0.25;
  Tensor shifted = m;
  for (double& v : shifted.data()) v += 3.0;  // exact on a 1/4 grid
  const PeakList a = find_peaks(m, {}), b = find_peaks(shifted, {});
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(a.count(c), b.count(c));
    for (std::size_t k = 0; k < a.count(c); ++k) {
      EXPECT_EQ(a.peaks[c][k].row, b.peaks[c][k].row);
      EXPECT_EQ(a.peaks[c][k].col, b.peaks[c][k].col);
    }
  }
}

TEST(FindPeaks, RadiusZeroRejected) { EXPECT_THROW(find_peaks(Tensor(1, 3, 3), {0, true}), std::invalid_argument); }

TEST(Stimulate, MeanOfPeakValues) {
  Tensor m(1, 1, 5);
  m(0, 0, 1) = 2.0;
  m(0, 0, 3) = 4.0;
  EXPECT_DOUBLE_EQ(stimulate_forward(m, frozen({{{0, 1, 2.0, false}, {0, 3, 4.0, false}}}))[0], 3.0);
  Tensor one(1, 3, 3);
  one(0, 1, 1) = 7.0;
  EXPECT_DOUBLE_EQ(stimulate_forward(one, find_peaks(one, {1, true}))[0], 7.0);
  const Tensor flat(1, 4, 4, -2.5);
  EXPECT_DOUBLE_EQ(stimulate_forward(flat, find_peaks(flat, {}))[0], -2.5);
}

TEST(Stimulate, EmptyClassRejected) {
  EXPECT_THROW(stimulate_forward(Tensor(1, 3, 3), frozen({{}})), std::invalid_argument);
  EXPECT_THROW(stimulate_forward(Tensor(2, 3, 3), frozen({{{0, 0, 0.0, true}}})), std::invalid_argument);
}

TEST(Stimulate, DominatesMean) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const Tensor m = oracle::random_tensor({3, 8, 8}, rng);
    const ClassScores s = stimulate_forward(m, find_peaks(m, {}));
    const ClassScores g = gap_forward(m);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_GE(s[c], g[c]);
  }
}

TEST(StimulateBackward, SplitsEvenlyOverPeaks) {
  const PeakList p = frozen({{{0, 0, 1.0, false}, {2, 2, 1.0, false}}});
  const Tensor g = stimulate_backward(p, {1.0}, {1, 3, 3});
  EXPECT_EQ(g(0, 0, 0), 0.5);
  EXPECT_EQ(g(0, 2, 2), 0.5);
  EXPECT_DOUBLE_EQ(g.sum(), 1.0);
  EXPECT_EQ(stimulate_backward(p, {0.0}, {1, 3, 3}), Tensor(1, 3, 3));
}

TEST(StimulateBackward, NonzeroCountAndSums) {
  std::mt19937_64 rng(37);
  const Tensor m = oracle::random_tensor({3, 10, 10}, rng);
  const PeakList p = find_peaks(m, {1, true});
  const ClassScores gs{0.3, -1.2, 2.0};
  const Tensor g = stimulate_backward(p, gs, m.shape());
  std::size_t nz = 0;
  for (double v : g.data()) nz += v != 0.0;
  EXPECT_EQ(nz, p.total());
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (double v : g.plane(c)) s += v;
    EXPECT_NEAR(s, gs[c], 1e-15);
  }
}

TEST(StimulateBackward, FrozenPeaksFiniteDifferences) {
  std::mt19937_64 rng(41);
  const Tensor m = oracle::random_tensor({2, 7, 7}, rng);
  const PeakList p = find_peaks(m, {1, true});
  const ClassScores w{0.7, -1.3};
  const Tensor g = stimulate_backward(p, w, m.shape());
  std::vector<double> x(m.data().begin(), m.data().end());
  const double h = 1e-6;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    auto f = [&] {
      const ClassScores s = stimulate_forward(Tensor(m.shape(), x), p);
      return w[0] * s[0] + w[1] * s[1];
    };
    x[k] = x0 + h;
    const double up = f();
    x[k] = x0 - h;
    const double down = f();
    x[k] = x0;
    EXPECT_NEAR((up - down) / (2 * h), g.data()[k], 1e-9);
  }
}

TEST(Gap, MeanOfMap) {
  EXPECT_DOUBLE_EQ(gap_forward(Tensor(1, 3, 3, 4.0))[0], 4.0);
  Tensor half(1, 2, 4);
  for (std::size_t j = 0; j < 4; ++j) half(0, 1, j) = 2.0;
  EXPECT_DOUBLE_EQ(gap_forward(half)[0], 1.0);
  std::mt19937_64 rng(43);
  const Tensor r = oracle::random_tensor({3, 5, 6}, rng);
  const ClassScores s = gap_forward(r);
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) acc += r(c, i, j);
    EXPECT_NEAR(s[c], acc / 30.0, 1e-15);
  }
}

TEST(Loss, SaturatedScoresNearZero) {
  EXPECT_LT(multilabel_loss({20.0, -20.0, 20.0}, {1, 0, 1}).loss, 1e-8);
}

TEST(Loss, ZeroScoresGiveLn2) {
  EXPECT_NEAR(multilabel_loss({0.0, 0.0, 0.0}, {1, 0, 1}).loss, 0.693147180559945, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(47);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(4);
    for (double& v : s) v = nd(rng);
    const std::vector<int> y{1, 0, 0, 1};
    const LossResult r = multilabel_loss(s, y);
    for (std::size_t k = 0; k < s.size(); ++k) {
      std::vector<double> a = s, b = s;
      a[k] += 1e-6;
      b[k] -= 1e-6;
      EXPECT_NEAR((multilabel_loss(a, y).loss - multilabel_loss(b, y).loss) / 2e-6, r.grad[k], 1e-9);
    }
  }
}

TEST(Loss, ExtremeScoresStayFinite) {
  const LossResult r = multilabel_loss({1e3, -1e3}, {0, 1});
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 1e3, 1e-9);
}

TEST(Loss, NonBinaryLabelsRejected) {
  EXPECT_THROW(multilabel_loss({0.0, 1.0}, {1, 2}), std::invalid_argument);
  EXPECT_THROW(multilabel_loss({0.0, 1.0}, {1}), std::invalid_argument);
}
