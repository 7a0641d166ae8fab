#include <gtest/gtest.h>

#include <set>

#include "prm/synthetic.hpp"

using namespace prm;

TEST(Synthetic, SameSeedSameData) {
  SyntheticConfig cfg;
  cfg.count = 20;
  const auto a = gen_synthetic(cfg), b = gen_synthetic(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(a[k].image == b[k].image);
    EXPECT_EQ(a[k].truth.labels, b[k].truth.labels);
    ASSERT_EQ(a[k].truth.instances.size(), b[k].truth.instances.size());
    for (std::size_t g = 0; g < a[k].truth.instances.size(); ++g)
      EXPECT_EQ(a[k].truth.instances[g].mask, b[k].truth.instances[g].mask);
  }
  cfg.seed = 8;
  EXPECT_FALSE(gen_synthetic(cfg)[0].image == a[0].image);
}

TEST(Synthetic, SingleInstance) {
  SyntheticConfig cfg;
  cfg.count = 100;
  cfg.max_instances = 1;
  for (const auto& s : gen_synthetic(cfg)) EXPECT_EQ(s.truth.instances.size(), 1u);
}

TEST(Synthetic, InvariantsOverThousandSamples) {
  SyntheticConfig cfg;
  cfg.count = 1000;
  std::set<std::size_t> counts;
  for (const auto& s : gen_synthetic(cfg)) {
    const auto& inst = s.truth.instances;
    counts.insert(inst.size());
    ASSERT_GE(inst.size(), 1u);
    ASSERT_LE(inst.size(), cfg.max_instances);
    std::vector<int> seen(cfg.num_classes, 0);
    for (std::size_t a = 0; a < inst.size(); ++a) {
      EXPECT_FALSE(inst[a].mask.empty());
      EXPECT_EQ(inst[a].box, bounding_box(inst[a].mask));
      seen[inst[a].class_id] = 1;
      for (std::size_t b = a + 1; b < inst.size(); ++b)
        for (std::size_t k = 0; k < inst[a].mask.size(); ++k) ASSERT_FALSE(inst[a].mask.at(k) && inst[b].mask.at(k));
    }
    EXPECT_EQ(seen, s.truth.labels);
    for (double v : s.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(counts.size(), cfg.max_instances);
}

TEST(Synthetic, RejectsBadConfigs) {
  SyntheticConfig cfg;
  cfg.count = 1;
  cfg.max_instances = 40;
  EXPECT_THROW(gen_synthetic(cfg), InfeasibleLayout);
  cfg = {};
  cfg.image_size = 16;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
  cfg = {};
  cfg.num_classes = 1;
  EXPECT_THROW(gen_synthetic(cfg), std::invalid_argument);
}

TEST(Synthetic, ClassesLookDifferent) {
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) EXPECT_NE(class_color(a, 3), class_color(b, 3));
}

TEST(Gallery, HoldsTruthAndDistractors) {
  SyntheticConfig cfg;
  cfg.count = 30;
  for (const auto& s : gen_synthetic(cfg)) {
    const auto g = make_jittered_gallery(s.truth, 20, 11);
    EXPECT_GE(g.size(), s.truth.instances.size() + 15);
    std::set<long> ids;
    for (const auto& p : g) {
      EXPECT_FALSE(p.mask.empty());
      ids.insert(p.id);
    }
    EXPECT_EQ(ids.size(), g.size());
    for (const auto& t : s.truth.instances)
      EXPECT_TRUE(std::any_of(g.begin(), g.end(), [&](const SegmentProposal& p) { return p.mask == t.mask; }));
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = a + 1; b < g.size(); ++b) EXPECT_NE(g[a].mask, g[b].mask);
    const auto again = make_jittered_gallery(s.truth, 20, 11);
    ASSERT_EQ(again.size(), g.size());
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(again[k].mask, g[k].mask);
  }
}
