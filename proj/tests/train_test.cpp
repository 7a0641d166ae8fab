#include <gtest/gtest.h>

#include <cmath>

#include "prm/network.hpp"
#include "prm/synthetic.hpp"
#include "prm/train.hpp"

using namespace prm;

namespace {

std::vector<LabeledImage> small_set(std::size_t n) {
  SyntheticConfig cfg;
  cfg.count = n;
  cfg.image_size = 34;
  std::vector<LabeledImage> out;
  for (const auto& s : gen_synthetic(cfg)) out.push_back(to_labeled(s));
  return out;
}

std::vector<double> flat(const NetworkSpec& net) {
  std::vector<double> v;
  for_each_param(net, [&](double p) { v.push_back(p); });
  return v;
}

}  // namespace

TEST(TrainToy, ZeroLearningRateLeavesParameters) {
  const auto data = small_set(6);
  const NetworkSpec net = make_toy_network(3, 3, 1);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.0;
  EXPECT_EQ(train_toy(net, data, cfg), net);
}

TEST(TrainToy, OneStepFollowsFirstOrderTaylor) {
  const auto data = small_set(1);
  const NetworkSpec net = make_toy_network(3, 3, 2);
  for (Aggregation agg : {Aggregation::PeakStimulation, Aggregation::GlobalAverage}) {
    const SampleGradient g = sample_gradient(net, data[0], agg, {});
    double norm2 = 0.0;
    for (double v : g.grad) norm2 += v * v;
    ASSERT_GT(norm2, 0.0);
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.batch_size = 1;
    cfg.aggregation = agg;
    cfg.learning_rate = 1e-4 / norm2;
    const NetworkSpec after = train_toy(net, data, cfg);
    const double delta = dataset_loss(after, data, agg, {}) - dataset_loss(net, data, agg, {});
    const double predicted = -cfg.learning_rate * norm2;
    EXPECT_NEAR(delta / predicted, 1.0, 1e-2);
  }
}

TEST(TrainToy, DeterministicForSeed) {
  const auto data = small_set(10);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 3;
  const NetworkSpec a = train_toy(make_toy_network(3, 3, 4), data, cfg);
  const NetworkSpec b = train_toy(make_toy_network(3, 3, 4), data, cfg);
  EXPECT_EQ(flat(a), flat(b));
  cfg.seed = 8;
  EXPECT_NE(flat(train_toy(make_toy_network(3, 3, 4), data, cfg)), flat(a));
}

TEST(TrainToy, LossDropsOverShortRun) {
  const auto data = small_set(24);
  const NetworkSpec net = make_toy_network(3, 3, 5);
  TrainConfig cfg;
  cfg.steps = 60;
  const NetworkSpec after = train_toy(net, data, cfg);
  EXPECT_LT(dataset_loss(after, data, cfg.aggregation, {}), dataset_loss(net, data, cfg.aggregation, {}));
}

TEST(TrainToy, DivergenceAborts) {
  const auto data = small_set(4);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e150;
  EXPECT_THROW(train_toy(make_toy_network(3, 3, 6), data, cfg), TrainingDiverged);
}

TEST(TrainToy, RejectsBadInputs) {
  TrainConfig cfg;
  EXPECT_THROW(train_toy(make_toy_network(3, 3, 1), {}, cfg), std::invalid_argument);
  cfg.batch_size = 0;
  EXPECT_THROW(train_toy(make_toy_network(3, 3, 1), small_set(2), cfg), std::invalid_argument);
}

TEST(SampleGradient, MatchesNetworkParamCount) {
  const auto data = small_set(1);
  const NetworkSpec net = make_toy_network(3, 3, 9);
  EXPECT_EQ(sample_gradient(net, data[0], Aggregation::PeakStimulation, {}).grad.size(), net.param_count());
}
