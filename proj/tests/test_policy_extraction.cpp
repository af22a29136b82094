#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hvacdt;
using hvacdt::testing::PlantModel;
using hvacdt::testing::random_features;
using hvacdt::testing::TempDir;

namespace {

std::vector<FeatureVector> synthetic_history(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureVector> h;
  for (std::size_t i = 0; i < n; ++i) h.push_back(random_features(rng));
  return h;
}

MPCConfig cheap_mpc(std::uint64_t seed = 9) {
  MPCConfig m;
  m.sample_number = 40;
  m.horizon = 3;
  m.repeats = 3;
  m.seed = seed;
  return m;
}

}  // namespace

TEST(Augment, ZeroNoiseReturnsAHistoryRow) {
  const Augmenter aug(synthetic_history(50, 1));
  Rng rng(61);
  for (int i = 0; i < 500; ++i) {
    const auto x = aug.sample(rng, 0.0);
    EXPECT_NE(std::find(aug.history().begin(), aug.history().end(), x), aug.history().end());
  }
}

TEST(Augment, ConstantFeatureIsNotPerturbed) {
  auto h = synthetic_history(100, 2);
  for (auto& x : h) x[kOutdoorRh] = 50.0;
  const Augmenter aug(h);
  EXPECT_EQ(aug.sigma()[kOutdoorRh], 0.0);
  Rng rng(62);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(aug.sample(rng, 0.5)[kOutdoorRh], 50.0);
}

TEST(Augment, NoiseAddsScaledVariance) {
  // Var(sample) = Var(history) * (1 + eta^2) for unclamped coordinates.
  const Augmenter aug(synthetic_history(2000, 3));
  const double eta = 0.5;
  Rng rng(63);
  const int n = 100000;
  for (std::size_t f : {std::size_t{kZoneTemp}, std::size_t{kOutdoorTemp}}) {
    double mean = 0, m2 = 0;
    Rng r(rng());
    for (int i = 0; i < n; ++i) {
      const double v = aug.sample(r, eta)[f];
      const double delta = v - mean;
      mean += delta / (i + 1);
      m2 += delta * (v - mean);
    }
    const double var = m2 / n;
    const double expected = aug.sigma()[f] * aug.sigma()[f] * (1 + eta * eta);
    EXPECT_NEAR(var / expected, 1.0, 0.05) << kFeatureNames[f];
  }
}

TEST(Augment, OutputsStayPhysical) {
  const Augmenter aug(synthetic_history(200, 4));
  Rng rng(64);
  for (int i = 0; i < 20000; ++i) {
    const auto x = aug.sample(rng, 2.0);
    EXPECT_GE(x[kOccupantCount], 0.0);
    EXPECT_EQ(x[kOccupantCount], std::round(x[kOccupantCount]));
    EXPECT_GE(x[kOutdoorRh], 0.0);
    EXPECT_LE(x[kOutdoorRh], 100.0);
    EXPECT_GE(x[kWindSpeed], 0.0);
    EXPECT_GE(x[kSolarRad], 0.0);
  }
}

TEST(Augment, RejectsEmptyHistoryAndNegativeNoise) {
  EXPECT_THROW(Augmenter(std::vector<FeatureVector>{}), PreconditionError);
  const Augmenter aug(synthetic_history(5, 5));
  Rng rng(65);
  EXPECT_THROW(augment_sample(aug, NoiseConfig{-0.1, 0}, rng), PreconditionError);
}

TEST(DecisionDataset, RecordsAreValidAndCounted) {
  const Augmenter aug(synthetic_history(100, 6));
  DatasetStats stats;
  const auto mpc = cheap_mpc();
  const auto d = build_decision_dataset(PlantModel{}, aug, 100, NoiseConfig{0.01, 7}, mpc, RewardConfig{}, &stats);
  ASSERT_EQ(d.size(), 100u);
  for (const auto& r : d) {
    EXPECT_TRUE(SetpointAction::valid(r.a_star.heat_sp(), r.a_star.cool_sp()));
    for (double v : r.x) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(stats.model_calls, 100u * 3 * 40 * 3);
  EXPECT_THROW(build_decision_dataset(PlantModel{}, aug, 0, NoiseConfig{}, mpc, RewardConfig{}), PreconditionError);
}

TEST(DecisionDataset, EnergyOnlyRewardLabelsEverythingOff) {
  const Augmenter aug(synthetic_history(100, 8));
  MPCConfig mpc;
  mpc.horizon = 1;
  mpc.sample_number = 2000;
  mpc.repeats = 3;
  RewardConfig reward;
  reward.w_e_occupied = 1.0;
  const auto d = build_decision_dataset(PlantModel{}, aug, 20, NoiseConfig{0.01, 1}, mpc, reward);
  for (const auto& r : d) EXPECT_EQ(r.a_star, SetpointAction::off());
}

TEST(DecisionDataset, ShorterDatasetIsPrefixAndSeeded) {
  const Augmenter aug(synthetic_history(100, 9));
  const auto mpc = cheap_mpc();
  const NoiseConfig noise{0.05, 11};
  const auto big = build_decision_dataset(PlantModel{}, aug, 30, noise, mpc, RewardConfig{});
  const auto small = build_decision_dataset(PlantModel{}, aug, 12, noise, mpc, RewardConfig{});
  for (std::size_t i = 0; i < small.size(); ++i) {
    EXPECT_EQ(small[i].x, big[i].x);
    EXPECT_EQ(small[i].a_star, big[i].a_star);
  }
  const auto tail = build_decision_dataset(PlantModel{}, aug, 10, noise, mpc, RewardConfig{}, nullptr, 20);
  for (std::size_t i = 0; i < tail.size(); ++i) EXPECT_EQ(tail[i].x, big[20 + i].x);
  const auto other = build_decision_dataset(PlantModel{}, aug, 12, NoiseConfig{0.05, 12}, mpc, RewardConfig{});
  EXPECT_NE(other[0].x, small[0].x);
}

TEST(DecisionDataset, CsvRoundTripIsExact) {
  const Augmenter aug(synthetic_history(50, 10));
  const auto d = build_decision_dataset(PlantModel{}, aug, 25, NoiseConfig{0.3, 2}, cheap_mpc(), RewardConfig{});
  const TempDir dir;
  save_decisions_csv(dir.file("d.csv"), d);
  const auto back = load_decisions_csv(dir.file("d.csv"));
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].x, d[i].x);
    EXPECT_EQ(back[i].a_star, d[i].a_star);
  }
}

TEST(DecisionDataset, CsvRejectsInvalidPair) {
  const TempDir dir;
  std::string body = std::string(kDecisionCsvHeader) + "\n20,5,50,1,0,3,24,22\n";
  EXPECT_THROW(load_decisions_csv(dir.write("bad.csv", body)), ParseError);
}

TEST(Diagnostics, EntropyAndDistanceExamples) {
  const std::vector<double> half{0.5, 0.5}, one{1.0, 0.0}, other{0.0, 1.0};
  EXPECT_DOUBLE_EQ(shannon_entropy_bits(half), 1.0);
  EXPECT_EQ(shannon_entropy_bits(one), 0.0);
  EXPECT_EQ(jensen_shannon_distance(half, half), 0.0);
  EXPECT_DOUBLE_EQ(jensen_shannon_distance(one, other), 1.0);
  EXPECT_THROW(jensen_shannon_distance(half, std::vector<double>{1.0}), PreconditionError);
}

TEST(Diagnostics, HistogramsOverJointRange) {
  using S = std::array<double, 1>;
  const std::vector<S> p{{0.0}, {1.0}}, q{{0.0}, {1.0}}, far{{10.0}, {11.0}};
  auto same = distribution_diagnostics<1>(p, q, 2);
  EXPECT_DOUBLE_EQ(same.entropy_bits[0], 1.0);
  EXPECT_EQ(same.jsd[0], 0.0);
  auto disjoint = distribution_diagnostics<1>(p, far, 20);
  EXPECT_DOUBLE_EQ(disjoint.jsd[0], 1.0);
  EXPECT_THROW(distribution_diagnostics<1>(p, std::vector<S>{}), PreconditionError);
}

TEST(Diagnostics, MoreNoiseMovesFurtherFromHistory) {
  const Augmenter aug(synthetic_history(500, 11));
  std::vector<double> distances;
  for (double eta : {0.0, 0.5, 2.0}) {
    Rng rng(66);
    std::vector<FeatureVector> s;
    for (int i = 0; i < 5000; ++i) s.push_back(aug.sample(rng, eta));
    distances.push_back(
        distribution_diagnostics<kFeatureCount>(s, std::span<const FeatureVector>(aug.history()), 20).mean_jsd);
  }
  EXPECT_LT(distances[0], distances[1]);
  EXPECT_LT(distances[1], distances[2]);
}

TEST(Cart, PureDataGivesSingleLeaf) {
  Rng rng(67);
  std::vector<DecisionRecord> d;
  for (int i = 0; i < 50; ++i) d.push_back({random_features(rng), SetpointAction(21, 24)});
  const auto t = fit_cart(d);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.depth(), 0);
  EXPECT_EQ(t.node(0).action, SetpointAction(21, 24));
}

TEST(Cart, SeparatedByTemperatureSplitsAtMidpoint) {
  // Every other feature is a constant, so only zone_temp can split. Hand
  // computed: the only gap whose split is pure is (20.5, 21.5).
  std::vector<DecisionRecord> d;
  for (double t : {18.0, 19.5, 20.5}) d.push_back({{t, 5, 50, 1, 0, 3}, SetpointAction(22, 24)});
  for (double t : {21.5, 22.0, 25.0}) d.push_back({{t, 5, 50, 1, 0, 3}, SetpointAction(15, 30)});
  const auto t = fit_cart(d);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.node(0).feature, kZoneTemp);
  EXPECT_DOUBLE_EQ(t.node(0).threshold, 21.0);
  EXPECT_EQ(t.node(t.node(0).left).action, SetpointAction(22, 24));
  EXPECT_EQ(t.node(t.node(0).right).action, SetpointAction(15, 30));
}

TEST(Cart, SplitTieGoesToLowestFeature) {
  // Features 0 and 2 separate the labels equally well.
  std::vector<DecisionRecord> d{{{1, 0, 1, 0, 0, 0}, SetpointAction(20, 24)},
                                {{2, 0, 2, 0, 0, 0}, SetpointAction(20, 24)},
                                {{3, 0, 3, 0, 0, 0}, SetpointAction(15, 30)},
                                {{4, 0, 4, 0, 0, 0}, SetpointAction(15, 30)}};
  const auto t = fit_cart(d);
  EXPECT_EQ(t.node(0).feature, 0);
  EXPECT_DOUBLE_EQ(t.node(0).threshold, 2.5);
}

TEST(Cart, MajorityTieGoesToLowestProxy) {
  std::vector<DecisionRecord> d{{{1, 0, 0, 0, 0, 0}, SetpointAction(22, 22)},
                                {{1, 0, 0, 0, 0, 0}, SetpointAction(16, 30)}};
  const auto t = fit_cart(d);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.node(0).action, SetpointAction(16, 30));
}

TEST(Cart, StopsWhenNoSplitLowersImpurity) {
  // XOR on two tied coordinates: every single split leaves both children at
  // the parent's class mix, so the root stays a leaf.
  std::vector<DecisionRecord> d{{{0, 0, 0, 0, 0, 0}, SetpointAction(20, 24)},
                                {{1, 1, 0, 0, 0, 0}, SetpointAction(20, 24)},
                                {{0, 1, 0, 0, 0, 0}, SetpointAction(15, 30)},
                                {{1, 0, 0, 0, 0, 0}, SetpointAction(15, 30)}};
  EXPECT_EQ(fit_cart(d).size(), 1u);
}

TEST(Cart, ParamsLimitGrowth) {
  Rng rng(68);
  std::vector<DecisionRecord> d;
  for (int i = 0; i < 300; ++i) d.push_back({random_features(rng), hvacdt::testing::random_action(rng)});
  CartParams p;
  p.max_depth = 3;
  EXPECT_LE(fit_cart(d, p).depth(), 3);
  p = {};
  p.min_samples_split = 1;
  EXPECT_THROW(fit_cart(d, p), PreconditionError);
  EXPECT_THROW(fit_cart(std::span<const DecisionRecord>{}), PreconditionError);
}

TEST(CartProperty, MemorizesDistinctContinuousInputs) {
  Rng rng(69);
  for (int t = 0; t < 30; ++t) {
    std::vector<DecisionRecord> d;
    const int n = 20 + static_cast<int>(rng() % 200);
    const int classes = 2 + static_cast<int>(rng() % 6);
    const auto actions = all_actions();
    for (int i = 0; i < n; ++i) d.push_back({random_features(rng), actions[rng() % static_cast<unsigned>(classes)]});
    const auto tree = fit_cart(d);
    for (const auto& r : d) ASSERT_EQ(tree.infer(r.x), r.a_star);
  }
}

TEST(CartProperty, DeterministicAndLeafLabelsComeFromTrainingRows) {
  Rng rng(70);
  for (int t = 0; t < 20; ++t) {
    std::vector<DecisionRecord> d;
    for (int i = 0; i < 150; ++i) {
      auto x = random_features(rng);
      x[kZoneTemp] = std::round(x[kZoneTemp]);  // ties in the split feature
      d.push_back({x, SetpointAction(15 + static_cast<int>(rng() % 3), 30)});
    }
    CartParams p;
    p.max_depth = 4;
    const auto a = fit_cart(d, p), b = fit_cart(d, p);
    EXPECT_EQ(a, b);
    std::map<int, std::set<SetpointAction>> seen;
    for (const auto& r : d) seen[a.route(r.x)].insert(r.a_star);
    for (const auto& [leaf, labels] : seen) EXPECT_TRUE(labels.count(a.node(leaf).action));
  }
}
