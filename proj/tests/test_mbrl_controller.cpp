#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace hvacdt;
using hvacdt::testing::ConstantModel;
using hvacdt::testing::PlantModel;
using hvacdt::testing::still_air;

namespace {

struct FlatReward {
  double operator()(double, const SetpointAction&, bool) const { return 0.0; }
};

struct ScaledReward {
  RewardConfig cfg;
  double k = 1.0;
  double operator()(double t, const SetpointAction& a, bool occ) const { return k * reward(t, a, occ, cfg); }
};

std::vector<DisturbanceVector> hold(const DisturbanceVector& d, int h) {
  return std::vector<DisturbanceVector>(static_cast<std::size_t>(h), d);
}

}  // namespace

TEST(RolloutReturn, SingleStepIsDiscountedReward) {
  const PlantModel model;
  const RewardConfig cfg;
  const auto d = still_air(2.0, 5);
  const SetpointAction a(21, 26);
  const auto f = hold(d, 1);
  const std::vector<SetpointAction> acts{a};
  const double expected = 0.9 * reward(predict(model, ZoneState{19}, d, a), a, true, cfg);
  EXPECT_DOUBLE_EQ(rollout_return(model, ZoneState{19}, std::span<const DisturbanceVector>(f),
                                  std::span<const SetpointAction>(acts), cfg, 0.9),
                   expected);
}

TEST(RolloutReturn, ZeroDiscountGivesZero) {
  const auto f = hold(still_air(0, 5), 4);
  const std::vector<SetpointAction> acts(4, SetpointAction(23, 23));
  EXPECT_EQ(rollout_return(PlantModel{}, ZoneState{15}, std::span<const DisturbanceVector>(f),
                           std::span<const SetpointAction>(acts), RewardConfig{}, 0.0),
            0.0);
}

TEST(RolloutReturn, TwoStepsMatchManualUnroll) {
  const PlantModel model;
  const RewardConfig cfg;
  const std::vector<DisturbanceVector> f{still_air(1.0, 5), still_air(3.0, 0)};
  const std::vector<SetpointAction> acts{SetpointAction(22, 24), SetpointAction(15, 30)};
  const auto s1 = predict(model, ZoneState{18.5}, f[0], acts[0]);
  const auto s2 = predict(model, s1, f[1], acts[1]);
  const double g = 0.95;
  const double manual = g * reward(s1, acts[0], true, cfg) + g * g * reward(s2, acts[1], false, cfg);
  EXPECT_NEAR(rollout_return(model, ZoneState{18.5}, std::span<const DisturbanceVector>(f),
                             std::span<const SetpointAction>(acts), cfg, g),
              manual, 1e-12);
}

TEST(RolloutReturn, LengthMismatchRejected) {
  const auto f = hold(still_air(0), 3);
  const std::vector<SetpointAction> acts(2);
  EXPECT_THROW(rollout_return(PlantModel{}, ZoneState{20}, std::span<const DisturbanceVector>(f),
                              std::span<const SetpointAction>(acts), RewardConfig{}, 0.99),
               PreconditionError);
}

TEST(SampleAction, UniformOverValidPairs) {
  Rng rng(41);
  std::map<SetpointAction, int> counts;
  const int n = 87 * 400;
  for (int i = 0; i < n; ++i) ++counts[sample_action(rng)];
  ASSERT_EQ(counts.size(), kValidActionCount);
  for (const auto& [a, c] : counts) {
    EXPECT_GT(c, 400 - 100) << a;
    EXPECT_LT(c, 400 + 100) << a;
  }
}

TEST(RandomShooting, OneStepMatchesExhaustiveArgmax) {
  const PlantModel model;
  const RewardConfig cfg;
  MPCConfig mpc;
  mpc.horizon = 1;
  mpc.sample_number = 3000;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto x = hvacdt::testing::random_features(rng);
    const auto d = disturbance_of(x);
    const auto f = hold(d, 1);
    mpc.seed = seed;
    const auto res = random_shooting_scored(model, ZoneState{x[0]}, std::span<const DisturbanceVector>(f), mpc,
                                            ConfiguredReward{cfg});
    ASSERT_EQ(std::set<SetpointAction>(res.sequences.begin(), res.sequences.end()).size(), kValidActionCount);

    double best = -1e300;
    for (const auto& a : all_actions()) {
      best = std::max(best, mpc.discount * reward(predict(model, ZoneState{x[0]}, d, a), a, d.occupant_count > 0, cfg));
    }
    const auto chosen = res.action;
    EXPECT_DOUBLE_EQ(mpc.discount * reward(predict(model, ZoneState{x[0]}, d, chosen), chosen, d.occupant_count > 0, cfg), best);
  }
}

TEST(RandomShooting, SameSeedSameAction) {
  const PlantModel model;
  MPCConfig mpc;
  mpc.sample_number = 200;
  mpc.seed = 5;
  const auto f = hold(still_air(0, 5), mpc.horizon);
  const auto a = random_shooting(model, ZoneState{18}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{});
  const auto b = random_shooting(model, ZoneState{18}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{});
  EXPECT_EQ(a, b);
}

TEST(RandomShooting, FlatRewardTiesGoToFirstCandidate) {
  MPCConfig mpc;
  mpc.sample_number = 50;
  mpc.horizon = 3;
  const auto f = hold(still_air(0, 5), 3);
  std::set<SetpointAction> chosen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    mpc.seed = seed;
    const auto res =
        random_shooting_scored(ConstantModel{}, ZoneState{20}, std::span<const DisturbanceVector>(f), mpc, FlatReward{});
    for (double s : res.scores) EXPECT_EQ(s, res.scores.front());
    EXPECT_EQ(res.best_index, 0u);
    EXPECT_EQ(res.action, res.sequences.front());
    chosen.insert(res.action);
  }
  EXPECT_GT(chosen.size(), 1u);
}

TEST(RandomShooting, ArgmaxInvariantToPositiveRewardScale) {
  const PlantModel model;
  MPCConfig mpc;
  mpc.sample_number = 300;
  const auto f = hold(still_air(-2, 5), mpc.horizon);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    mpc.seed = seed;
    const auto a = random_shooting_scored(model, ZoneState{17}, std::span<const DisturbanceVector>(f), mpc,
                                          ScaledReward{{}, 1.0});
    const auto b = random_shooting_scored(model, ZoneState{17}, std::span<const DisturbanceVector>(f), mpc,
                                          ScaledReward{{}, 8.0});
    EXPECT_EQ(a.best_index, b.best_index);
    EXPECT_EQ(a.action, b.action);
  }
}

TEST(RandomShooting, ShortForecastRejected) {
  MPCConfig mpc;
  const auto f = hold(still_air(0), mpc.horizon - 1);
  EXPECT_THROW(random_shooting(PlantModel{}, ZoneState{20}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{}),
               PreconditionError);
}

TEST(MpcConfig, Validates) {
  MPCConfig c;
  c.discount = 1.5;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = {};
  c.horizon = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(SelectMode, StrictMajority) {
  EXPECT_EQ(select_mode({{SetpointAction(20, 24), 6}, {SetpointAction(15, 30), 4}}), SetpointAction(20, 24));
}

TEST(SelectMode, TieGoesToLowestProxyThenLexicographic) {
  EXPECT_EQ(select_mode({{SetpointAction(20, 24), 5}, {SetpointAction(15, 30), 5}}), SetpointAction(15, 30));
  // Both proxies equal 1.
  EXPECT_EQ(select_mode({{SetpointAction(16, 30), 3}, {SetpointAction(15, 29), 3}}), SetpointAction(15, 29));
  EXPECT_THROW(select_mode({}), PreconditionError);
}

TEST(ModeAction, SingleRepeatEqualsOneShootingCall) {
  const PlantModel model;
  MPCConfig mpc;
  mpc.sample_number = 100;
  const auto f = hold(still_air(1, 5), mpc.horizon);
  const auto m = mode_action(model, ZoneState{19}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{}, 1, 77);
  mpc.seed = 77;
  EXPECT_EQ(m.action, random_shooting(model, ZoneState{19}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{}));
  EXPECT_THROW(mode_action(model, ZoneState{19}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{}, 0, 1),
               PreconditionError);
}

TEST(ModeAction, HistogramSumsToRepeatsAndContainsMode) {
  const PlantModel model;
  MPCConfig mpc;
  mpc.sample_number = 50;
  mpc.horizon = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = hold(still_air(0, 5), mpc.horizon);
    const auto m = mode_action(model, ZoneState{18}, std::span<const DisturbanceVector>(f), mpc, RewardConfig{}, 7, seed);
    int total = 0;
    for (const auto& [a, c] : m.histogram) total += c;
    EXPECT_EQ(total, 7);
    ASSERT_TRUE(m.histogram.count(m.action));
    for (const auto& [a, c] : m.histogram) EXPECT_LE(c, m.histogram.at(m.action));
  }
}
