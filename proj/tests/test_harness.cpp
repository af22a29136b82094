#include <gtest/gtest.h>

#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "test_util.hpp"

using namespace hvacdt;
using hvacdt::testing::PlantModel;
using hvacdt::testing::TempDir;

namespace {

EpisodeStep step_at(double temp, int occupants, double joules = 0.0) {
  EpisodeStep s;
  s.zone_temp = temp;
  s.occupants = occupants;
  s.hvac_energy_J = joules;
  return s;
}

Config parse_ini(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree pt;
  boost::property_tree::read_ini(in, pt);
  return parse_config(pt, 7);
}

Config tiny_config(std::uint64_t seed) {
  auto c = default_config(seed);
  c.run.history_days = 2;
  c.train.epochs = 3;
  c.train.hidden = {8, 8};
  c.mpc.sample_number = 20;
  c.mpc.horizon = 3;
  c.mpc.repeats = 2;
  return c;
}

}  // namespace

TEST(Metrics, OneWarmOccupiedStep) {
  EpisodeTrace ep;
  ep.steps = {step_at(24.5, 3, 3.6e6)};
  const auto m = compute_metrics(ep, ComfortRange::winter());
  EXPECT_DOUBLE_EQ(m.violation_degree_hours, 0.25);
  EXPECT_EQ(m.comfort_rate, 0.0);
  EXPECT_DOUBLE_EQ(m.total_energy_kWh, 1.0);
  EXPECT_EQ(m.occupied_steps, 1u);
}

TEST(Metrics, UnoccupiedOnlyCountsAsComfortable) {
  EpisodeTrace ep;
  ep.steps = {step_at(5.0, 0, 1.8e6), step_at(40.0, 0, 1.8e6)};
  const auto m = compute_metrics(ep, ComfortRange::winter());
  EXPECT_EQ(m.comfort_rate, 1.0);
  EXPECT_EQ(m.violation_degree_hours, 0.0);
  EXPECT_DOUBLE_EQ(m.performance_ratio, 1000.0);
}

TEST(Metrics, ZeroEnergyAndEmptyTrace) {
  EpisodeTrace ep;
  ep.steps = {step_at(21.0, 2), step_at(19.0, 2)};
  const auto m = compute_metrics(ep, ComfortRange::winter());
  EXPECT_EQ(m.comfort_rate, 0.5);
  EXPECT_TRUE(std::isinf(m.performance_ratio));
  EXPECT_THROW(compute_metrics(EpisodeTrace{}, ComfortRange::winter()), PreconditionError);
}

TEST(ClosedLoop, BaselineDayHasOneStepPerQuarterHour) {
  const auto trace = generate_weather(1, Season::kWinter, 3);
  const auto ep = run_closed_loop(BaselineController{}, trace, PlantConfig{}, RewardConfig{}, 20.0);
  ASSERT_EQ(ep.steps.size(), 96u);
  for (std::size_t k = 0; k < ep.steps.size(); ++k) {
    const auto& s = ep.steps[k];
    EXPECT_EQ(s.action, s.occupants > 0 ? SetpointAction(20, 24) : SetpointAction::off());
    EXPECT_EQ(s.timestamp, trace.points[k].timestamp);
    if (k > 0) {
      EXPECT_EQ(s.zone_temp, ep.steps[k - 1].next_zone_temp);
    }
    EXPECT_GE(s.hvac_energy_J, 0.0);
  }
  EXPECT_EQ(ep.steps.front().zone_temp, 20.0);
}

TEST(ClosedLoop, RewardUsesNextState) {
  const auto trace = generate_weather(1, Season::kWinter, 4);
  const RewardConfig cfg;
  const auto ep = run_closed_loop(BaselineController{}, trace, PlantConfig{}, cfg, 18.0);
  for (const auto& s : ep.steps) EXPECT_EQ(s.reward, reward(s.next_zone_temp, s.action, s.occupants > 0, cfg));
}

TEST(ClosedLoop, DivergenceKeepsPartialTrace) {
  // Explicit Euler with dt / RC = 2.5 multiplies the offset from outdoor by
  // -1.5 each step: 5, -7.5, 11.25, -16.9, 25.3, -38 (below -20 on step 5).
  PlantConfig plant;
  plant.capacitance = 1.8e5;
  plant.max_heat_power = plant.max_cool_power = 1.0;
  auto trace = generate_weather(1, Season::kWinter, 5);
  for (auto& p : trace.points) p.d = hvacdt::testing::still_air(0.0, 0);
  try {
    run_closed_loop(BaselineController{}, trace, plant, RewardConfig{}, 5.0);
    FAIL() << "expected divergence";
  } catch (const ClosedLoopAborted& e) {
    EXPECT_EQ(e.partial.steps.size(), 4u);
    for (const auto& s : e.partial.steps) EXPECT_TRUE(std::isfinite(s.next_zone_temp));
  }
}

TEST(ClosedLoop, MismatchedSpacingRejected) {
  const auto trace = generate_weather(1, Season::kWinter, 5, {}, 600.0);
  EXPECT_THROW(run_closed_loop(BaselineController{}, trace, PlantConfig{}, RewardConfig{}), PreconditionError);
}

TEST(Controllers, TreeIsDeterministicAndRandomShootingIsNot) {
  const auto trace = generate_weather(1, Season::kWinter, 6);
  Rng rng(91);
  const auto tree = hvacdt::testing::random_tree(rng, 12);
  const PlantModel model;
  std::vector<EpisodeTrace> tree_runs, rs_runs;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    tree_runs.push_back(run_closed_loop(TreeController{&tree}, trace, PlantConfig{}, RewardConfig{}));
    MPCConfig mpc;
    mpc.sample_number = 10;
    mpc.horizon = 3;
    mpc.seed = seed;
    rs_runs.push_back(run_closed_loop(RsMbrlController<PlantModel>{&model, mpc, {}}, trace, PlantConfig{}, RewardConfig{}));
  }
  EXPECT_EQ(setpoint_spread(tree_runs).max_std(), 0.0);
  EXPECT_GT(setpoint_spread(rs_runs).max_std(), 0.0);
  EXPECT_THROW(setpoint_spread(std::span<const EpisodeTrace>{}), PreconditionError);
}

TEST(Controllers, EpsilonZeroIsBaseline) {
  const auto trace = generate_weather(1, Season::kWinter, 7);
  const auto a = run_closed_loop(BaselineController{}, trace, PlantConfig{}, RewardConfig{});
  const auto b = run_closed_loop(EpsilonRandomController{{}, 0.0, 1}, trace, PlantConfig{}, RewardConfig{});
  for (std::size_t k = 0; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].action, b.steps[k].action);
}

TEST(DirectionAudit, SplitsCheckedAndStraddlingLeaves) {
  // Leaf 1 (<= 19) heats properly; leaf 2 (> 19) straddles and never heats.
  const TreePolicy tree({TreeNode::split(kZoneTemp, 19.0, 1, 2), TreeNode::leaf({22, 24}), TreeNode::leaf({15, 30})}, 0);
  const auto trace = generate_weather(1, Season::kWinter, 8);
  EpisodeTrace ep;
  ep.steps = {step_at(18.0, 0), step_at(19.5, 0), step_at(21.0, 0)};
  ep.steps[0].action = SetpointAction(22, 24);
  ep.steps[1].action = SetpointAction(15, 30);
  ep.steps[2].action = SetpointAction(15, 30);
  const auto a = audit_directions(ep, trace, tree, ComfortRange::winter());
  EXPECT_EQ(a.checked_steps, 1u);
  EXPECT_EQ(a.checked_violations, 0u);
  EXPECT_EQ(a.straddling_steps, 1u);
  EXPECT_EQ(a.straddling_violations, 1u);
  EXPECT_EQ(wrong_direction_steps(ep, ComfortRange::winter()), 1u);
}

TEST(Latency, RequiresThirtyRepetitions) {
  const std::vector<FeatureVector> in{FeatureVector{21, 0, 50, 1, 0, 2}};
  const auto tree = TreePolicy::single_leaf({20, 24});
  auto decide = [&](const FeatureVector& x) { return tree.infer(x); };
  EXPECT_THROW(bench_latency(decide, std::span<const FeatureVector>(in), 0, 29), PreconditionError);
  const auto s = bench_latency(decide, std::span<const FeatureVector>(in), 5, 30);
  EXPECT_EQ(s.reps, 30u);
  EXPECT_GE(s.mean_ms, 0.0);
  EXPECT_LT(s.mean_ms, 1.0);
}

TEST(History, BaselinePlusExplorationOnSameTrace) {
  const auto trace = generate_weather(2, Season::kWinter, 9);
  const auto data = collect_history(trace, PlantConfig{}, RewardConfig{}, 0.5, 3, 20.0);
  ASSERT_EQ(data.size(), 2 * trace.size());
  std::size_t differs = 0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    EXPECT_EQ(data[k].d, trace[k]);
    EXPECT_EQ(data[trace.size() + k].d, trace[k]);
    differs += data[k].a != data[trace.size() + k].a;
  }
  EXPECT_GT(differs, 0u);
  for (const auto& r : data) {
    EXPECT_EQ(r.s_next.zone_temp, step_plant(r.s, r.d, r.a, PlantConfig{}).next.zone_temp);
  }
}

TEST(History, TransitionsCsvRoundTrip) {
  const auto trace = generate_weather(1, Season::kSummer, 10);
  const auto data = collect_history(trace, PlantConfig{}, RewardConfig{}, 0.3, 4);
  const TempDir dir;
  save_transitions_csv(dir.file("t.csv"), data);
  const auto back = load_transitions_csv(dir.file("t.csv"));
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].input(), data[i].input());
    EXPECT_EQ(back[i].s_next.zone_temp, data[i].s_next.zone_temp);
  }
  EXPECT_THROW(load_transitions_csv(dir.write("bad.csv", "zone_temp,outdoor_temp\n1,2\n")), ParseError);
}

TEST(Episode, CsvHeaderAndRows) {
  const auto trace = generate_weather(1, Season::kWinter, 11);
  const auto ep = run_closed_loop(BaselineController{}, trace, PlantConfig{}, RewardConfig{});
  const TempDir dir;
  save_episode_csv(dir.file("e.csv"), ep);
  std::ifstream in(dir.file("e.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kEpisodeCsvHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, ep.steps.size());
}

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_ini("[mpc]\nsample_number = 50\n[run]\nseason = summer\n");
  EXPECT_EQ(c.mpc.sample_number, 50);
  EXPECT_EQ(c.mpc.horizon, 20);
  EXPECT_EQ(c.run.season, Season::kSummer);
  EXPECT_EQ(c.reward.comfort.lower, 23.0);
  EXPECT_EQ(c.verify.comfort.upper, 26.0);
  EXPECT_EQ(c.run.seed, 7u);
  EXPECT_EQ(c.mpc.seed, derive_seed(7, 102));
  const auto h = parse_ini("[train]\nhidden = 16, 8\n[run]\nseed = 3\n");
  EXPECT_EQ(h.train.hidden, (std::vector<int>{16, 8}));
  EXPECT_EQ(h.train.seed, derive_seed(3, 101));
}

TEST(Config, RejectsUnknownAndInvalidEntries) {
  EXPECT_THROW(parse_ini("[mpc]\nsamples = 5\n"), ParseError);
  EXPECT_THROW(parse_ini("[solver]\nx = 1\n"), ParseError);
  EXPECT_THROW(parse_ini("[mpc]\nhorizon = many\n"), ParseError);
  EXPECT_THROW(parse_ini("[run]\nseason = spring\n"), ParseError);
  EXPECT_THROW(parse_ini("[train]\nhidden = a,b\n"), ParseError);
  EXPECT_THROW(parse_ini("[mpc]\ndiscount = 2\n"), PreconditionError);
  EXPECT_THROW(load_config("/nonexistent/hvacdt.ini"), ParseError);
}

TEST(Config, FileRoundTrip) {
  const TempDir dir;
  const auto c = load_config(dir.write("c.ini", "[cart]\nmax_depth = 4\n[noise]\nnoise_level = 0.2\n"), 1);
  EXPECT_EQ(c.cart.max_depth, 4);
  EXPECT_EQ(c.verify.noise.noise_level, 0.2);
}

TEST(Pipeline, SameSeedGivesSameTreeAndMetrics) {
  auto run = [](std::uint64_t seed) {
    const auto c = tiny_config(seed);
    const auto data = collect_history(c);
    const auto model = fit_dynamics(data, c.train);
    const Augmenter aug(history_inputs(data));
    const auto records = build_decision_dataset(model, aug, 20, c.noise, c.mpc, c.reward);
    const auto raw = fit_cart(records, c.cart);
    const auto tree = correct_tree(raw, verify_paths(raw, c.reward.comfort), c.reward.comfort);
    const auto m = compute_metrics(
        run_closed_loop(TreeController{&tree}, evaluation_weather(c, 1), c.plant, c.reward, c.run.initial_temp),
        c.reward.comfort);
    return std::make_pair(to_json(tree).dump(), to_json(m).dump());
  };
  const auto a = run(12), b = run(12);
  EXPECT_EQ(a, b);
}

TEST(Sweep, PrefixRecordsAndRowPerSize) {
  const auto c = tiny_config(13);
  const auto data = collect_history(c);
  const Augmenter aug(history_inputs(data));
  const std::vector<std::size_t> sizes{5, 15};
  SweepSetup setup{c.noise, c.mpc, c.reward, c.cart, c.plant, c.run.initial_temp};
  std::vector<DecisionRecord> records;
  const auto rows = data_efficiency_sweep(PlantModel{}, aug, sizes, evaluation_weather(c, 1), setup, &records);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(records.size(), 15u);
  for (const auto& r : rows) EXPECT_EQ(r.tree_nodes, 2 * r.tree_leaves - 1);
}
