#pragma once

// Closed-loop evaluation: controllers, episode runner, metrics, latency
// benchmarking, history collection and the data-efficiency sweep.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hvacdt/building_sim.hpp"
#include "hvacdt/csv.hpp"
#include "hvacdt/decision_tree.hpp"
#include "hvacdt/dynamics_model.hpp"
#include "hvacdt/mbrl_controller.hpp"
#include "hvacdt/objective.hpp"
#include "hvacdt/policy_extraction.hpp"
#include "hvacdt/verifier.hpp"

namespace hvacdt {

// Controllers --------------------------------------------------------------

/// A controller picks setpoints from the zone temperature and the trace
/// position (which gives the current disturbance and, for planners, the forecast).
template <class P>
concept Controller = requires(const P& p, double t, const DisturbanceTrace& trace, std::size_t step,
                              const FeatureVector& x) {
  { p.decide(t, trace, step) } -> std::same_as<SetpointAction>;
  { p.decide(x) } -> std::same_as<SetpointAction>;
};

struct BaselineController {
  ComfortRange comfort = ComfortRange::winter();

  SetpointAction decide(const FeatureVector& x) const {
    return baseline_policy(ZoneState{x[kZoneTemp]}, disturbance_of(x), comfort);
  }
  SetpointAction decide(double t, const DisturbanceTrace& trace, std::size_t step) const {
    return baseline_policy(ZoneState{t}, trace[step], comfort);
  }
};

struct TreeController {
  const TreePolicy* tree = nullptr;

  SetpointAction decide(const FeatureVector& x) const { return tree->infer(x); }
  SetpointAction decide(double t, const DisturbanceTrace& trace, std::size_t step) const {
    return tree->infer(make_features(t, trace[step]));
  }
};

/// Random-shooting MPC with a perfect forecast taken from the trace (the
/// last disturbance is held past the end). Step k plans with seed (seed, k).
template <TransitionModel M>
struct RsMbrlController {
  const M* model = nullptr;
  MPCConfig mpc;
  RewardConfig reward;

  SetpointAction decide(const FeatureVector& x) const {
    const std::vector<DisturbanceVector> forecast(static_cast<std::size_t>(mpc.horizon), disturbance_of(x));
    return random_shooting(*model, ZoneState{x[kZoneTemp]}, std::span<const DisturbanceVector>(forecast), mpc, reward);
  }
  SetpointAction decide(double t, const DisturbanceTrace& trace, std::size_t step) const {
    std::vector<DisturbanceVector> forecast;
    forecast.reserve(static_cast<std::size_t>(mpc.horizon));
    for (std::size_t k = 0; k < static_cast<std::size_t>(mpc.horizon); ++k) {
      forecast.push_back(trace[std::min(step + k, trace.size() - 1)]);
    }
    MPCConfig cfg = mpc;
    cfg.seed = derive_seed(mpc.seed, step);
    return random_shooting(*model, ZoneState{t}, std::span<const DisturbanceVector>(forecast), cfg, reward);
  }
};

/// Baseline with probability 1 - epsilon, otherwise a uniformly random valid pair.
struct EpsilonRandomController {
  BaselineController base;
  double epsilon = 0.2;
  std::uint64_t seed = 0;

  SetpointAction decide(const FeatureVector& x) const { return base.decide(x); }
  SetpointAction decide(double t, const DisturbanceTrace& trace, std::size_t step) const {
    Rng rng = make_stream(seed, step);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) return sample_action(rng);
    return base.decide(t, trace, step);
  }
};

// Episodes -----------------------------------------------------------------

struct EpisodeStep {
  std::int64_t timestamp = 0;
  double zone_temp = 0.0;  // at the start of the step, as seen by the controller
  SetpointAction action;
  double hvac_energy_J = 0.0;
  double energy_proxy = 0.0;
  double reward = 0.0;
  int occupants = 0;
  bool in_comfort = false;
  double next_zone_temp = 0.0;
};

struct EpisodeTrace {
  double dt = 900.0;
  std::vector<EpisodeStep> steps;
};

/// Thrown when the plant diverges; carries the steps completed before it.
struct ClosedLoopAborted : PlantDivergenceError {
  ClosedLoopAborted(const std::string& what, EpisodeTrace partial_trace)
      : PlantDivergenceError(what), partial(std::move(partial_trace)) {}
  EpisodeTrace partial;
};

template <Controller P>
EpisodeTrace run_closed_loop(const P& policy, const DisturbanceTrace& trace, const PlantConfig& plant,
                             const RewardConfig& reward_cfg, double initial_temp = 18.0) {
  plant.validate();
  reward_cfg.validate();
  if (trace.dt != plant.dt) throw PreconditionError("trace spacing differs from plant dt");
  EpisodeTrace ep;
  ep.dt = plant.dt;
  ep.steps.reserve(trace.size());
  ZoneState s{initial_temp};
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& d = trace[k];
    const SetpointAction a = policy.decide(s.zone_temp, trace, k);
    PlantStep next;
    try {
      next = step_plant(s, d, a, plant);
    } catch (const PlantDivergenceError& e) {
      throw ClosedLoopAborted(e.what(), std::move(ep));
    }
    EpisodeStep rec;
    rec.timestamp = trace.points[k].timestamp;
    rec.zone_temp = s.zone_temp;
    rec.action = a;
    rec.hvac_energy_J = next.hvac_energy;
    rec.energy_proxy = energy_proxy(a);
    rec.occupants = d.occupant_count;
    rec.reward = reward(next.next, a, d.occupant_count > 0, reward_cfg);
    rec.in_comfort = reward_cfg.comfort.contains(s.zone_temp);
    rec.next_zone_temp = next.next.zone_temp;
    ep.steps.push_back(rec);
    s = next.next;
  }
  return ep;
}

inline constexpr const char* kEpisodeCsvHeader = "timestamp,zone_temp,heat_sp,cool_sp,hvac_energy_J,occupants";

inline void save_episode_csv(const std::string& path, const EpisodeTrace& ep) {
  auto out = csv::open_out(path);
  out << kEpisodeCsvHeader << '\n';
  for (const auto& s : ep.steps) {
    out << s.timestamp << ',' << csv::num(s.zone_temp) << ',' << s.action.heat_sp() << ',' << s.action.cool_sp()
        << ',' << csv::num(s.hvac_energy_J) << ',' << s.occupants << '\n';
  }
}

// Metrics ------------------------------------------------------------------

struct Metrics {
  double total_energy_kWh = 0.0;
  double total_proxy = 0.0;
  double comfort_rate = 1.0;            // occupied steps in comfort; 1 when never occupied
  double violation_degree_hours = 0.0;  // °C·h over occupied steps
  double performance_ratio = 0.0;       // comfort_rate / kWh * 1000
  std::size_t occupied_steps = 0;
};

inline Metrics compute_metrics(const EpisodeTrace& ep, const ComfortRange& comfort) {
  if (ep.steps.empty()) throw PreconditionError("compute_metrics: empty trace");
  Metrics m;
  std::size_t in_comfort = 0;
  double joules = 0.0;
  for (const auto& s : ep.steps) {
    joules += s.hvac_energy_J;
    m.total_proxy += s.energy_proxy;
    if (s.occupants > 0) {
      ++m.occupied_steps;
      if (comfort.contains(s.zone_temp)) ++in_comfort;
      m.violation_degree_hours += comfort_violation(s.zone_temp, comfort) * ep.dt / 3600.0;
    }
  }
  m.total_energy_kWh = joules / 3.6e6;
  m.comfort_rate = m.occupied_steps ? static_cast<double>(in_comfort) / static_cast<double>(m.occupied_steps) : 1.0;
  m.performance_ratio = m.total_energy_kWh > 0.0 ? m.comfort_rate / m.total_energy_kWh * 1000.0
                                                 : std::numeric_limits<double>::infinity();
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"total_energy_kWh", m.total_energy_kWh},       {"total_proxy", m.total_proxy},
          {"comfort_rate", m.comfort_rate},               {"violation_degree_hours", m.violation_degree_hours},
          {"performance_ratio", m.performance_ratio},     {"occupied_steps", m.occupied_steps}};
}

/// Steps where the zone is out of comfort but the action does not push back:
/// too warm with cool_sp >= zone temperature, or too cold with heat_sp <= zone temperature.
inline std::size_t wrong_direction_steps(const EpisodeTrace& ep, const ComfortRange& comfort) {
  std::size_t n = 0;
  for (const auto& s : ep.steps) {
    if (s.zone_temp > comfort.upper && !(s.action.cool_sp() < s.zone_temp)) ++n;
    if (s.zone_temp < comfort.lower && !(s.action.heat_sp() > s.zone_temp)) ++n;
  }
  return n;
}

struct DirectionAudit {
  std::size_t checked_steps = 0;     // out of comfort, routed to a leaf whose box lies fully outside comfort
  std::size_t checked_violations = 0;
  std::size_t straddling_steps = 0;  // out of comfort, routed to a leaf whose box straddles a bound
  std::size_t straddling_violations = 0;
};

/// Post-hoc direction audit of a tree deployment. Only leaves whose zone
/// temperature interval lies fully outside comfort fall under the path
/// verification, so violations are split by that distinction.
inline DirectionAudit audit_directions(const EpisodeTrace& ep, const DisturbanceTrace& trace, const TreePolicy& tree,
                                       const ComfortRange& comfort) {
  if (ep.steps.size() > trace.size()) throw PreconditionError("audit_directions: episode longer than trace");
  std::vector<const BoxRegion*> box_of(tree.size(), nullptr);
  const auto leaves = enumerate_leaf_boxes(tree);
  for (const auto& l : leaves) box_of[static_cast<std::size_t>(l.leaf_id)] = &l.box;
  DirectionAudit a;
  for (std::size_t k = 0; k < ep.steps.size(); ++k) {
    const auto& s = ep.steps[k];
    const bool hot = s.zone_temp > comfort.upper, cold = s.zone_temp < comfort.lower;
    if (!hot && !cold) continue;
    const bool wrong = hot ? !(s.action.cool_sp() < s.zone_temp) : !(s.action.heat_sp() > s.zone_temp);
    const auto& t = box_of[static_cast<std::size_t>(tree.route(make_features(s.zone_temp, trace[k])))]->dims[kZoneTemp];
    if (hot ? entirely_above(t, comfort.upper) : entirely_below(t, comfort.lower)) {
      ++a.checked_steps;
      a.checked_violations += wrong;
    } else {
      ++a.straddling_steps;
      a.straddling_violations += wrong;
    }
  }
  return a;
}

struct SetpointSpread {
  std::vector<double> heat_mean, heat_std, cool_mean, cool_std;
  double max_std() const {
    double m = 0.0;
    for (double v : heat_std) m = std::max(m, v);
    for (double v : cool_std) m = std::max(m, v);
    return m;
  }
};

/// Per-step mean and population std of the setpoints across repeated episodes.
inline SetpointSpread setpoint_spread(std::span<const EpisodeTrace> runs) {
  if (runs.empty()) throw PreconditionError("setpoint_spread: no runs");
  SetpointSpread out;
  const std::size_t steps = runs.front().steps.size();
  for (const auto& r : runs) {
    if (r.steps.size() != steps) throw PreconditionError("setpoint_spread: runs differ in length");
  }
  const auto n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < steps; ++k) {
    double hs = 0, hss = 0, cs = 0, css = 0;
    for (const auto& r : runs) {
      const double h = r.steps[k].action.heat_sp(), c = r.steps[k].action.cool_sp();
      hs += h, hss += h * h, cs += c, css += c * c;
    }
    const double hm = hs / n, cm = cs / n;
    out.heat_mean.push_back(hm);
    out.cool_mean.push_back(cm);
    out.heat_std.push_back(std::sqrt(std::max(0.0, hss / n - hm * hm)));
    out.cool_std.push_back(std::sqrt(std::max(0.0, css / n - cm * cm)));
  }
  return out;
}

// Latency ------------------------------------------------------------------

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t reps = 0;
};

/// Wall-clock time of single decisions, cycling through `inputs`. The first
/// `warmup` decisions are discarded.
template <class Decide>
LatencyStats bench_latency(const Decide& decide, std::span<const FeatureVector> inputs, int warmup, int reps) {
  if (reps < 30) throw PreconditionError("bench_latency: reps must be >= 30");
  if (inputs.empty()) throw PreconditionError("bench_latency: no inputs");
  using clock = std::chrono::steady_clock;
  volatile int sink = 0;
  for (int i = 0; i < warmup; ++i) sink = sink + decide(inputs[static_cast<std::size_t>(i) % inputs.size()]).heat_sp();
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto& x = inputs[static_cast<std::size_t>(i) % inputs.size()];
    const auto t0 = clock::now();
    sink = sink + decide(x).heat_sp();
    const auto t1 = clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  LatencyStats s;
  s.reps = ms.size();
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double ss = 0.0;
  for (double v : ms) ss += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(ss / static_cast<double>(ms.size()));
  return s;
}

// Historical data ----------------------------------------------------------

inline std::vector<TransitionRecord> transitions_of(const EpisodeTrace& ep, const DisturbanceTrace& trace) {
  std::vector<TransitionRecord> out;
  out.reserve(ep.steps.size());
  for (std::size_t k = 0; k < ep.steps.size(); ++k) {
    const auto& s = ep.steps[k];
    out.push_back({ZoneState{s.zone_temp}, trace[k], s.action, ZoneState{s.next_zone_temp}});
  }
  return out;
}

/// Logged data standing in for a building management system archive: one
/// baseline episode followed by one epsilon-random exploration episode on
/// the same disturbance trace.
inline std::vector<TransitionRecord> collect_history(const DisturbanceTrace& trace, const PlantConfig& plant,
                                                     const RewardConfig& reward_cfg, double epsilon, std::uint64_t seed,
                                                     double initial_temp = 18.0) {
  const BaselineController base{reward_cfg.comfort};
  auto out = transitions_of(run_closed_loop(base, trace, plant, reward_cfg, initial_temp), trace);
  const EpsilonRandomController explore{base, epsilon, seed};
  const auto more = transitions_of(run_closed_loop(explore, trace, plant, reward_cfg, initial_temp), trace);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

inline std::vector<FeatureVector> history_inputs(std::span<const TransitionRecord> data) {
  std::vector<FeatureVector> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(make_features(r.s.zone_temp, r.d));
  return out;
}

inline constexpr const char* kTransitionCsvHeader =
    "zone_temp,outdoor_temp,outdoor_rh,wind_speed,solar_rad,occupant_count,heat_sp,cool_sp,next_zone_temp";

inline void save_transitions_csv(const std::string& path, std::span<const TransitionRecord> data) {
  auto out = csv::open_out(path);
  out << kTransitionCsvHeader << '\n';
  for (const auto& r : data) {
    out << csv::num(r.s.zone_temp) << ',' << csv::num(r.d.outdoor_temp) << ',' << csv::num(r.d.outdoor_rh) << ','
        << csv::num(r.d.wind_speed) << ',' << csv::num(r.d.solar_rad) << ',' << r.d.occupant_count << ','
        << r.a.heat_sp() << ',' << r.a.cool_sp() << ',' << csv::num(r.s_next.zone_temp) << '\n';
  }
}

inline std::vector<TransitionRecord> load_transitions_csv(const std::string& path) {
  auto in = csv::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const csv::Header h(csv::split(line));
  const std::size_t c[] = {h.index("zone_temp"),  h.index("outdoor_temp"),   h.index("outdoor_rh"),
                           h.index("wind_speed"), h.index("solar_rad"),      h.index("occupant_count"),
                           h.index("heat_sp"),    h.index("cool_sp"),        h.index("next_zone_temp")};
  const char* names[] = {"zone_temp", "outdoor_temp", "outdoor_rh", "wind_speed", "solar_rad",
                         "occupant_count", "heat_sp", "cool_sp", "next_zone_temp"};
  std::vector<TransitionRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != h.size()) throw ParseError("row " + std::to_string(row) + ": wrong field count");
    double v[9];
    for (int i = 0; i < 9; ++i) v[i] = csv::to_double(f[c[i]], row, names[i]);
    const int heat = static_cast<int>(v[6]), cool = static_cast<int>(v[7]);
    if (!SetpointAction::valid(heat, cool)) throw ParseError("row " + std::to_string(row) + ": invalid setpoints");
    TransitionRecord r;
    r.s.zone_temp = v[0];
    r.d.outdoor_temp = v[1];
    r.d.outdoor_rh = v[2];
    r.d.wind_speed = v[3];
    r.d.solar_rad = v[4];
    r.d.occupant_count = static_cast<int>(std::lround(v[5]));
    r.a = {heat, cool};
    r.s_next.zone_temp = v[8];
    out.push_back(r);
  }
  return out;
}

// Data efficiency ----------------------------------------------------------

struct SweepRow {
  std::size_t n = 0;
  double performance_ratio = 0.0;
  double comfort_rate = 0.0;
  double energy_kWh = 0.0;
  std::size_t tree_nodes = 0;
  std::size_t tree_leaves = 0;
  std::size_t corrected = 0;
};

struct SweepSetup {
  NoiseConfig noise;
  MPCConfig mpc;
  RewardConfig reward;
  CartParams cart;
  PlantConfig plant;
  double initial_temp = 18.0;
};

/// For each size n: fit a tree on the first n decision records, repair it
/// against criteria #2/#3, deploy it on `eval_trace` and record the ratio.
/// The records for the largest n are labelled once; smaller sizes use prefixes.
template <TransitionModel M>
std::vector<SweepRow> data_efficiency_sweep(const M& model, const Augmenter& history, std::span<const std::size_t> sizes,
                                            const DisturbanceTrace& eval_trace, const SweepSetup& setup,
                                            std::vector<DecisionRecord>* records_out = nullptr) {
  if (sizes.empty()) throw PreconditionError("data_efficiency_sweep: no sizes");
  const std::size_t max_n = *std::max_element(sizes.begin(), sizes.end());
  const auto records = build_decision_dataset(model, history, max_n, setup.noise, setup.mpc, setup.reward);
  std::vector<SweepRow> rows;
  for (std::size_t n : sizes) {
    if (n == 0) throw PreconditionError("data_efficiency_sweep: sizes must be >= 1");
    const auto subset = std::span<const DecisionRecord>(records).first(n);
    const TreePolicy raw = fit_cart(subset, setup.cart);
    const auto paths = verify_paths(raw, setup.reward.comfort);
    const TreePolicy tree = correct_tree(raw, paths, setup.reward.comfort);
    const auto m = compute_metrics(
        run_closed_loop(TreeController{&tree}, eval_trace, setup.plant, setup.reward, setup.initial_temp),
        setup.reward.comfort);
    rows.push_back({n, m.performance_ratio, m.comfort_rate, m.total_energy_kWh, tree.size(), tree.leaf_count(),
                    paths.violations_crit2.size() + paths.violations_crit3.size()});
  }
  if (records_out) *records_out = records;
  return rows;
}

}  // namespace hvacdt
