#pragma once

// Random-shooting MPC over a learned dynamics model, and mode-action
// distillation of its stochastic decisions.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "hvacdt/dynamics_model.hpp"
#include "hvacdt/objective.hpp"
#include "hvacdt/rng.hpp"
#include "hvacdt/types.hpp"

namespace hvacdt {

struct MPCConfig {
  int sample_number = 1000;
  int horizon = 20;
  double discount = 0.99;
  int repeats = 10;  // mode-action Monte Carlo repeats
  std::uint64_t seed = 0;

  void validate() const {
    if (sample_number < 1 || horizon < 1 || repeats < 1) {
      throw PreconditionError("MPCConfig: sample_number, horizon and repeats must be >= 1");
    }
    if (discount < 0.0 || discount > 1.0) throw PreconditionError("MPCConfig: discount must lie in [0, 1]");
  }
};

/// Reward callable: (predicted next temperature, action, occupied) -> reward.
template <class F>
concept RewardFunction = requires(const F& f, double t, const SetpointAction& a, bool occ) {
  { f(t, a, occ) } -> std::convertible_to<double>;
};

struct ConfiguredReward {
  RewardConfig cfg;
  double operator()(double t, const SetpointAction& a, bool occupied) const {
    return reward(t, a, occupied, cfg);
  }
};

/// Sum over t = 1..H of gamma^t * r(s_t, a_{t-1}), where s_t is the model's
/// prediction from (s_{t-1}, d_{t-1}, a_{t-1}).
template <TransitionModel M, RewardFunction R>
double rollout_return(const M& model, const ZoneState& s0, std::span<const DisturbanceVector> forecast,
                      std::span<const SetpointAction> actions, const R& reward_fn, double discount) {
  if (forecast.size() != actions.size() || actions.empty()) {
    throw PreconditionError("rollout_return: forecast and action lengths must match and be non-empty");
  }
  double total = 0.0;
  double weight = 1.0;
  ZoneState s = s0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    s = predict(model, s, forecast[t], actions[t]);
    weight *= discount;
    total += weight * reward_fn(s.zone_temp, actions[t], forecast[t].occupant_count > 0);
  }
  return total;
}

template <TransitionModel M>
double rollout_return(const M& model, const ZoneState& s0, std::span<const DisturbanceVector> forecast,
                      std::span<const SetpointAction> actions, const RewardConfig& cfg, double discount) {
  return rollout_return(model, s0, forecast, actions, ConfiguredReward{cfg}, discount);
}

/// Uniform draw over the valid setpoint pairs (rejection on heat > cool).
inline SetpointAction sample_action(Rng& rng) {
  std::uniform_int_distribution<int> heat(kHeatMin, kHeatMax);
  std::uniform_int_distribution<int> cool(kCoolMin, kCoolMax);
  while (true) {
    const int h = heat(rng);
    const int c = cool(rng);
    if (SetpointAction::valid(h, c)) return {h, c};
  }
}

struct ShootingResult {
  SetpointAction action;
  std::size_t best_index = 0;
  double best_score = 0.0;
  std::vector<double> scores;
  std::vector<SetpointAction> sequences;  // sample_number x horizon, row-major
};

/// Scores `sample_number` random action sequences through the model in one
/// batch per time step and returns the first action of the best one. Ties go
/// to the lowest candidate index, so the result is independent of how the
/// scoring is scheduled.
template <TransitionModel M, RewardFunction R>
ShootingResult random_shooting_scored(const M& model, const ZoneState& s0,
                                      std::span<const DisturbanceVector> forecast, const MPCConfig& cfg,
                                      const R& reward_fn) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.sample_number);
  const auto h = static_cast<std::size_t>(cfg.horizon);
  if (forecast.size() < h) throw PreconditionError("random_shooting: forecast shorter than horizon");

  ShootingResult res;
  Rng rng(cfg.seed);
  res.sequences.resize(n * h);
  for (auto& a : res.sequences) a = sample_action(rng);

  res.scores.assign(n, 0.0);
  std::vector<double> temps(n, s0.zone_temp);
  std::vector<ModelInput> inputs(n);
  std::vector<double> next(n);
  double weight = 1.0;
  for (std::size_t t = 0; t < h; ++t) {
    const DisturbanceVector& d = forecast[t];
    const bool occupied = d.occupant_count > 0;
    for (std::size_t i = 0; i < n; ++i) {
      inputs[i] = make_model_input(make_features(temps[i], d), res.sequences[i * h + t]);
    }
    predict_batch(model, std::span<const ModelInput>(inputs), std::span<double>(next));
    weight *= cfg.discount;
    for (std::size_t i = 0; i < n; ++i) {
      res.scores[i] += weight * reward_fn(next[i], res.sequences[i * h + t], occupied);
      temps[i] = next[i];
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (res.scores[i] > res.scores[res.best_index]) res.best_index = i;
  }
  res.best_score = res.scores[res.best_index];
  res.action = res.sequences[res.best_index * h];
  return res;
}

template <TransitionModel M>
SetpointAction random_shooting(const M& model, const ZoneState& s0, std::span<const DisturbanceVector> forecast,
                               const MPCConfig& cfg, const RewardConfig& reward_cfg) {
  return random_shooting_scored(model, s0, forecast, cfg, ConfiguredReward{reward_cfg}).action;
}

// Mode action --------------------------------------------------------------

using ActionHistogram = std::map<SetpointAction, int>;

/// Most frequent action; ties go to the lowest energy proxy, then the
/// lexicographically smallest (heat, cool).
inline SetpointAction select_mode(const ActionHistogram& hist) {
  if (hist.empty()) throw PreconditionError("select_mode: empty histogram");
  auto best = hist.begin();
  for (auto it = std::next(hist.begin()); it != hist.end(); ++it) {
    if (it->second > best->second ||
        (it->second == best->second && energy_proxy(it->first) < energy_proxy(best->first))) {
      best = it;
    }
  }
  return best->first;
}

struct ModeResult {
  SetpointAction action;
  ActionHistogram histogram;
};

/// Runs random shooting with seeds seed..seed+M-1 and keeps the modal first action.
template <TransitionModel M, RewardFunction R>
ModeResult mode_action(const M& model, const ZoneState& s0, std::span<const DisturbanceVector> forecast,
                       const MPCConfig& cfg, const R& reward_fn, int repeats, std::uint64_t seed) {
  if (repeats < 1) throw PreconditionError("mode_action: repeats must be >= 1");
  ModeResult out;
  MPCConfig run = cfg;
  for (int k = 0; k < repeats; ++k) {
    run.seed = seed + static_cast<std::uint64_t>(k);
    ++out.histogram[random_shooting_scored(model, s0, forecast, run, reward_fn).action];
  }
  out.action = select_mode(out.histogram);
  return out;
}

template <TransitionModel M>
ModeResult mode_action(const M& model, const ZoneState& s0, std::span<const DisturbanceVector> forecast,
                       const MPCConfig& cfg, const RewardConfig& reward_cfg, int repeats, std::uint64_t seed) {
  return mode_action(model, s0, forecast, cfg, ConfiguredReward{reward_cfg}, repeats, seed);
}

}  // namespace hvacdt
