#pragma once

// Sectioned key=value configuration (INI syntax):
//
//   [plant]    capacitance resistance wind_coeff solar_aperture occupant_gain
//              max_heat_power max_cool_power dt
//   [reward]   w_e_occupied w_e_unoccupied comfort_lower comfort_upper
//   [schedule] start_hour end_hour headcount
//   [train]    epochs learning_rate weight_decay batch_size hidden (e.g. "64,64")
//   [mpc]      sample_number horizon discount repeats
//   [noise]    noise_level
//   [cart]     max_depth min_samples_split
//   [verify]   safe_threshold sample_count horizon strict
//   [run]      season history_days eval_days epsilon initial_temp decision_points seed
//
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <set>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hvacdt/building_sim.hpp"
#include "hvacdt/dynamics_model.hpp"
#include "hvacdt/harness.hpp"
#include "hvacdt/mbrl_controller.hpp"
#include "hvacdt/objective.hpp"
#include "hvacdt/policy_extraction.hpp"
#include "hvacdt/verifier.hpp"

namespace hvacdt {

struct RunConfig {
  Season season = Season::kWinter;
  int history_days = 31;
  int eval_days = 7;
  double epsilon = 0.2;
  double initial_temp = 20.0;
  int decision_points = 200;
  std::uint64_t seed = 0;
};

struct Config {
  PlantConfig plant;
  RewardConfig reward;
  ScheduleConfig schedule;
  TrainConfig train;
  MPCConfig mpc;
  NoiseConfig noise;
  CartParams cart;
  VerifyConfig verify;
  RunConfig run;

  /// Gives every stochastic component its own stream of the global seed.
  void apply_seed(std::uint64_t seed) {
    run.seed = seed;
    train.seed = derive_seed(seed, 101);
    mpc.seed = derive_seed(seed, 102);
    noise.seed = derive_seed(seed, 103);
    verify.seed = derive_seed(seed, 104);
    verify.noise.seed = derive_seed(seed, 105);
  }

  void validate() const {
    plant.validate();
    reward.validate();
    train.validate();
    mpc.validate();
    noise.validate();
    cart.validate();
    verify.validate();
    if (run.history_days < 1 || run.eval_days < 1) throw PreconditionError("[run] day counts must be >= 1");
    if (run.epsilon < 0 || run.epsilon > 1) throw PreconditionError("[run] epsilon must lie in [0, 1]");
    if (run.decision_points < 1) throw PreconditionError("[run] decision_points must be >= 1");
  }
};

/// Weather behind the logged history and, with a different stream, the
/// evaluation episodes. Both start on the season's first day.
inline DisturbanceTrace history_weather(const Config& c) {
  return generate_weather(c.run.history_days, c.run.season, derive_seed(c.run.seed, 1), c.schedule, c.plant.dt);
}
inline DisturbanceTrace evaluation_weather(const Config& c, int days) {
  return generate_weather(days, c.run.season, derive_seed(c.run.seed, 3), c.schedule, c.plant.dt);
}
inline std::vector<TransitionRecord> collect_history(const Config& c) {
  return collect_history(history_weather(c), c.plant, c.reward, c.run.epsilon, derive_seed(c.run.seed, 2),
                         c.run.initial_temp);
}

inline Config default_config(std::uint64_t seed = 0) {
  Config c;
  c.apply_seed(seed);
  return c;
}

namespace config_detail {

/// Like ptree::get with a default, but a present value that does not
/// convert is an error instead of silently falling back.
template <class T>
T value(const boost::property_tree::ptree& pt, const std::string& path, T fallback) {
  if (!pt.get_optional<std::string>(path)) return fallback;
  return pt.get<T>(path);
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& f : csv::split(s)) out.push_back(std::stoi(f));
  return out;
}

}  // namespace config_detail

inline Config parse_config(const boost::property_tree::ptree& pt, std::uint64_t seed_fallback = 0) {
  namespace pt_ = boost::property_tree;
  static const std::map<std::string, std::set<std::string>> known = {
      {"plant",
       {"capacitance", "resistance", "wind_coeff", "solar_aperture", "occupant_gain", "max_heat_power",
        "max_cool_power", "dt"}},
      {"reward", {"w_e_occupied", "w_e_unoccupied", "comfort_lower", "comfort_upper"}},
      {"schedule", {"start_hour", "end_hour", "headcount"}},
      {"train", {"epochs", "learning_rate", "weight_decay", "batch_size", "hidden"}},
      {"mpc", {"sample_number", "horizon", "discount", "repeats"}},
      {"noise", {"noise_level"}},
      {"cart", {"max_depth", "min_samples_split"}},
      {"verify", {"safe_threshold", "sample_count", "horizon", "strict"}},
      {"run", {"season", "history_days", "eval_days", "epsilon", "initial_temp", "decision_points", "seed"}},
  };
  for (const auto& [section, body] : pt) {
    const auto it = known.find(section);
    if (it == known.end()) throw ParseError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      (void)value;
      if (!it->second.count(key)) throw ParseError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }

  Config c;
  try {
    c.run.seed = config_detail::value<std::uint64_t>(pt, "run.seed", seed_fallback);
    c.apply_seed(c.run.seed);

    auto& p = c.plant;
    p.capacitance = config_detail::value(pt, "plant.capacitance", p.capacitance);
    p.resistance = config_detail::value(pt, "plant.resistance", p.resistance);
    p.wind_coeff = config_detail::value(pt, "plant.wind_coeff", p.wind_coeff);
    p.solar_aperture = config_detail::value(pt, "plant.solar_aperture", p.solar_aperture);
    p.occupant_gain = config_detail::value(pt, "plant.occupant_gain", p.occupant_gain);
    p.max_heat_power = config_detail::value(pt, "plant.max_heat_power", p.max_heat_power);
    p.max_cool_power = config_detail::value(pt, "plant.max_cool_power", p.max_cool_power);
    p.dt = config_detail::value(pt, "plant.dt", p.dt);

    const std::string season = pt.get<std::string>("run.season", "winter");
    if (season == "winter") {
      c.run.season = Season::kWinter;
      c.reward.comfort = ComfortRange::winter();
    } else if (season == "summer") {
      c.run.season = Season::kSummer;
      c.reward.comfort = ComfortRange::summer();
    } else {
      throw ParseError("config: season must be 'winter' or 'summer'");
    }
    c.run.history_days = config_detail::value(pt, "run.history_days", c.run.history_days);
    c.run.eval_days = config_detail::value(pt, "run.eval_days", c.run.eval_days);
    c.run.epsilon = config_detail::value(pt, "run.epsilon", c.run.epsilon);
    c.run.initial_temp = config_detail::value(pt, "run.initial_temp", c.run.initial_temp);
    c.run.decision_points = config_detail::value(pt, "run.decision_points", c.run.decision_points);

    auto& r = c.reward;
    r.w_e_occupied = config_detail::value(pt, "reward.w_e_occupied", r.w_e_occupied);
    r.w_e_unoccupied = config_detail::value(pt, "reward.w_e_unoccupied", r.w_e_unoccupied);
    r.comfort.lower = config_detail::value(pt, "reward.comfort_lower", r.comfort.lower);
    r.comfort.upper = config_detail::value(pt, "reward.comfort_upper", r.comfort.upper);

    c.schedule.start_hour = config_detail::value(pt, "schedule.start_hour", c.schedule.start_hour);
    c.schedule.end_hour = config_detail::value(pt, "schedule.end_hour", c.schedule.end_hour);
    c.schedule.headcount = config_detail::value(pt, "schedule.headcount", c.schedule.headcount);

    auto& t = c.train;
    t.epochs = config_detail::value(pt, "train.epochs", t.epochs);
    t.learning_rate = config_detail::value(pt, "train.learning_rate", t.learning_rate);
    t.weight_decay = config_detail::value(pt, "train.weight_decay", t.weight_decay);
    t.batch_size = config_detail::value(pt, "train.batch_size", t.batch_size);
    if (auto h = pt.get_optional<std::string>("train.hidden")) t.hidden = config_detail::parse_int_list(*h);

    auto& m = c.mpc;
    m.sample_number = config_detail::value(pt, "mpc.sample_number", m.sample_number);
    m.horizon = config_detail::value(pt, "mpc.horizon", m.horizon);
    m.discount = config_detail::value(pt, "mpc.discount", m.discount);
    m.repeats = config_detail::value(pt, "mpc.repeats", m.repeats);

    c.noise.noise_level = config_detail::value(pt, "noise.noise_level", c.noise.noise_level);
    c.cart.max_depth = config_detail::value(pt, "cart.max_depth", c.cart.max_depth);
    c.cart.min_samples_split = config_detail::value(pt, "cart.min_samples_split", c.cart.min_samples_split);

    auto& v = c.verify;
    v.comfort = c.reward.comfort;
    v.noise.noise_level = c.noise.noise_level;
    v.safe_threshold = config_detail::value(pt, "verify.safe_threshold", v.safe_threshold);
    v.sample_count = config_detail::value(pt, "verify.sample_count", v.sample_count);
    v.horizon = config_detail::value(pt, "verify.horizon", v.horizon);
    v.strict = config_detail::value(pt, "verify.strict", v.strict);
  } catch (const pt_::ptree_bad_data& e) {
    throw ParseError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ParseError("config: train.hidden must be a comma-separated list of integers");
  }
  c.validate();
  return c;
}

inline Config load_config(const std::string& path, std::uint64_t seed_fallback = 0) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return parse_config(pt, seed_fallback);
}

}  // namespace hvacdt
