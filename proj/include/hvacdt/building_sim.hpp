#pragma once

// Lumped single-zone RC plant, synthetic weather, occupancy and the
// rule-based baseline thermostat.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hvacdt/csv.hpp"
#include "hvacdt/rng.hpp"
#include "hvacdt/types.hpp"

namespace hvacdt {

inline constexpr double kMinPlausibleTemp = -20.0;
inline constexpr double kMaxPlausibleTemp = 60.0;

struct PlantConfig {
  double capacitance = 1e7;        // C, J/K
  double resistance = 2e-3;        // R, K/W
  double wind_coeff = 0.1;         // k_w, s/m
  double solar_aperture = 3.0;     // g, m²
  double occupant_gain = 100.0;    // q_occ, W/person
  double max_heat_power = 10e3;    // P_h, W
  double max_cool_power = 10e3;    // P_c, W
  double dt = 900.0;               // s

  void validate() const {
    if (!(capacitance > 0 && resistance > 0 && wind_coeff > 0 && solar_aperture > 0 &&
          occupant_gain > 0 && max_heat_power > 0 && max_cool_power > 0 && dt > 0)) {
      throw PreconditionError("plant parameters must all be positive");
    }
  }
};

struct PlantStep {
  ZoneState next;
  double hvac_energy = 0.0;  // J, always >= 0
  double hvac_power = 0.0;   // W, > 0 heating, < 0 cooling
};

/// One forward-Euler step of the RC zone under an ideal-load thermostat.
/// The HVAC term supplies at most the power needed to land exactly on the
/// violated setpoint, clipped to the equipment limit.
inline PlantStep step_plant(const ZoneState& state, const DisturbanceVector& dist,
                            const SetpointAction& action, const PlantConfig& cfg) {
  const double t = state.zone_temp;
  const double r_eff = cfg.resistance / (1.0 + cfg.wind_coeff * dist.wind_speed);
  const double passive = (dist.outdoor_temp - t) / r_eff + cfg.solar_aperture * dist.solar_rad +
                         cfg.occupant_gain * dist.occupant_count;
  const double gain = cfg.dt / cfg.capacitance;

  PlantStep out;
  double next = t + gain * passive;
  const auto heat = static_cast<double>(action.heat_sp());
  const auto cool = static_cast<double>(action.cool_sp());
  if (t < heat) {
    const double needed = std::max(0.0, (heat - t) / gain - passive);
    if (needed <= cfg.max_heat_power) {
      out.hvac_power = needed;
      next = needed > 0.0 ? heat : next;
    } else {
      out.hvac_power = cfg.max_heat_power;
      next = t + gain * (passive + cfg.max_heat_power);
    }
  } else if (t > cool) {
    const double needed = std::max(0.0, passive - (cool - t) / gain);
    if (needed <= cfg.max_cool_power) {
      out.hvac_power = -needed;
      next = needed > 0.0 ? cool : next;
    } else {
      out.hvac_power = -cfg.max_cool_power;
      next = t + gain * (passive - cfg.max_cool_power);
    }
  }
  if (!std::isfinite(next) || next < kMinPlausibleTemp || next > kMaxPlausibleTemp) {
    throw PlantDivergenceError("zone temperature diverged to " + std::to_string(next) + " °C");
  }
  out.next.zone_temp = next;
  out.hvac_energy = std::abs(out.hvac_power) * cfg.dt;
  return out;
}

// Occupancy ----------------------------------------------------------------

struct ScheduleConfig {
  int start_hour = 8;   // inclusive
  int end_hour = 18;    // exclusive
  int headcount = 5;
};

/// Headcount inside the weekday window, zero otherwise. Timestamps are UTC epoch seconds.
inline int occupancy_schedule(std::int64_t timestamp, const ScheduleConfig& cfg = {}) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{timestamp}};
  const auto day = floor<days>(tp);
  const weekday wd{day};
  if (wd == Saturday || wd == Sunday) return 0;
  const auto since_midnight = duration_cast<seconds>(tp - day).count();
  const auto start = static_cast<std::int64_t>(cfg.start_hour) * 3600;
  const auto end = static_cast<std::int64_t>(cfg.end_hour) * 3600;
  return (since_midnight >= start && since_midnight < end) ? cfg.headcount : 0;
}

// Disturbance traces --------------------------------------------------------

struct TracePoint {
  std::int64_t timestamp = 0;
  DisturbanceVector d;
};

struct DisturbanceTrace {
  double dt = 900.0;
  std::vector<TracePoint> points;

  std::size_t size() const noexcept { return points.size(); }
  const DisturbanceVector& operator[](std::size_t i) const { return points[i].d; }

  /// Strictly increasing timestamps with uniform spacing equal to dt.
  void validate() const {
    for (std::size_t i = 1; i < points.size(); ++i) {
      const auto gap = points[i].timestamp - points[i - 1].timestamp;
      if (gap <= 0 || static_cast<double>(gap) != dt) {
        throw ParseError("non-uniform spacing at row " + std::to_string(i + 1) + ": gap " +
                         std::to_string(gap) + " s, expected " + std::to_string(dt) + " s");
      }
    }
  }

  bool operator==(const DisturbanceTrace& o) const {
    if (dt != o.dt || points.size() != o.points.size()) return false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].timestamp != o.points[i].timestamp || !(points[i].d == o.points[i].d)) return false;
    }
    return true;
  }
};

enum class Season { kWinter, kSummer };

inline constexpr std::int64_t kWinterStart = 1609459200;  // 2021-01-01T00:00Z
inline constexpr std::int64_t kSummerStart = 1625097600;  // 2021-07-01T00:00Z

struct WeatherParams {
  double temp_mean;
  double temp_amplitude;
  double rh_mean;
};

inline WeatherParams weather_params(Season s) {
  return s == Season::kWinter ? WeatherParams{2.0, 5.0, 70.0} : WeatherParams{28.0, 6.0, 45.0};
}

/// Seeded synthetic weather at 15-minute spacing: diurnal temperature
/// sinusoid peaking at 15:00 with Gaussian noise, clear-sky solar bump
/// between 06:00 and 18:00, AR(1) humidity and half-normal wind. Occupancy
/// comes from the schedule.
inline DisturbanceTrace generate_weather(int days, Season season, std::uint64_t seed,
                                         const ScheduleConfig& schedule = {}, double dt = 900.0) {
  if (days < 1) throw PreconditionError("generate_weather: days must be >= 1");
  constexpr double kSolarPeak = 600.0;
  constexpr double kRhPersistence = 0.9;
  constexpr double kRhNoise = 4.0;
  const auto wp = weather_params(season);
  const std::int64_t start = season == Season::kWinter ? kWinterStart : kSummerStart;
  const auto steps = static_cast<std::size_t>(std::llround(days * 86400.0 / dt));

  Rng rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  DisturbanceTrace trace;
  trace.dt = dt;
  trace.points.reserve(steps);
  double rh = wp.rh_mean;
  for (std::size_t i = 0; i < steps; ++i) {
    const auto ts = start + static_cast<std::int64_t>(std::llround(static_cast<double>(i) * dt));
    const double hour = std::fmod(static_cast<double>(ts - start) / 3600.0, 24.0);
    DisturbanceVector d;
    d.outdoor_temp = wp.temp_mean +
                     wp.temp_amplitude * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0) +
                     unit(rng);
    rh = std::clamp(wp.rh_mean + kRhPersistence * (rh - wp.rh_mean) + kRhNoise * unit(rng), 20.0, 90.0);
    d.outdoor_rh = rh;
    d.wind_speed = std::abs(3.0 + 1.5 * unit(rng));
    d.solar_rad = (hour > 6.0 && hour < 18.0) ? std::max(0.0, kSolarPeak * std::sin(std::numbers::pi * (hour - 6.0) / 12.0)) : 0.0;
    d.occupant_count = occupancy_schedule(ts, schedule);
    trace.points.push_back({ts, d});
  }
  return trace;
}

struct LoadedTrace {
  DisturbanceTrace trace;
  std::size_t clamped_values = 0;  // rows whose rh/wind/solar/occupancy were clamped
};

inline constexpr const char* kDisturbanceCsvHeader =
    "timestamp,outdoor_temp,outdoor_rh,wind_speed,solar_rad,occupant_count";

inline LoadedTrace load_disturbance_csv(const std::string& path, double dt = 900.0) {
  auto in = csv::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const csv::Header header(csv::split(line));
  const std::size_t c_ts = header.index("timestamp");
  const std::size_t c_temp = header.index("outdoor_temp");
  const std::size_t c_rh = header.index("outdoor_rh");
  const std::size_t c_wind = header.index("wind_speed");
  const std::size_t c_solar = header.index("solar_rad");
  const std::size_t c_occ = header.index("occupant_count");

  LoadedTrace out;
  out.trace.dt = dt;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(f.size()));
    }
    TracePoint p;
    p.timestamp = csv::to_timestamp(f[c_ts], row);
    p.d.outdoor_temp = csv::to_double(f[c_temp], row, "outdoor_temp");
    p.d.outdoor_rh = csv::to_double(f[c_rh], row, "outdoor_rh");
    p.d.wind_speed = csv::to_double(f[c_wind], row, "wind_speed");
    p.d.solar_rad = csv::to_double(f[c_solar], row, "solar_rad");
    const double occ = csv::to_double(f[c_occ], row, "occupant_count");
    p.d.occupant_count = static_cast<int>(std::lround(occ));
    if (!p.d.finite() || !std::isfinite(occ)) {
      throw ParseError("row " + std::to_string(row) + ": non-finite value");
    }
    if (p.d.sanitize()) ++out.clamped_values;
    out.trace.points.push_back(p);
  }
  out.trace.validate();
  return out;
}

inline void save_disturbance_csv(const std::string& path, const DisturbanceTrace& trace) {
  auto out = csv::open_out(path);
  out << kDisturbanceCsvHeader << '\n';
  for (const auto& p : trace.points) {
    out << p.timestamp << ',' << csv::num(p.d.outdoor_temp) << ',' << csv::num(p.d.outdoor_rh) << ','
        << csv::num(p.d.wind_speed) << ',' << csv::num(p.d.solar_rad) << ',' << p.d.occupant_count
        << '\n';
  }
}

// Baseline controller ------------------------------------------------------

/// Rule-based thermostat: comfort bounds while occupied, HVAC off otherwise.
inline SetpointAction baseline_policy(const ZoneState& /*state*/, const DisturbanceVector& dist,
                                      const ComfortRange& comfort) {
  if (dist.occupant_count <= 0) return SetpointAction::off();
  const int heat = std::clamp(round_half_even(comfort.lower), kHeatMin, kHeatMax);
  int cool = std::clamp(round_half_even(comfort.upper), kCoolMin, kCoolMax);
  cool = std::max(cool, heat);
  return {heat, cool};
}

}  // namespace hvacdt
