#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace hvacdt {

// Errors -------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition.
struct PreconditionError : Error {
  using Error::Error;
};

/// Malformed input file or document.
struct ParseError : Error {
  using Error::Error;
};

/// Zone temperature left the physically plausible band.
struct PlantDivergenceError : Error {
  using Error::Error;
};

// Setpoints ----------------------------------------------------------------

inline constexpr int kHeatMin = 15;
inline constexpr int kHeatMax = 23;
inline constexpr int kCoolMin = 21;
inline constexpr int kCoolMax = 30;

/// Integer heating/cooling setpoint pair. Always satisfies the range bounds
/// and heat <= cool; the default value is the HVAC-off pair (15, 30).
class SetpointAction {
 public:
  constexpr SetpointAction() = default;

  constexpr SetpointAction(int heat_sp, int cool_sp) : heat_(heat_sp), cool_(cool_sp) {
    if (!valid(heat_sp, cool_sp)) {
      throw PreconditionError("invalid setpoint pair (" + std::to_string(heat_sp) + ", " +
                              std::to_string(cool_sp) + ")");
    }
  }

  static constexpr bool valid(int heat_sp, int cool_sp) noexcept {
    return heat_sp >= kHeatMin && heat_sp <= kHeatMax && cool_sp >= kCoolMin &&
           cool_sp <= kCoolMax && heat_sp <= cool_sp;
  }

  static constexpr SetpointAction off() noexcept { return {}; }

  constexpr int heat_sp() const noexcept { return heat_; }
  constexpr int cool_sp() const noexcept { return cool_; }

  constexpr auto operator<=>(const SetpointAction&) const = default;

 private:
  int heat_ = kHeatMin;
  int cool_ = kCoolMax;
};

inline std::ostream& operator<<(std::ostream& os, const SetpointAction& a) {
  return os << '(' << a.heat_sp() << ", " << a.cool_sp() << ')';
}

/// Number of valid (heat, cool) pairs: 9 * 10 minus the three with heat > cool.
inline constexpr std::size_t kValidActionCount = 87;

/// All valid pairs in lexicographic (heat, cool) order.
inline std::array<SetpointAction, kValidActionCount> all_actions() {
  std::array<SetpointAction, kValidActionCount> out{};
  std::size_t k = 0;
  for (int h = kHeatMin; h <= kHeatMax; ++h) {
    for (int c = kCoolMin; c <= kCoolMax; ++c) {
      if (SetpointAction::valid(h, c)) out[k++] = SetpointAction(h, c);
    }
  }
  return out;
}

// State and disturbances ---------------------------------------------------

struct ZoneState {
  double zone_temp = 20.0;  // °C
};

struct DisturbanceVector {
  double outdoor_temp = 0.0;  // °C
  double outdoor_rh = 50.0;   // %
  double wind_speed = 0.0;    // m/s
  double solar_rad = 0.0;     // W/m²
  int occupant_count = 0;

  bool operator==(const DisturbanceVector&) const = default;

  /// Clamp rh to [0, 100] and negative wind/solar/occupancy to zero.
  /// Returns true when a value was changed.
  bool sanitize() noexcept {
    const DisturbanceVector before = *this;
    outdoor_rh = std::clamp(outdoor_rh, 0.0, 100.0);
    wind_speed = std::max(wind_speed, 0.0);
    solar_rad = std::max(solar_rad, 0.0);
    occupant_count = std::max(occupant_count, 0);
    return !(before == *this);
  }

  bool finite() const noexcept {
    return std::isfinite(outdoor_temp) && std::isfinite(outdoor_rh) && std::isfinite(wind_speed) &&
           std::isfinite(solar_rad);
  }
};

// Policy input -------------------------------------------------------------

inline constexpr std::size_t kFeatureCount = 6;

/// Policy input x = [zone_temp, outdoor_temp, outdoor_rh, wind_speed, solar_rad, occupant_count].
using FeatureVector = std::array<double, kFeatureCount>;

enum Feature : std::size_t {
  kZoneTemp = 0,
  kOutdoorTemp = 1,
  kOutdoorRh = 2,
  kWindSpeed = 3,
  kSolarRad = 4,
  kOccupantCount = 5,
};

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "zone_temp", "outdoor_temp", "outdoor_rh", "wind_speed", "solar_rad", "occupant_count"};

inline FeatureVector make_features(double zone_temp, const DisturbanceVector& d) {
  return {zone_temp, d.outdoor_temp, d.outdoor_rh, d.wind_speed, d.solar_rad,
          static_cast<double>(d.occupant_count)};
}

inline DisturbanceVector disturbance_of(const FeatureVector& x) {
  DisturbanceVector d;
  d.outdoor_temp = x[kOutdoorTemp];
  d.outdoor_rh = x[kOutdoorRh];
  d.wind_speed = x[kWindSpeed];
  d.solar_rad = x[kSolarRad];
  d.occupant_count = static_cast<int>(std::lround(std::max(0.0, x[kOccupantCount])));
  return d;
}

// Comfort ------------------------------------------------------------------

struct ComfortRange {
  double lower = 20.0;
  double upper = 23.5;

  constexpr bool contains(double t) const noexcept { return t >= lower && t <= upper; }
  constexpr double median() const noexcept { return 0.5 * (lower + upper); }

  void validate() const {
    if (!(lower < upper)) throw PreconditionError("comfort range requires lower < upper");
  }

  static constexpr ComfortRange winter() noexcept { return {20.0, 23.5}; }
  static constexpr ComfortRange summer() noexcept { return {23.0, 26.0}; }
};

/// Degrees outside the comfort band (0 inside).
inline double comfort_violation(double t, const ComfortRange& c) noexcept {
  return std::max(0.0, t - c.upper) + std::max(0.0, c.lower - t);
}

/// Round half to even, the convention used for every setpoint rounding.
inline int round_half_even(double v) noexcept {
  return static_cast<int>(std::nearbyint(v));
}

}  // namespace hvacdt
