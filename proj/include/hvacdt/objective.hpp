#pragma once

#include <cmath>
#include <cstdlib>

#include "hvacdt/types.hpp"

namespace hvacdt {

struct RewardConfig {
  double w_e_occupied = 1e-2;
  double w_e_unoccupied = 1.0;
  ComfortRange comfort = ComfortRange::winter();

  void validate() const {
    if (w_e_occupied < 0 || w_e_occupied > 1 || w_e_unoccupied < 0 || w_e_unoccupied > 1) {
      throw PreconditionError("energy weights must lie in [0, 1]");
    }
    comfort.validate();
  }

  double energy_weight(bool occupied) const noexcept {
    return occupied ? w_e_occupied : w_e_unoccupied;
  }
};

/// L1 distance of the setpoints from the HVAC-off pair, in setpoint-degrees.
inline double energy_proxy(const SetpointAction& a) noexcept {
  const auto off = SetpointAction::off();
  return std::abs(a.heat_sp() - off.heat_sp()) + std::abs(off.cool_sp() - a.cool_sp());
}

/// r = -w_e * E - (1 - w_e) * (max(s - z_hi, 0) + max(z_lo - s, 0)).
inline double reward(double zone_temp, const SetpointAction& a, bool occupied, const RewardConfig& cfg) noexcept {
  const double w = cfg.energy_weight(occupied);
  return -w * energy_proxy(a) - (1.0 - w) * comfort_violation(zone_temp, cfg.comfort);
}

inline double reward(const ZoneState& s, const SetpointAction& a, bool occupied, const RewardConfig& cfg) noexcept {
  return reward(s.zone_temp, a, occupied, cfg);
}

}  // namespace hvacdt
