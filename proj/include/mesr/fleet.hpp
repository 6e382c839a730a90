#pragma once

#include "mesr/transport.hpp"

namespace mesr {

/// Tolerance on state-of-charge bounds when checking post-update results.
inline constexpr double kSocTolerance = 1e-9;

struct PowerRange {
  double min_kw = 0.0;
  double max_kw = 0.0;
  double clamp(double p) const { return p < min_kw ? min_kw : (p > max_kw ? max_kw : p); }
};

/// Ratings of one mobile energy storage unit. Power is positive when
/// discharging into a microgrid and negative when charging from it.
struct MessParams {
  int id = 1;
  double capacity_kwh = 1000.0;
  double max_charge_kw = 400.0;
  double max_discharge_kw = 400.0;
  double eta_charge = 0.95;
  double eta_discharge = 0.95;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double initial_soc = 0.5;
  double speed_kmh = 30.0;
  int home_depot = 1;

  void validate() const;
  friend bool operator==(const MessParams&, const MessParams&) = default;
};

struct MessState {
  Location location = AtNode{};
  NodeId destination{};
  double soc = 0.0;
  friend bool operator==(const MessState&, const MessState&) = default;
};

/// SOC after exchanging `power_kw` for `dt_h` hours. Throws std::domain_error
/// when the result leaves [soc_min, soc_max] by more than kSocTolerance;
/// results inside the tolerance band are snapped onto the bound.
double soc_update(const MessParams& params, double soc, double power_kw, double dt_h);

/// Exchange limits for one interval. Zero unless the unit is parked at a
/// microgrid for the whole interval.
PowerRange feasible_power_range(const MessParams& params, double soc, bool parked_at_microgrid,
                                double dt_h);

}  // namespace mesr
