#pragma once

#include <array>
#include <random>
#include <string>

#include "mesr/fleet.hpp"

namespace mesr {

inline constexpr int kHoursPerDay = 24;
using DailyProfile = std::array<double, kHoursPerDay>;

enum class LoadType { industrial, commercial, residential };

std::string to_string(LoadType type);
LoadType parse_load_type(const std::string& text);

/// Shipped per-unit 24-hour shapes: flat industrial, daytime-plateau
/// commercial and morning/evening-peaked residential.
DailyProfile default_profile(LoadType type);

/// One islanded microgrid aggregated to a single bus with an equivalent
/// dispatchable generator. Units: kW, kVar, kWh, $/kWh.
struct MicrogridParams {
  int id = 1;
  double dg_max_kw = 1000.0;
  double dg_max_kvar = 800.0;
  double dg_energy_max_kwh = 20000.0;
  double dg_energy_min_kwh = 2000.0;
  double power_factor = 0.9;
  double interruption_cost = 10.0;
  double generation_cost = 0.5;
  LoadType load_type = LoadType::commercial;
  double peak_load_kw = 3000.0;
  DailyProfile profile = default_profile(LoadType::commercial);
  double forecast_error_std = 0.05;

  void validate() const;
  /// tan(acos(power_factor)): reactive power drawn per kW of restored load.
  double reactive_ratio() const;
  friend bool operator==(const MicrogridParams&, const MicrogridParams&) = default;
};

struct MicrogridState {
  double dg_energy_kwh = 0.0;
  double load_kw = 0.0;
  friend bool operator==(const MicrogridState&, const MicrogridState&) = default;
};

/// Realized load for a given relative forecast error.
double load_with_error(const MicrogridParams& params, int hour, double relative_error);

/// Draws the relative forecast error from N(0, std^2) and realizes the load.
/// Exactly one standard-normal draw is consumed per call, whatever the std.
double sample_load(const MicrogridParams& params, int hour, std::mt19937_64& rng);

PowerRange dg_feasible_range(const MicrogridParams& params, const MicrogridState& state,
                             double dt_h);

struct Restoration {
  double active_kw = 0.0;
  double reactive_kvar = 0.0;
  double spill_kw = 0.0;
  double reactive_deficit_kvar = 0.0;
};

/// Splits the net active supply into restored load and unusable surplus. The
/// reactive capacity of the generator caps restorable active load.
Restoration restore(const MicrogridParams& params, double supply_kw, double load_kw);

}  // namespace mesr
