#include "mesr/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mesr {

std::string to_string(LoadType type) {
  switch (type) {
    case LoadType::industrial:
      return "industrial";
    case LoadType::commercial:
      return "commercial";
    case LoadType::residential:
      return "residential";
  }
  return "unknown";
}

LoadType parse_load_type(const std::string& text) {
  if (text == "industrial" || text == "I") {
    return LoadType::industrial;
  }
  if (text == "commercial" || text == "C") {
    return LoadType::commercial;
  }
  if (text == "residential" || text == "R") {
    return LoadType::residential;
  }
  throw std::invalid_argument("unknown load type '" + text + "'");
}

DailyProfile default_profile(LoadType type) {
  switch (type) {
    case LoadType::industrial:
      return {0.82, 0.80, 0.80, 0.80, 0.82, 0.86, 0.92, 0.97, 1.00, 1.00, 1.00, 0.99,
              0.97, 0.99, 1.00, 1.00, 0.98, 0.95, 0.92, 0.90, 0.88, 0.86, 0.84, 0.83};
    case LoadType::commercial:
      return {0.40, 0.38, 0.37, 0.37, 0.38, 0.42, 0.55, 0.70, 0.85, 0.95, 1.00, 1.00,
              0.98, 1.00, 1.00, 0.97, 0.92, 0.85, 0.72, 0.60, 0.52, 0.47, 0.44, 0.42};
    case LoadType::residential:
      return {0.45, 0.40, 0.37, 0.36, 0.37, 0.45, 0.62, 0.78, 0.72, 0.60, 0.55, 0.55,
              0.56, 0.55, 0.56, 0.60, 0.70, 0.85, 0.97, 1.00, 0.95, 0.82, 0.66, 0.52};
  }
  throw std::invalid_argument("unknown load type");
}

void MicrogridParams::validate() const {
  const std::string who = "microgrid " + std::to_string(id) + ": ";
  if (!(dg_max_kw >= 0.0) || !(dg_max_kvar >= 0.0)) {
    throw std::invalid_argument(who + "generator ratings must be non-negative");
  }
  if (!(dg_energy_min_kwh > 0.0 && dg_energy_min_kwh < dg_energy_max_kwh)) {
    throw std::invalid_argument(who + "energy limits must satisfy 0 < min < max");
  }
  if (!(power_factor > 0.0 && power_factor <= 1.0)) {
    throw std::invalid_argument(who + "power factor must lie in (0, 1]");
  }
  if (!(interruption_cost >= 0.0) || !(generation_cost >= 0.0)) {
    throw std::invalid_argument(who + "costs must be non-negative");
  }
  if (!(peak_load_kw >= 0.0)) {
    throw std::invalid_argument(who + "peak load must be non-negative");
  }
  for (double v : profile) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(who + "profile values must lie in [0, 1]");
    }
  }
  if (!(forecast_error_std >= 0.0)) {
    throw std::invalid_argument(who + "forecast error std must be non-negative");
  }
}

double MicrogridParams::reactive_ratio() const {
  return std::tan(std::acos(power_factor));
}

double load_with_error(const MicrogridParams& params, int hour, double relative_error) {
  if (hour < 0 || hour >= kHoursPerDay) {
    throw std::out_of_range("hour index " + std::to_string(hour) + " outside [0, 24)");
  }
  const double raw = params.peak_load_kw * params.profile[static_cast<std::size_t>(hour)] *
                     (1.0 + relative_error);
  return std::clamp(raw, 0.0, params.peak_load_kw);
}

double sample_load(const MicrogridParams& params, int hour, std::mt19937_64& rng) {
  std::normal_distribution<double> standard(0.0, 1.0);
  const double z = standard(rng);
  return load_with_error(params, hour, params.forecast_error_std * z);
}

PowerRange dg_feasible_range(const MicrogridParams& params, const MicrogridState& state,
                             double dt_h) {
  const double energy_limited = (state.dg_energy_kwh - params.dg_energy_min_kwh) / dt_h;
  return {0.0, std::max(0.0, std::min(params.dg_max_kw, energy_limited))};
}

Restoration restore(const MicrogridParams& params, double supply_kw, double load_kw) {
  if (supply_kw < 0.0) {
    throw std::invalid_argument("net supply must be non-negative");
  }
  const double ratio = params.reactive_ratio();
  double cap = supply_kw;
  cap = std::min(cap, load_kw);
  if (ratio > 0.0) {
    double reactive_cap = params.dg_max_kvar / ratio;
    while (reactive_cap * ratio > params.dg_max_kvar) {
      reactive_cap = std::nextafter(reactive_cap, 0.0);
    }
    cap = std::min(cap, reactive_cap);
  }
  Restoration r;
  r.active_kw = std::max(0.0, cap);
  r.reactive_kvar = r.active_kw * ratio;
  r.spill_kw = supply_kw - r.active_kw;
  r.reactive_deficit_kvar = std::max(0.0, r.reactive_kvar - params.dg_max_kvar);
  return r;
}

}  // namespace mesr
