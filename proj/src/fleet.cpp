#include "mesr/fleet.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mesr {

void MessParams::validate() const {
  const std::string who = "mess " + std::to_string(id) + ": ";
  if (!(capacity_kwh > 0.0)) {
    throw std::invalid_argument(who + "capacity must be positive");
  }
  if (!(max_charge_kw > 0.0) || !(max_discharge_kw > 0.0)) {
    throw std::invalid_argument(who + "power ratings must be positive");
  }
  if (!(eta_charge > 0.0 && eta_charge <= 1.0) || !(eta_discharge > 0.0 && eta_discharge <= 1.0)) {
    throw std::invalid_argument(who + "efficiencies must lie in (0, 1]");
  }
  if (!(soc_min >= 0.0 && soc_min < soc_max && soc_max <= 1.0)) {
    throw std::invalid_argument(who + "SOC bounds must satisfy 0 <= min < max <= 1");
  }
  if (!(initial_soc >= soc_min && initial_soc <= soc_max)) {
    throw std::invalid_argument(who + "initial SOC outside bounds");
  }
  if (!(speed_kmh > 0.0)) {
    throw std::invalid_argument(who + "speed must be positive");
  }
}

double soc_update(const MessParams& params, double soc, double power_kw, double dt_h) {
  double next;
  if (power_kw < 0.0) {
    next = soc - params.eta_charge * power_kw * dt_h / params.capacity_kwh;
  } else {
    next = soc - power_kw * dt_h / (params.eta_discharge * params.capacity_kwh);
  }
  if (next < params.soc_min - kSocTolerance || next > params.soc_max + kSocTolerance) {
    throw std::domain_error("SOC update leaves bounds (power " + std::to_string(power_kw) +
                            " kW from SOC " + std::to_string(soc) + ")");
  }
  return std::clamp(next, params.soc_min, params.soc_max);
}

PowerRange feasible_power_range(const MessParams& params, double soc, bool parked_at_microgrid,
                                double dt_h) {
  if (!parked_at_microgrid) {
    return {0.0, 0.0};
  }
  const double charge_headroom =
      std::max(0.0, (params.soc_max - soc) * params.capacity_kwh / (params.eta_charge * dt_h));
  const double discharge_headroom =
      std::max(0.0, (soc - params.soc_min) * params.capacity_kwh * params.eta_discharge / dt_h);
  return {-std::min(params.max_charge_kw, charge_headroom),
          std::min(params.max_discharge_kw, discharge_headroom)};
}

}  // namespace mesr
