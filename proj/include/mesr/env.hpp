#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mesr/fleet.hpp"
#include "mesr/grid.hpp"
#include "mesr/transport.hpp"

namespace mesr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostCoefficients {
  double battery_per_kwh = 0.2;  ///< maintenance cost per kWh exchanged
  double transport_per_h = 80.0;  ///< cost per hour spent travelling
  friend bool operator==(const CostCoefficients&, const CostCoefficients&) = default;
};

/// r = objective * (value - costs) - penalty * violations
struct RewardScales {
  double objective = 1e-4;
  double penalty = 1e-3;
  friend bool operator==(const RewardScales&, const RewardScales&) = default;
};

/// Everything the environment needs to run an episode.
struct Scenario {
  TransportNetwork network;
  std::vector<MicrogridParams> microgrids;
  std::vector<MessParams> fleet;
  CostCoefficients costs;
  RewardScales reward;
  int horizon = 24;
  double dt_h = 1.0;
  bool return_to_depot = false;
  /// kWh-equivalent penalty per km a unit ends the horizon away from its depot.
  double depot_return_penalty_per_km = 10.0;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Decoded decision for one interval. Destinations are category indices:
/// microgrids in scenario order first, then depots in id order.
struct Action {
  std::vector<int> destination;
  std::vector<double> mess_power_kw;
  std::vector<double> dg_power_kw;
  friend bool operator==(const Action&, const Action&) = default;
};

using Observation = std::vector<double>;

struct RewardBreakdown {
  double restoration_value = 0.0;
  double gen_cost = 0.0;
  double battery_cost = 0.0;
  double transport_cost = 0.0;
  /// Violation magnitude in kWh-equivalent (unscaled).
  double penalty = 0.0;
  /// Not part of the reward; W * (load - restored) * dt, for reporting.
  double interruption_cost = 0.0;
  double reward = 0.0;

  double objective() const {
    return restoration_value - gen_cost - battery_cost - transport_cost;
  }
};

struct Violations {
  double mess_clip_kwh = 0.0;
  double dg_clip_kwh = 0.0;
  double charge_shortfall_kwh = 0.0;
  double spill_kwh = 0.0;
  double depot_return_kwh = 0.0;
  double total() const {
    return mess_clip_kwh + dg_clip_kwh + charge_shortfall_kwh + spill_kwh + depot_return_kwh;
  }
};

struct MessStep {
  Location before = AtNode{};
  Location after = AtNode{};
  int destination_category = 0;
  NodeId destination = 0;
  double requested_kw = 0.0;
  double power_kw = 0.0;
  PowerRange feasible;
  double soc_before = 0.0;
  double soc_after = 0.0;
  std::optional<int> parked_microgrid;  ///< microgrid id when stationary there
  bool moved = false;
};

struct MicrogridStep {
  double dg_requested_kw = 0.0;
  double dg_kw = 0.0;
  double dg_max_kw = 0.0;
  double load_kw = 0.0;
  double supply_kw = 0.0;
  double restored_kw = 0.0;
  double reactive_kvar = 0.0;
  double spill_kw = 0.0;
  double energy_before_kwh = 0.0;
  double energy_after_kwh = 0.0;
};

struct StepInfo {
  int t = 0;
  RewardBreakdown reward;
  Violations violations;
  std::vector<MessStep> mess;
  std::vector<MicrogridStep> microgrids;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Complete Markov state of an episode, including the load-sampling stream.
struct EnvState {
  int t = 0;
  bool done = true;
  std::vector<MessState> fleet;
  std::vector<MicrogridState> grid;
  std::mt19937_64 rng;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

std::string serialize_state(const EnvState& state);
EnvState deserialize_state(const std::string& text);

/// Assembles the per-step reward from post-projection quantities.
RewardBreakdown reward_terms(const Scenario& scenario, std::span<const MicrogridStep> microgrids,
                             std::span<const MessStep> mess, const Violations& violations);

class Environment {
 public:
  explicit Environment(Scenario scenario);

  Observation reset(std::uint64_t seed);
  StepResult step(const Action& action);

  /// Maps a raw vector in [-1, 1]^D to a decision. Layout: destination
  /// logits for every unit (unit-major), then one power entry per unit, then
  /// one generator entry per microgrid.
  Action decode_action(std::span<const double> raw) const;

  Observation observe() const;
  const EnvState& state() const { return state_; }
  void restore(EnvState state);
  const Scenario& scenario() const { return scenario_; }

  std::size_t action_dim() const;
  std::size_t observation_dim() const;
  std::size_t category_count() const { return category_nodes_.size(); }
  NodeId category_node(int category) const;
  std::string category_label(int category) const;
  std::optional<int> category_at(NodeId node) const;
  /// Category that keeps unit `unit` where it is (or on its current route).
  int hold_category(std::size_t unit) const;

 private:
  int hour_of(int t) const;

  Scenario scenario_;
  std::vector<NodeId> category_nodes_;
  std::vector<std::string> category_labels_;
  double distance_scale_ = 1.0;
  EnvState state_;
};

}  // namespace mesr
