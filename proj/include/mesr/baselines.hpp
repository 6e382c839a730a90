#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mesr/env.hpp"
#include "mesr/td3.hpp"

namespace mesr {

/// A policy reads the environment's current state and returns a decision.
using Policy = std::function<Action(const Environment&)>;

/// Every unit holds position with zero exchange; generators stay off.
Action idle_action(const Environment& env);

/// Myopic heuristic: generators run at their feasible maximum while unmet
/// load exists; each unit heads for the microgrid with the largest
/// W * unmet-load, discharges there, and recharges at the microgrid whose
/// marginal value of energy is lowest.
Action greedy_policy(const Environment& env);

/// Greedy generator dispatch with every unit forced idle.
Action no_mess_policy(const Environment& env);

/// Uniform raw actions in [-1, 1]^D decoded by the environment.
class RandomPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  Action operator()(const Environment& env);

 private:
  std::mt19937_64 rng_;
};

/// Noise-free actor of a trained agent.
Policy actor_policy(const nn::Mlp& actor);

struct EpisodeLog {
  double episode_return = 0.0;
  std::vector<Action> actions;
  std::vector<StepResult> steps;
};

/// Resets with `seed` and follows `policy` to the end of the horizon.
EpisodeLog run_episode(Environment& env, const Policy& policy, std::uint64_t seed);

/// Undiscounted return of a uniformly random policy; the same seed drives the
/// load stream and the action draws.
double random_policy(Environment& env, std::uint64_t seed);

// --------------------------------------------------------------- exact oracle

inline constexpr std::size_t kMaxOracleStates = 1000000;

struct OracleSettings {
  int dg_levels = 5;  ///< evenly spaced generator levels over [0, P_max]
  friend bool operator==(const OracleSettings&, const OracleSettings&) = default;
};

/// Small scenario whose discretized MDP can be solved exactly.
struct TinyScenario {
  Scenario scenario;
  OracleSettings settings;
  /// Throws ConfigError when the size limits are exceeded.
  void validate() const;
};

struct OracleResult {
  double optimal_value = 0.0;  ///< value of the reset state
  std::size_t state_count = 0;
  std::size_t action_count = 0;
  int sweeps = 0;
  double residual = 0.0;        ///< sup-norm change of the final sweep
  double max_snap_error = 0.0;  ///< largest SOC/fuel rounding onto the lattice
  std::vector<std::string> keys;
  std::vector<double> values;
  std::map<std::string, std::size_t> index;
  std::vector<Action> best_action;
  std::vector<Action> actions;

  /// Optimal decision for an environment state reachable under the lattice.
  Action policy(const Environment& env) const;
  double value_of(const std::string& key) const;
};

/// Canonical lattice key of an environment state.
std::string oracle_state_key(const EnvState& state);

/// Enumerates the reachable discretized state space by stepping the
/// environment itself and runs Bellman sweeps until the sup-norm change drops
/// below 1e-9. Undiscounted.
OracleResult value_iteration(const TinyScenario& tiny);

}  // namespace mesr
