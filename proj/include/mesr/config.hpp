#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mesr/baselines.hpp"
#include "mesr/env.hpp"
#include "mesr/td3.hpp"

namespace mesr {

struct TrainSettings {
  int episodes = 10000;
  std::uint64_t seed = 1;
  int validate_every = 100;
  int validation_episodes = 20;
  /// Held-out load seeds for validation start here.
  std::uint64_t validation_seed = 1000000;
  /// Evaluation seeds start here; disjoint from training and validation.
  std::uint64_t evaluation_seed = 2000000;
  int checkpoint_every = 500;
  friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

/// Parsed scenario file. The network path is stored resolved against the
/// directory of the file it came from.
struct ScenarioConfig {
  std::filesystem::path network_path;
  int horizon = 24;
  double dt_h = 1.0;
  bool return_to_depot = false;
  double depot_return_penalty_per_km = 10.0;
  CostCoefficients costs;
  RewardScales reward;
  std::vector<MicrogridParams> microgrids;
  std::vector<MessParams> fleet;
  Td3Hyper td3;
  TrainSettings train;
  OracleSettings oracle;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Unknown sections or keys are rejected with ConfigError.
ScenarioConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                            const std::string& source = "<stream>");
ScenarioConfig load_config(const std::filesystem::path& path);

/// Emits text that parse_config maps back to an identical configuration.
std::string serialize_config(const ScenarioConfig& config);

/// Loads the network and assembles a validated scenario.
Scenario build_scenario(const ScenarioConfig& config);
TinyScenario build_tiny(const ScenarioConfig& config);

}  // namespace mesr
