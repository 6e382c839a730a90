#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesr/baselines.hpp"
#include "mesr/config.hpp"
#include "mesr/td3.hpp"

namespace mesr {

inline constexpr const char* kMetricsHeader =
    "episode,return,critic1_loss,critic2_loss,actor_loss,validation_mean,validation_std";

/// Training load seed for episode `episode` (0-based) of a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, long episode);

struct TrainOptions {
  std::filesystem::path out_dir = "run";
  std::optional<int> episodes;          ///< overrides the configured budget
  std::optional<std::uint64_t> seed;    ///< overrides the configured seed
  /// Resume from a checkpoint written with its replay buffer.
  std::optional<std::filesystem::path> resume;
  std::ostream* progress = nullptr;
};

struct ValidationPoint {
  long episode = 0;  ///< 1-based episode after which validation ran
  double mean = 0.0;
  double std = 0.0;
};

struct TrainSummary {
  long episodes = 0;
  std::vector<double> returns;
  std::vector<ValidationPoint> validation;
  double best_validation = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics;
};

/// Trains with the configured budget, validating every `validate_every`
/// episodes on noise-free held-out seeds. Writes metrics.csv, best.ckpt,
/// final.ckpt and last.ckpt (the latter with the replay buffer, for resume).
/// Throws DivergenceError on non-finite losses after dumping diagnostics.
TrainSummary cmd_train(const ScenarioConfig& config, const TrainOptions& options);

/// Produces a fresh policy for each episode seed.
using PolicyFactory = std::function<Policy(std::uint64_t episode_seed)>;

/// Baseline names: greedy, random, idle, no-mess. A checkpoint path selects the
/// trained actor instead; its architecture must match `config`.
PolicyFactory make_policy(const ScenarioConfig& config, const Environment& env,
                          const std::string& baseline,
                          const std::optional<std::filesystem::path>& checkpoint);

/// Loads an agent checkpoint against the architecture implied by `config`.
Td3Agent load_agent(const ScenarioConfig& config, const Environment& env,
                    const std::filesystem::path& checkpoint);

struct EvalSummary {
  int episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<double> returns;
  // Per-episode means, in dollars.
  double interruption_cost = 0.0;
  double generation_cost = 0.0;
  double battery_cost = 0.0;
  double transport_cost = 0.0;
  double total_cost = 0.0;
  double penalty_kwh = 0.0;
  /// Restored energy over total load energy, per microgrid, across all episodes.
  std::vector<double> restoration_fraction;
};

EvalSummary evaluate(Environment& env, const PolicyFactory& policy, int episodes,
                     std::uint64_t seed);
nlohmann::json to_json(const EvalSummary& s);

EvalSummary cmd_evaluate(const ScenarioConfig& config, const std::string& baseline,
                         const std::optional<std::filesystem::path>& checkpoint, int episodes,
                         std::uint64_t seed);

/// Runs one episode and returns its trace; written to `out` when given.
nlohmann::json cmd_simulate(const ScenarioConfig& config, const std::string& baseline,
                            const std::optional<std::filesystem::path>& checkpoint,
                            std::uint64_t seed, const std::optional<std::filesystem::path>& out);

struct OracleReport {
  OracleResult result;
  double random_return = 0.0;  ///< mean over `seeds` random episodes
  double greedy_return = 0.0;
  double oracle_replay_return = 0.0;
  std::optional<double> checkpoint_return;
  double gap_random() const { return result.optimal_value - random_return; }
  double gap_greedy() const { return result.optimal_value - greedy_return; }
  double gap_oracle_replay() const { return result.optimal_value - oracle_replay_return; }
};

OracleReport cmd_oracle(const ScenarioConfig& config,
                        const std::optional<std::filesystem::path>& checkpoint, int seeds,
                        std::uint64_t seed);
nlohmann::json to_json(const OracleReport& r, bool with_values);

}  // namespace mesr
