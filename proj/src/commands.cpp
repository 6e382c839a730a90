#include "mesr/commands.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mesr/trace.hpp"

namespace mesr {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t episode_seed(std::uint64_t seed, long episode) {
  // splitmix64 finalizer over (seed, episode)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(episode) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  if (xs.empty()) {
    return m;
  }
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - m.mean) * (x - m.mean);
  }
  m.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return m;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void save_agent(const Td3Agent& agent, const fs::path& path, bool with_buffer) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write checkpoint " + tmp.string());
    }
    agent.save(out, with_buffer);
    out.flush();
    if (!out) {
      throw std::runtime_error("write failed for checkpoint " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

// Rows of an existing metrics file for episodes 1..keep.
std::vector<std::string> kept_rows(const fs::path& metrics, long keep) {
  std::vector<std::string> rows;
  std::ifstream in(metrics);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    return rows;
  }
  while (static_cast<long>(rows.size()) < keep && std::getline(in, line)) {
    rows.push_back(line);
  }
  return rows;
}

}  // namespace

TrainSummary cmd_train(const ScenarioConfig& config, const TrainOptions& options) {
  Environment env(build_scenario(config));
  Environment validation_env(env.scenario());
  const std::uint64_t seed = options.seed.value_or(config.train.seed);
  const long budget = options.episodes.value_or(config.train.episodes);
  Td3Agent agent(env.observation_dim(), env.action_dim(), config.td3, seed);

  fs::create_directories(options.out_dir);
  TrainSummary summary;
  summary.metrics = options.out_dir / "metrics.csv";
  summary.best_checkpoint = options.out_dir / "best.ckpt";
  summary.final_checkpoint = options.out_dir / "final.ckpt";
  summary.last_checkpoint = options.out_dir / "last.ckpt";
  summary.best_validation = -std::numeric_limits<double>::infinity();

  std::vector<std::string> previous;
  if (options.resume) {
    std::ifstream in(*options.resume, std::ios::binary);
    if (!in) {
      throw ConfigError("cannot open checkpoint " + options.resume->string());
    }
    agent.load(in);
    previous = kept_rows(summary.metrics, agent.episodes());
    for (const auto& row : previous) {
      std::vector<std::string> cells;
      std::stringstream ss(row);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
      }
      if (cells.size() == 7 && !cells[5].empty()) {
        const double v = std::stod(cells[5]);
        summary.validation.push_back({std::stol(cells[0]), v, std::stod(cells[6])});
        summary.best_validation = std::max(summary.best_validation, v);
      }
    }
  }

  std::ofstream metrics(summary.metrics, std::ios::trunc);
  if (!metrics) {
    throw std::runtime_error("cannot write " + summary.metrics.string());
  }
  metrics << kMetricsHeader << "\n";
  for (const auto& row : previous) {
    metrics << row << "\n";
  }

  const auto actor = [&agent](const Environment& e) {
    const Observation obs = e.observe();
    return e.decode_action(agent.select_action(obs, ActionMode::greedy));
  };

  for (long ep = agent.episodes(); ep < budget; ++ep) {
    EpisodeStats stats;
    try {
      stats = train_episode(env, agent, episode_seed(seed, ep));
    } catch (const std::exception& e) {
      if (dynamic_cast<const DivergenceError*>(&e) == nullptr &&
          dynamic_cast<const std::domain_error*>(&e) == nullptr) {
        throw;
      }
      std::ofstream dump(options.out_dir / "divergence.txt");
      dump << "episode " << ep + 1 << "\n"
           << "critic updates " << agent.critic_updates() << "\n"
           << "actor updates " << agent.actor_updates() << "\n"
           << "error " << e.what() << "\n"
           << "env state\n" << serialize_state(env.state()) << "\n";
      throw DivergenceError(std::string(e.what()) + " (episode " + std::to_string(ep + 1) +
                            ", diagnostics in " + (options.out_dir / "divergence.txt").string() +
                            ")");
    }
    summary.returns.push_back(stats.episode_return);
    metrics << ep + 1 << "," << csv_number(stats.episode_return) << ","
            << csv_number(stats.critic1_loss) << "," << csv_number(stats.critic2_loss) << ","
            << csv_number(stats.actor_loss) << ",";
    if ((ep + 1) % config.train.validate_every == 0) {
      std::vector<double> vals;
      for (int i = 0; i < config.train.validation_episodes; ++i) {
        vals.push_back(
            run_episode(validation_env, actor, config.train.validation_seed + static_cast<std::uint64_t>(i))
                .episode_return);
      }
      const MeanStd ms = mean_std(vals);
      summary.validation.push_back({ep + 1, ms.mean, ms.std});
      metrics << csv_number(ms.mean) << "," << csv_number(ms.std);
      if (ms.mean > summary.best_validation) {
        summary.best_validation = ms.mean;
        save_agent(agent, summary.best_checkpoint, false);
      }
      if (options.progress != nullptr) {
        *options.progress << "episode " << ep + 1 << " return " << stats.episode_return
                          << " validation " << ms.mean << " +- " << ms.std << "\n";
      }
    } else {
      metrics << ",";
    }
    metrics << "\n";
    if ((ep + 1) % config.train.checkpoint_every == 0) {
      metrics.flush();
      save_agent(agent, summary.last_checkpoint, true);
    }
  }
  metrics.flush();
  summary.episodes = agent.episodes();
  save_agent(agent, summary.final_checkpoint, false);
  save_agent(agent, summary.last_checkpoint, true);
  if (!fs::exists(summary.best_checkpoint)) {
    save_agent(agent, summary.best_checkpoint, false);
  }
  return summary;
}

Td3Agent load_agent(const ScenarioConfig& config, const Environment& env,
                    const fs::path& checkpoint) {
  Td3Agent agent(env.observation_dim(), env.action_dim(), config.td3, 0);
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint " + checkpoint.string());
  }
  agent.load(in);
  return agent;
}

PolicyFactory make_policy(const ScenarioConfig& config, const Environment& env,
                          const std::string& baseline,
                          const std::optional<fs::path>& checkpoint) {
  if (checkpoint) {
    const Td3Agent agent = load_agent(config, env, *checkpoint);
    Policy p = actor_policy(agent.actor());
    return [p](std::uint64_t) { return p; };
  }
  if (baseline == "greedy") {
    return [](std::uint64_t) { return Policy(greedy_policy); };
  }
  if (baseline == "no-mess") {
    return [](std::uint64_t) { return Policy(no_mess_policy); };
  }
  if (baseline == "idle") {
    return [](std::uint64_t) { return Policy(idle_action); };
  }
  if (baseline == "random") {
    return [](std::uint64_t s) {
      auto p = std::make_shared<RandomPolicy>(s ^ 0x9e3779b97f4a7c15ULL);
      return Policy([p](const Environment& e) { return (*p)(e); });
    };
  }
  throw ConfigError("unknown policy '" + baseline + "' (expected greedy, random, idle or no-mess)");
}

EvalSummary evaluate(Environment& env, const PolicyFactory& policy, int episodes,
                     std::uint64_t seed) {
  EvalSummary s;
  s.episodes = episodes;
  const std::size_t n_mg = env.scenario().microgrids.size();
  std::vector<double> restored(n_mg, 0.0), load(n_mg, 0.0);
  const double dt = env.scenario().dt_h;
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t ep_seed = seed + static_cast<std::uint64_t>(i);
    const EpisodeLog log = run_episode(env, policy(ep_seed), ep_seed);
    s.returns.push_back(log.episode_return);
    for (const auto& step : log.steps) {
      const auto& b = step.info.reward;
      s.interruption_cost += b.interruption_cost;
      s.generation_cost += b.gen_cost;
      s.battery_cost += b.battery_cost;
      s.transport_cost += b.transport_cost;
      s.penalty_kwh += b.penalty;
      for (std::size_t m = 0; m < n_mg; ++m) {
        restored[m] += step.info.microgrids[m].restored_kw * dt;
        load[m] += step.info.microgrids[m].load_kw * dt;
      }
    }
  }
  const MeanStd ms = mean_std(s.returns);
  s.mean_return = ms.mean;
  s.std_return = ms.std;
  if (episodes > 0) {
    const double n = episodes;
    s.interruption_cost /= n;
    s.generation_cost /= n;
    s.battery_cost /= n;
    s.transport_cost /= n;
    s.penalty_kwh /= n;
  }
  s.total_cost = s.interruption_cost + s.generation_cost + s.battery_cost + s.transport_cost;
  for (std::size_t m = 0; m < n_mg; ++m) {
    s.restoration_fraction.push_back(load[m] > 0.0 ? restored[m] / load[m] : 0.0);
  }
  return s;
}

json to_json(const EvalSummary& s) {
  return {{"episodes", s.episodes},
          {"mean_return", s.mean_return},
          {"std_return", s.std_return},
          {"cost",
           {{"interruption", s.interruption_cost},
            {"generation", s.generation_cost},
            {"battery", s.battery_cost},
            {"transport", s.transport_cost},
            {"total", s.total_cost}}},
          {"penalty_kwh", s.penalty_kwh},
          {"restoration_fraction", s.restoration_fraction}};
}

EvalSummary cmd_evaluate(const ScenarioConfig& config, const std::string& baseline,
                         const std::optional<fs::path>& checkpoint, int episodes,
                         std::uint64_t seed) {
  Environment env(build_scenario(config));
  return evaluate(env, make_policy(config, env, baseline, checkpoint), episodes, seed);
}

json cmd_simulate(const ScenarioConfig& config, const std::string& baseline,
                  const std::optional<fs::path>& checkpoint, std::uint64_t seed,
                  const std::optional<fs::path>& out) {
  Environment env(build_scenario(config));
  const Policy policy = make_policy(config, env, baseline, checkpoint)(seed);
  const EpisodeLog log = run_episode(env, policy, seed);
  json trace = make_trace(env, log, seed, checkpoint ? checkpoint->string() : baseline);
  if (out) {
    if (out->has_parent_path()) {
      fs::create_directories(out->parent_path());
    }
    std::ofstream f(*out, std::ios::trunc);
    if (!f) {
      throw std::runtime_error("cannot write " + out->string());
    }
    f << trace.dump(1) << "\n";
  }
  return trace;
}

OracleReport cmd_oracle(const ScenarioConfig& config, const std::optional<fs::path>& checkpoint,
                        int seeds, std::uint64_t seed) {
  const TinyScenario tiny = build_tiny(config);
  OracleReport report;
  report.result = value_iteration(tiny);
  Environment env(tiny.scenario);

  const auto mean_over = [&](const PolicyFactory& factory) {
    return evaluate(env, factory, seeds, seed).mean_return;
  };
  report.random_return = mean_over(make_policy(config, env, "random", std::nullopt));
  report.greedy_return = mean_over(make_policy(config, env, "greedy", std::nullopt));
  const OracleResult& res = report.result;
  report.oracle_replay_return =
      run_episode(env, [&res](const Environment& e) { return res.policy(e); }, seed).episode_return;
  if (checkpoint) {
    report.checkpoint_return = mean_over(make_policy(config, env, "", checkpoint));
  }
  return report;
}

json to_json(const OracleReport& r, bool with_values) {
  json j = {{"optimal_value", r.result.optimal_value},
            {"state_count", r.result.state_count},
            {"action_count", r.result.action_count},
            {"sweeps", r.result.sweeps},
            {"residual", r.result.residual},
            {"max_snap_error", r.result.max_snap_error},
            {"random_return", r.random_return},
            {"greedy_return", r.greedy_return},
            {"oracle_replay_return", r.oracle_replay_return},
            {"gap_random", r.gap_random()},
            {"gap_greedy", r.gap_greedy()},
            {"gap_oracle_replay", r.gap_oracle_replay()}};
  if (r.checkpoint_return) {
    j["checkpoint_return"] = *r.checkpoint_return;
    j["gap_checkpoint"] = r.result.optimal_value - *r.checkpoint_return;
  }
  if (with_values) {
    json values = json::object();
    for (std::size_t i = 0; i < r.result.keys.size(); ++i) {
      values[r.result.keys[i]] = r.result.values[i];
    }
    j["values"] = std::move(values);
  }
  return j;
}

}  // namespace mesr
