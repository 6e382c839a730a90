// Command-line entry point: train, evaluate, simulate, oracle.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "mesr/commands.hpp"
#include "mesr/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDivergence = 2;

template <class T>
std::optional<T> opt(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile energy storage routing and microgrid restoration with TD3"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::string out;
  std::string checkpoint;
  std::string policy = "greedy";
  bool resume = false;
  bool values = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Scenario configuration file")->required();
  };

  auto* train = app.add_subcommand("train", "Train a TD3 agent");
  add_common(train);
  auto* train_seed = train->add_option("--seed", seed, "Run seed (overrides [train] seed)");
  auto* train_eps = train->add_option("--episodes", episodes, "Episode budget override");
  train->add_option("--out", out, "Output directory")->required();
  auto* train_ckpt =
      train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint (needs its buffer)");
  train->add_flag("--resume", resume, "Resume from <out>/last.ckpt");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint or baseline policy");
  add_common(eval);
  eval->add_option("--seed", seed, "First evaluation seed")->default_val(2000000);
  eval->add_option("--episodes", episodes, "Number of episodes")->default_val(100);
  auto* eval_ckpt = eval->add_option("--checkpoint", checkpoint, "Agent checkpoint");
  eval->add_option("--policy", policy, "Baseline: greedy, random, idle, no-mess")
      ->default_val("greedy");
  auto* eval_out = eval->add_option("--out", out, "Write the summary JSON here");

  auto* sim = app.add_subcommand("simulate", "Run one episode and emit its JSON trace");
  add_common(sim);
  sim->add_option("--seed", seed, "Episode seed")->default_val(2000000);
  auto* sim_ckpt = sim->add_option("--checkpoint", checkpoint, "Agent checkpoint");
  sim->add_option("--policy", policy, "Baseline: greedy, random, idle, no-mess")
      ->default_val("greedy");
  auto* sim_out = sim->add_option("--out", out, "Trace file (stdout when omitted)");

  auto* orc = app.add_subcommand("oracle", "Solve a small scenario exactly and report gaps");
  add_common(orc);
  orc->add_option("--seed", seed, "First comparison seed")->default_val(2000000);
  orc->add_option("--episodes", episodes, "Episodes per compared policy")->default_val(50);
  auto* orc_ckpt = orc->add_option("--checkpoint", checkpoint, "Agent checkpoint to compare");
  auto* orc_out = orc->add_option("--out", out, "Write the report JSON here");
  orc->add_flag("--values", values, "Include the value of every lattice state");

  CLI11_PARSE(app, argc, argv);

  try {
    const mesr::ScenarioConfig config = mesr::load_config(config_path);
    const auto emit = [&](const nlohmann::json& j, const CLI::Option* out_opt) {
      if (out_opt != nullptr && out_opt->count()) {
        std::ofstream f(out);
        f << j.dump(2) << "\n";
      } else {
        std::cout << j.dump(2) << "\n";
      }
    };

    if (train->parsed()) {
      mesr::TrainOptions o;
      o.out_dir = out;
      o.seed = opt(train_seed, seed);
      o.episodes = opt(train_eps, episodes);
      if (train_ckpt->count()) {
        o.resume = checkpoint;
      } else if (resume) {
        o.resume = std::filesystem::path(out) / "last.ckpt";
      }
      o.progress = &std::cerr;
      const auto s = mesr::cmd_train(config, o);
      std::cout << "episodes " << s.episodes << "\n"
                << "best validation " << s.best_validation << "\n"
                << "metrics " << s.metrics.string() << "\n"
                << "final checkpoint " << s.final_checkpoint.string() << "\n";
    } else if (eval->parsed()) {
      const auto s = mesr::cmd_evaluate(config, policy, opt(eval_ckpt, std::filesystem::path(checkpoint)),
                                        episodes, seed);
      emit(mesr::to_json(s), eval_out);
    } else if (sim->parsed()) {
      const auto out_path = opt(sim_out, std::filesystem::path(out));
      const auto trace = mesr::cmd_simulate(config, policy,
                                            opt(sim_ckpt, std::filesystem::path(checkpoint)), seed,
                                            out_path);
      if (!out_path) {
        std::cout << trace.dump(1) << "\n";
      }
    } else if (orc->parsed()) {
      const auto r = mesr::cmd_oracle(config, opt(orc_ckpt, std::filesystem::path(checkpoint)),
                                      episodes, seed);
      emit(mesr::to_json(r, values), orc_out);
    }
  } catch (const mesr::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const mesr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mesr::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mesr::NetworkError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
