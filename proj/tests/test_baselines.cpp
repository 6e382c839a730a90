#include <doctest.h>

#include <cmath>

#include "mesr/baselines.hpp"
#include "mesr/config.hpp"
#include "test_helpers.hpp"

using namespace mesr;
using mesr::testing::tiny_config;

namespace {

TinyScenario tiny_with_horizon(int horizon) {
  auto c = tiny_config();
  c.horizon = horizon;
  return build_tiny(c);
}

}  // namespace

TEST_CASE("greedy sends the unit where unmet value is largest") {
  Environment env(build_scenario(tiny_config()));
  env.reset(0);
  const Action a = greedy_policy(env);
  CHECK(a.destination[0] == 0);          // MG1: 100 kW short at W = 10
  CHECK(a.mess_power_kw[0] == 0.0);      // still at the depot
  CHECK(a.dg_power_kw[0] == 200.0);      // feasible maximum, load 300
  CHECK(a.dg_power_kw[1] == 100.0);      // exactly the load
}

TEST_CASE("greedy discharges on arrival and never over-generates") {
  Environment env(build_scenario(tiny_config()));
  const auto log = run_episode(env, greedy_policy, 0);
  bool discharged = false;
  for (const auto& s : log.steps) {
    CHECK(s.info.violations.spill_kwh == doctest::Approx(0.0));
    CHECK(s.info.violations.charge_shortfall_kwh == doctest::Approx(0.0));
    if (s.info.mess[0].power_kw > 0.0) {
      discharged = true;
      CHECK(s.info.mess[0].parked_microgrid == 1);
    }
  }
  CHECK(discharged);
}

TEST_CASE("no-MESS baseline keeps every unit at its depot") {
  Environment env(build_scenario(mesr::testing::default_config()));
  const auto log = run_episode(env, no_mess_policy, 4);
  for (const auto& s : log.steps) {
    for (const auto& m : s.info.mess) {
      CHECK(m.after == Location{AtNode{10}});
      CHECK(m.power_kw == 0.0);
    }
  }
  CHECK(log.episode_return > 0.0);
}

TEST_CASE("random policy") {
  Environment env(build_scenario(tiny_config()));
  CHECK(random_policy(env, 11) == random_policy(env, 11));

  // With no load anywhere nothing can be earned.
  auto c = tiny_config();
  for (auto& m : c.microgrids) {
    m.peak_load_kw = 0.0;
  }
  Environment empty(build_scenario(c));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(random_policy(empty, seed) <= 0.0);
  }
}

TEST_CASE("oracle over an empty horizon") {
  const auto r = value_iteration(tiny_with_horizon(0));
  CHECK(r.optimal_value == 0.0);
  CHECK(r.state_count == 1);
}

TEST_CASE("single-node single-step oracle") {
  TinyScenario tiny;
  tiny.scenario.network = mesr::testing::network_from("node 1\nmicrogrid 1 1\n");
  tiny.scenario.horizon = 1;
  MicrogridParams m;
  m.dg_max_kw = 100.0;
  m.dg_max_kvar = 1000.0;
  m.peak_load_kw = 100.0;
  m.profile.fill(1.0);
  m.forecast_error_std = 0.0;
  m.interruption_cost = 10.0;
  m.generation_cost = 0.5;
  tiny.scenario.microgrids.push_back(m);
  const auto r = value_iteration(tiny);
  CHECK(r.optimal_value == doctest::Approx(1e-4 * 950.0).epsilon(1e-12));
  CHECK(r.best_action[r.index.at(r.keys.front())].dg_power_kw[0] == 100.0);
}

TEST_CASE("single-step oracle matches hand enumeration") {
  // The unit cannot park within one step, so only generation matters.
  // MG1: 200 kW at W = 10 and C = 0.5; MG2: 100 kW at W = 1 and C = 0.5.
  const auto r = value_iteration(tiny_with_horizon(1));
  const double expected = 1e-4 * ((10.0 - 0.5) * 200.0 + (1.0 - 0.5) * 100.0);
  CHECK(r.optimal_value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.action_count == 3 * 3 * 5 * 5);
}

TEST_CASE("oracle bounds the other policies and its own replay") {
  const auto tiny = build_tiny(tiny_config());
  const auto r = value_iteration(tiny);
  CHECK(r.residual < 1e-9);
  CHECK(r.max_snap_error == 0.0);
  Environment env(tiny.scenario);

  const Policy oracle = [&r](const Environment& e) { return r.policy(e); };
  CHECK(run_episode(env, oracle, 0).episode_return == doctest::Approx(r.optimal_value).epsilon(1e-9));
  CHECK(run_episode(env, greedy_policy, 0).episode_return <= r.optimal_value + 1e-12);
  CHECK(run_episode(env, idle_action, 0).episode_return <= r.optimal_value + 1e-12);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(random_policy(env, seed) <= r.optimal_value + 1e-12);
  }
}

TEST_CASE("oracle scenario limits") {
  auto c = tiny_config();
  c.horizon = 7;
  CHECK_THROWS_AS(build_tiny(c), ConfigError);
  auto d = tiny_config();
  d.oracle.dg_levels = 1;
  CHECK_THROWS_AS(build_tiny(d), ConfigError);
  CHECK_THROWS_AS(build_tiny(mesr::testing::default_config()), ConfigError);
}
