#include <doctest.h>

#include <cmath>
#include <random>

#include "mesr/baselines.hpp"
#include "mesr/env.hpp"
#include "test_helpers.hpp"

using namespace mesr;
using mesr::testing::default_config;
using mesr::testing::network_from;

namespace {

MicrogridParams flat_microgrid(int id, double load_kw, double interruption_cost) {
  MicrogridParams p;
  p.id = id;
  p.peak_load_kw = load_kw;
  p.profile.fill(1.0);
  p.forecast_error_std = 0.0;
  p.power_factor = 1.0;
  p.dg_max_kvar = 0.0;
  p.interruption_cost = interruption_cost;
  return p;
}

// Depot at node 1, a microgrid at node 2 100 km away.
Scenario single_microgrid(double load_kw) {
  Scenario s;
  s.network = network_from("node 1\nnode 2\nedge 1 2 100\ndepot 1 1\nmicrogrid 1 2\n");
  s.microgrids.push_back(flat_microgrid(1, load_kw, 10.0));
  MessParams unit;
  unit.home_depot = 1;
  s.fleet.push_back(unit);
  return s;
}

}  // namespace

TEST_CASE("reset places the fleet at its depot") {
  Environment env(build_scenario(default_config()));
  const auto obs = env.reset(17);
  REQUIRE(env.state().fleet.size() == 3);
  for (const auto& u : env.state().fleet) {
    CHECK(u.location == Location{AtNode{10}});
    CHECK(u.soc == 0.5);
  }
  CHECK(env.state().t == 0);
  CHECK(obs.size() == env.observation_dim());
  CHECK(env.reset(17) == obs);
  CHECK(env.observation_dim() == 1 + 2 * 3 + 3 * (1 + 4));
  CHECK(env.action_dim() == 3 * (4 + 1) + 3);
}

TEST_CASE("scenario validation") {
  auto s = single_microgrid(100.0);
  s.microgrids[0].id = 4;
  CHECK_THROWS_AS(Environment{s}, ConfigError);
  auto t = single_microgrid(100.0);
  t.fleet[0].home_depot = 3;
  CHECK_THROWS_AS(Environment{t}, ConfigError);
}

TEST_CASE("decode_action") {
  Environment env(build_scenario(default_config()));
  env.reset(1);
  std::vector<double> raw(env.action_dim(), 0.0);
  SUBCASE("all zero") {
    const Action a = env.decode_action(raw);
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(a.destination[u] == 0);
      CHECK(a.mess_power_kw[u] == 0.0);
    }
    CHECK(a.dg_power_kw[0] == 500.0);
    CHECK(a.dg_power_kw[1] == 900.0);
    CHECK(a.dg_power_kw[2] == 600.0);
  }
  SUBCASE("power boundaries") {
    raw[12] = 1.0;
    raw[13] = -1.0;
    const Action a = env.decode_action(raw);
    CHECK(a.mess_power_kw[0] == 400.0);
    CHECK(a.mess_power_kw[1] == -400.0);
  }
  SUBCASE("argmax over destination logits") {
    raw[0] = 0.2;
    raw[1] = 0.2;
    raw[2] = 0.9;
    raw[3] = -1.0;
    CHECK(env.decode_action(raw).destination[0] == 2);
    CHECK(env.category_label(2) == "MG3");
    CHECK(env.category_label(3) == "D1");
    raw[2] = 0.2;
    CHECK(env.decode_action(raw).destination[0] == 0);
  }
  SUBCASE("wrong size") {
    raw.pop_back();
    CHECK_THROWS_AS(env.decode_action(raw), std::invalid_argument);
  }
}

TEST_CASE("idle policy earns nothing when loads are zero") {
  auto s = single_microgrid(0.0);
  Environment env(s);
  const auto log = run_episode(env, idle_action, 3);
  CHECK(log.steps.size() == 24);
  CHECK(log.episode_return == 0.0);
}

TEST_CASE("hand-evaluated reward") {
  Environment env(single_microgrid(2000.0));
  env.reset(0);
  Action a;
  a.destination = {0};  // head for the microgrid, 100 km away
  a.mess_power_kw = {0.0};
  a.dg_power_kw = {1000.0};
  const auto r = env.step(a);
  const auto& b = r.info.reward;
  CHECK(b.restoration_value == 10000.0);
  CHECK(b.gen_cost == 500.0);
  CHECK(b.transport_cost == 80.0);
  CHECK(b.battery_cost == 0.0);
  CHECK(b.penalty == 0.0);
  CHECK(r.reward == doctest::Approx(1e-4 * 9420.0).epsilon(1e-12));
}

TEST_CASE("battery cost of a parked discharge") {
  auto s = single_microgrid(2000.0);
  s.network = network_from("node 1\nnode 2\nedge 1 2 10\ndepot 1 1\nmicrogrid 1 2\n");
  Environment env(s);
  env.reset(0);
  Action go{{0}, {0.0}, {0.0}};
  env.step(go);  // arrive
  const auto r = env.step(Action{{0}, {380.0}, {0.0}});
  CHECK(r.info.mess[0].power_kw == 380.0);
  CHECK(r.info.reward.battery_cost == doctest::Approx(76.0).epsilon(1e-14));
  CHECK(r.info.reward.transport_cost == 0.0);
  CHECK(r.info.mess[0].parked_microgrid == 1);
}

TEST_CASE("projection records clip magnitudes") {
  Environment env(single_microgrid(100.0));
  env.reset(0);
  // In transit: any exchange is clipped to zero; generation above 1000 kW clipped.
  const auto r = env.step(Action{{0}, {250.0}, {1500.0}});
  CHECK(r.info.mess[0].power_kw == 0.0);
  CHECK(r.info.violations.mess_clip_kwh == 250.0);
  CHECK(r.info.violations.dg_clip_kwh == 500.0);
  // 1000 kW generated against 100 kW of load.
  CHECK(r.info.violations.spill_kwh == 900.0);
  CHECK(r.info.reward.penalty == 250.0 + 500.0 + 900.0);
}

TEST_CASE("charging beyond local supply is scaled back") {
  auto s = single_microgrid(0.0);
  s.network = network_from("node 1\nnode 2\nedge 1 2 10\ndepot 1 1\nmicrogrid 1 2\n");
  Environment env(s);
  env.reset(0);
  env.step(Action{{0}, {0.0}, {0.0}});
  const auto r = env.step(Action{{0}, {-300.0}, {100.0}});
  CHECK(r.info.mess[0].power_kw == doctest::Approx(-100.0));
  CHECK(r.info.violations.charge_shortfall_kwh == doctest::Approx(200.0));
  CHECK(r.info.microgrids[0].supply_kw == 0.0);
  CHECK(env.state().fleet[0].soc == doctest::Approx(0.5 + 0.95 * 100.0 / 1000.0));
}

TEST_CASE("finished episodes reject further steps") {
  auto s = single_microgrid(0.0);
  s.horizon = 1;
  Environment env(s);
  env.reset(0);
  env.step(idle_action(env));
  CHECK(env.state().done);
  CHECK_THROWS_AS(env.step(idle_action(env)), std::logic_error);
}

TEST_CASE("return-to-depot penalty") {
  auto s = single_microgrid(0.0);
  s.horizon = 1;
  s.return_to_depot = true;
  Environment env(s);
  env.reset(0);
  const auto r = env.step(Action{{0}, {0.0}, {0.0}});
  CHECK(r.info.violations.depot_return_kwh == doctest::Approx(10.0 * 30.0));
}

TEST_CASE("state round trip reproduces the next step exactly") {
  Environment env(build_scenario(default_config()));
  env.reset(21);
  RandomPolicy policy(4);
  for (int t = 0; t < 7; ++t) {
    env.step(policy(env));
  }
  const std::string text = serialize_state(env.state());
  const EnvState copy = deserialize_state(text);
  CHECK(copy == env.state());

  Environment twin(env.scenario());
  twin.restore(copy);
  for (int t = 0; t < 10; ++t) {
    const Action a = policy(env);
    const auto r1 = env.step(a);
    const auto r2 = twin.step(a);
    CHECK(r1.reward == r2.reward);
    CHECK(r1.observation == r2.observation);
  }
  CHECK(env.state() == twin.state());
}

TEST_CASE("random episodes respect every physical limit") {
  Environment env(build_scenario(default_config()));
  const auto& sc = env.scenario();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomPolicy policy(seed + 500);
    env.reset(seed);
    std::vector<double> fuel_used(sc.microgrids.size(), 0.0);
    while (!env.state().done) {
      const auto r = env.step(policy(env));
      const auto& info = r.info;
      const double recon = sc.reward.objective * info.reward.objective() -
                           sc.reward.penalty * info.reward.penalty;
      REQUIRE(std::abs(recon - r.reward) <= 1e-9);
      for (const auto& obs : r.observation) {
        REQUIRE(obs >= 0.0);
        REQUIRE(obs <= 1.0);
      }
      for (std::size_t u = 0; u < info.mess.size(); ++u) {
        const auto& m = info.mess[u];
        REQUIRE(m.soc_after >= sc.fleet[u].soc_min);
        REQUIRE(m.soc_after <= sc.fleet[u].soc_max);
        if (!m.parked_microgrid) {
          REQUIRE(m.power_kw == 0.0);
        }
      }
      for (std::size_t k = 0; k < info.microgrids.size(); ++k) {
        const auto& g = info.microgrids[k];
        const auto& p = sc.microgrids[k];
        REQUIRE(g.restored_kw >= 0.0);
        REQUIRE(g.restored_kw <= g.load_kw);
        REQUIRE(g.reactive_kvar <= p.dg_max_kvar);
        REQUIRE(g.dg_kw <= p.dg_max_kw);
        REQUIRE(g.energy_after_kwh >= p.dg_energy_min_kwh);
        fuel_used[k] += g.dg_kw * sc.dt_h;
      }
    }
    for (std::size_t k = 0; k < sc.microgrids.size(); ++k) {
      const double expected = sc.microgrids[k].dg_energy_max_kwh - fuel_used[k];
      CHECK(std::abs(env.state().grid[k].dg_energy_kwh - expected) < 1e-6);
    }
  }
}

TEST_CASE("idle policy returns zero on the default scenario") {
  Environment env(build_scenario(default_config()));
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto log = run_episode(env, idle_action, seed);
    CHECK(log.episode_return == 0.0);
    for (const auto& s : log.steps) {
      for (const auto& m : s.info.mess) {
        CHECK(m.after == Location{AtNode{10}});
      }
    }
  }
}
