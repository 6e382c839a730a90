#include "mesr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mesr {

namespace {

constexpr double kEps = 1e-9;

std::optional<NodeId> parked_node(const MessState& s) {
  if (const auto* at = std::get_if<AtNode>(&s.location)) {
    return at->node;
  }
  return std::nullopt;
}

struct GridOutlook {
  std::vector<double> restorable;  // load the reactive cap lets us serve
  std::vector<double> dg_max;
};

GridOutlook outlook(const Environment& env) {
  const auto& sc = env.scenario();
  GridOutlook o;
  for (std::size_t m = 0; m < sc.microgrids.size(); ++m) {
    const auto& p = sc.microgrids[m];
    const auto& g = env.state().grid[m];
    const double ratio = p.reactive_ratio();
    const double cap = ratio > 0.0 ? p.dg_max_kvar / ratio : std::numeric_limits<double>::infinity();
    o.restorable.push_back(std::min(g.load_kw, cap));
    o.dg_max.push_back(dg_feasible_range(p, g, sc.dt_h).max_kw);
  }
  return o;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> greedy_dispatch(const Environment& env, const GridOutlook& o,
                                    const std::vector<double>& discharge,
                                    const std::vector<double>& charge) {
  std::vector<double> dg;
  for (std::size_t m = 0; m < o.dg_max.size(); ++m) {
    const double need = std::max(0.0, o.restorable[m] - discharge[m] + charge[m]);
    dg.push_back(std::min(o.dg_max[m], need));
  }
  (void)env;
  return dg;
}

}  // namespace

Action idle_action(const Environment& env) {
  const auto& sc = env.scenario();
  Action a;
  for (std::size_t u = 0; u < sc.fleet.size(); ++u) {
    a.destination.push_back(env.hold_category(u));
    a.mess_power_kw.push_back(0.0);
  }
  a.dg_power_kw.assign(sc.microgrids.size(), 0.0);
  return a;
}

Action no_mess_policy(const Environment& env) {
  Action a = idle_action(env);
  const auto o = outlook(env);
  const std::vector<double> zero(o.dg_max.size(), 0.0);
  a.dg_power_kw = greedy_dispatch(env, o, zero, zero);
  return a;
}

Action greedy_policy(const Environment& env) {
  const auto& sc = env.scenario();
  const auto& st = env.state();
  const std::size_t n_mg = sc.microgrids.size();
  const auto o = outlook(env);
  std::vector<double> discharge(n_mg, 0.0);
  std::vector<double> charge(n_mg, 0.0);

  Action a = idle_action(env);
  for (std::size_t u = 0; u < sc.fleet.size(); ++u) {
    const auto& params = sc.fleet[u];
    const auto& unit = st.fleet[u];
    std::vector<double> value(n_mg), marginal(n_mg);
    double total_unmet = 0.0;
    for (std::size_t m = 0; m < n_mg; ++m) {
      const double unmet = std::max(0.0, o.restorable[m] - o.dg_max[m] - discharge[m]);
      total_unmet += unmet;
      value[m] = sc.microgrids[m].interruption_cost * unmet;
      const double spare = o.dg_max[m] - o.restorable[m] - charge[m] + discharge[m];
      if (o.dg_max[m] - charge[m] <= kEps) {
        marginal[m] = std::numeric_limits<double>::infinity();  // nothing to draw
      } else {
        marginal[m] = spare > kEps ? sc.microgrids[m].generation_cost
                                   : sc.microgrids[m].interruption_cost;
      }
    }
    if (n_mg == 0 || total_unmet <= kEps) {
      continue;  // idle
    }
    const std::size_t best = argmax(value);
    const std::size_t cheap = argmin(marginal);
    const double delivered_value = params.eta_charge * params.eta_discharge *
                                   sc.microgrids[best].interruption_cost;
    const bool worth_charging = cheap != best && std::isfinite(marginal[cheap]) &&
                                marginal[cheap] + 2.0 * sc.costs.battery_per_kwh < delivered_value;
    const bool can_discharge = unit.soc > params.soc_min + kEps;
    const bool can_charge = unit.soc < params.soc_max - kEps;
    const auto here = parked_node(unit);
    const NodeId best_node = env.category_node(static_cast<int>(best));
    const NodeId cheap_node = env.category_node(static_cast<int>(cheap));
    const PowerRange range = feasible_power_range(params, unit.soc, true, sc.dt_h);

    if (worth_charging && can_charge && here == cheap_node &&
        (unit.soc < params.soc_min + kEps || !can_discharge || unit.destination == cheap_node)) {
      // Parked at the cheap site: keep charging until full.
      a.destination[u] = static_cast<int>(cheap);
      a.mess_power_kw[u] = std::max(range.min_kw, -(o.dg_max[cheap] - charge[cheap]));
      charge[cheap] += -a.mess_power_kw[u];
    } else if (can_discharge) {
      a.destination[u] = static_cast<int>(best);
      if (here == best_node) {
        const double unmet = std::max(0.0, o.restorable[best] - o.dg_max[best] - discharge[best]);
        a.mess_power_kw[u] = std::min(range.max_kw, unmet);
        discharge[best] += a.mess_power_kw[u];
      }
    } else if (worth_charging) {
      a.destination[u] = static_cast<int>(cheap);
      if (here == cheap_node) {
        a.mess_power_kw[u] = std::max(range.min_kw, -(o.dg_max[cheap] - charge[cheap]));
        charge[cheap] += -a.mess_power_kw[u];
      }
    }
  }
  a.dg_power_kw = greedy_dispatch(env, o, discharge, charge);
  return a;
}

Action RandomPolicy::operator()(const Environment& env) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> raw(env.action_dim());
  for (auto& x : raw) {
    x = u(rng_);
  }
  return env.decode_action(raw);
}

Policy actor_policy(const nn::Mlp& actor) {
  return [actor](const Environment& env) {
    const Observation obs = env.observe();
    const nn::Vector raw = actor.forward(obs);
    return env.decode_action(std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())));
  };
}

EpisodeLog run_episode(Environment& env, const Policy& policy, std::uint64_t seed) {
  EpisodeLog log;
  env.reset(seed);
  while (!env.state().done) {
    Action a = policy(env);
    StepResult r = env.step(a);
    log.episode_return += r.reward;
    log.actions.push_back(std::move(a));
    log.steps.push_back(std::move(r));
  }
  return log;
}

double random_policy(Environment& env, std::uint64_t seed) {
  RandomPolicy p(seed ^ 0x9e3779b97f4a7c15ULL);
  return run_episode(env, std::ref(p), seed).episode_return;
}

// --------------------------------------------------------------- exact oracle

void TinyScenario::validate() const {
  scenario.validate();
  if (scenario.network.node_count() > 3) {
    throw ConfigError("oracle scenarios are limited to 3 network nodes");
  }
  if (scenario.microgrids.empty() || scenario.microgrids.size() > 2) {
    throw ConfigError("oracle scenarios need 1 or 2 microgrids");
  }
  if (scenario.fleet.size() > 1) {
    throw ConfigError("oracle scenarios allow at most one mobile unit");
  }
  if (scenario.horizon > 6) {
    throw ConfigError("oracle scenarios are limited to 6 steps");
  }
  if (settings.dg_levels < 2 || settings.dg_levels > 5) {
    throw ConfigError("oracle generator levels must be between 2 and 5");
  }
  for (const auto& mg : scenario.microgrids) {
    if (mg.forecast_error_std != 0.0) {
      throw ConfigError("oracle scenarios require zero forecast error");
    }
  }
}

namespace {

long long lattice_round(double x) { return std::llround(x * 1e6); }

std::vector<Action> enumerate_actions(const Environment& env, const OracleSettings& settings) {
  const auto& sc = env.scenario();
  std::vector<Action> out;
  std::vector<std::vector<double>> dg_levels;
  for (const auto& mg : sc.microgrids) {
    std::vector<double> levels;
    for (int k = 0; k < settings.dg_levels; ++k) {
      levels.push_back(mg.dg_max_kw * k / (settings.dg_levels - 1));
    }
    dg_levels.push_back(levels);
  }
  // Mixed-radix enumeration over (destination, power) per unit and level per microgrid.
  std::vector<int> radix;
  for (std::size_t u = 0; u < sc.fleet.size(); ++u) {
    radix.push_back(static_cast<int>(env.category_count()));
    radix.push_back(3);
  }
  for (const auto& l : dg_levels) {
    radix.push_back(static_cast<int>(l.size()));
  }
  std::vector<int> digit(radix.size(), 0);
  while (true) {
    Action a;
    std::size_t pos = 0;
    for (std::size_t u = 0; u < sc.fleet.size(); ++u) {
      const auto& p = sc.fleet[u];
      a.destination.push_back(digit[pos++]);
      const double levels[3] = {-p.max_charge_kw, 0.0, p.max_discharge_kw};
      a.mess_power_kw.push_back(levels[digit[pos++]]);
    }
    for (std::size_t m = 0; m < dg_levels.size(); ++m) {
      a.dg_power_kw.push_back(dg_levels[m][static_cast<std::size_t>(digit[pos++])]);
    }
    out.push_back(std::move(a));
    std::size_t i = 0;
    while (i < radix.size() && ++digit[i] == radix[i]) {
      digit[i] = 0;
      ++i;
    }
    if (i == radix.size()) {
      break;
    }
  }
  return out;
}

double snap(double x, double origin, double step, double lo, double hi) {
  if (!(step > 0.0)) {
    return x;
  }
  const double k = std::round((x - origin) / step);
  return std::clamp(origin + k * step, lo, hi);
}

}  // namespace

std::string oracle_state_key(const EnvState& state) {
  std::ostringstream os;
  os << "t" << state.t;
  for (const auto& u : state.fleet) {
    if (const auto* at = std::get_if<AtNode>(&u.location)) {
      os << "|n" << at->node;
    } else {
      const auto& e = std::get<OnEdge>(u.location);
      os << "|e" << e.from << ":" << lattice_round(e.dist_from) << ":" << e.to;
    }
    os << ",s" << lattice_round(u.soc);
  }
  for (const auto& g : state.grid) {
    os << "|E" << lattice_round(g.dg_energy_kwh);
  }
  return os.str();
}

Action OracleResult::policy(const Environment& env) const {
  const auto it = index.find(oracle_state_key(env.state()));
  if (it == index.end()) {
    throw std::out_of_range("state outside the oracle lattice: " + oracle_state_key(env.state()));
  }
  return best_action[it->second];
}

double OracleResult::value_of(const std::string& key) const {
  return values.at(index.at(key));
}

OracleResult value_iteration(const TinyScenario& tiny) {
  tiny.validate();
  Environment env(tiny.scenario);
  const auto& sc = env.scenario();
  env.reset(0);

  OracleResult res;
  res.actions = enumerate_actions(env, tiny.settings);
  res.action_count = res.actions.size();

  // Lattice spacing induced by the discrete action levels.
  std::vector<double> fuel_step;
  for (const auto& mg : sc.microgrids) {
    fuel_step.push_back(mg.dg_max_kw * sc.dt_h / (tiny.settings.dg_levels - 1));
  }
  // Charging scaled back to a generator level moves SOC by a multiple of the
  // level spacing, so that spacing refines the SOC lattice as well.
  std::vector<double> soc_step, soc_origin;
  for (const auto& p : sc.fleet) {
    double step = std::min(p.eta_charge * p.max_charge_kw * sc.dt_h / p.capacity_kwh,
                           p.max_discharge_kw * sc.dt_h / (p.eta_discharge * p.capacity_kwh));
    for (double f : fuel_step) {
      step = std::min(step, p.eta_charge * f / p.capacity_kwh);
    }
    soc_step.push_back(step);
    soc_origin.push_back(p.initial_soc);
  }
  auto snap_state = [&](EnvState& s) {
    for (std::size_t u = 0; u < s.fleet.size(); ++u) {
      const auto& p = sc.fleet[u];
      const double v = snap(s.fleet[u].soc, soc_origin[u], soc_step[u], p.soc_min, p.soc_max);
      res.max_snap_error = std::max(res.max_snap_error, std::abs(v - s.fleet[u].soc));
      s.fleet[u].soc = v;
    }
    for (std::size_t m = 0; m < s.grid.size(); ++m) {
      const auto& mg = sc.microgrids[m];
      const double v = snap(s.grid[m].dg_energy_kwh, mg.dg_energy_max_kwh, fuel_step[m],
                            mg.dg_energy_min_kwh, mg.dg_energy_max_kwh);
      res.max_snap_error = std::max(res.max_snap_error, std::abs(v - s.grid[m].dg_energy_kwh));
      s.grid[m].dg_energy_kwh = v;
    }
  };

  struct Edge {
    double reward;
    std::ptrdiff_t next;  // -1 when terminal
  };
  std::vector<EnvState> states;
  std::vector<std::vector<Edge>> edges;
  auto intern = [&](EnvState s) -> std::size_t {
    const std::string key = oracle_state_key(s);
    auto it = res.index.find(key);
    if (it != res.index.end()) {
      return it->second;
    }
    if (states.size() >= kMaxOracleStates) {
      throw ConfigError("oracle state space exceeds " + std::to_string(kMaxOracleStates) +
                        " states");
    }
    res.index.emplace(key, states.size());
    res.keys.push_back(key);
    states.push_back(std::move(s));
    return states.size() - 1;
  };

  EnvState root = env.state();
  snap_state(root);
  intern(root);
  for (std::size_t i = 0; i < states.size(); ++i) {
    edges.emplace_back();
    if (states[i].done) {
      continue;
    }
    const EnvState here = states[i];
    edges[i].reserve(res.actions.size());
    for (const auto& a : res.actions) {
      env.restore(here);
      const StepResult r = env.step(a);
      EnvState next = env.state();
      std::ptrdiff_t idx = -1;
      if (!r.done) {
        snap_state(next);
        idx = static_cast<std::ptrdiff_t>(intern(std::move(next)));
      }
      edges[i].push_back({r.reward, idx});
    }
  }
  res.state_count = states.size();

  std::vector<double> value(states.size(), 0.0);
  std::vector<std::size_t> choice(states.size(), 0);
  do {
    res.residual = 0.0;
    std::vector<double> updated(states.size(), 0.0);
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (edges[i].empty()) {
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < edges[i].size(); ++k) {
        const auto& e = edges[i][k];
        const double q = e.reward + (e.next >= 0 ? value[static_cast<std::size_t>(e.next)] : 0.0);
        if (q > best) {
          best = q;
          choice[i] = k;
        }
      }
      updated[i] = best;
      res.residual = std::max(res.residual, std::abs(best - value[i]));
    }
    value.swap(updated);
    ++res.sweeps;
  } while (res.residual >= 1e-9);

  res.values = value;
  res.optimal_value = value.front();
  for (std::size_t i = 0; i < states.size(); ++i) {
    res.best_action.push_back(edges[i].empty() ? idle_action(env) : res.actions[choice[i]]);
  }
  return res;
}

}  // namespace mesr
