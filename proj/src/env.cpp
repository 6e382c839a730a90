#include "mesr/env.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace mesr {

void Scenario::validate() const {
  if (horizon < 0) {
    throw ConfigError("horizon must be non-negative");
  }
  if (!(dt_h > 0.0)) {
    throw ConfigError("interval length must be positive");
  }
  if (horizon > 0 && static_cast<int>(std::floor((horizon - 1) * dt_h + 1e-9)) >= kHoursPerDay) {
    throw ConfigError("horizon exceeds the 24-hour load profile");
  }
  std::set<int> seen;
  for (const auto& mg : microgrids) {
    try {
      mg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!seen.insert(mg.id).second) {
      throw ConfigError("duplicate microgrid id " + std::to_string(mg.id));
    }
    if (network.microgrids().count(mg.id) == 0) {
      throw ConfigError("microgrid " + std::to_string(mg.id) + " has no node in the network");
    }
  }
  for (const auto& [id, node] : network.microgrids()) {
    if (seen.count(id) == 0) {
      throw ConfigError("network places microgrid " + std::to_string(id) + " at node " +
                        std::to_string(node) + " but no parameters are given");
    }
  }
  std::set<int> units;
  for (const auto& mess : fleet) {
    try {
      mess.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!units.insert(mess.id).second) {
      throw ConfigError("duplicate mess id " + std::to_string(mess.id));
    }
    if (network.depots().count(mess.home_depot) == 0) {
      throw ConfigError("mess " + std::to_string(mess.id) + " refers to unknown depot " +
                        std::to_string(mess.home_depot));
    }
  }
  if (!(costs.battery_per_kwh >= 0.0) || !(costs.transport_per_h >= 0.0)) {
    throw ConfigError("cost coefficients must be non-negative");
  }
  if (!(reward.objective >= 0.0) || !(reward.penalty >= 0.0)) {
    throw ConfigError("reward scales must be non-negative");
  }
  if (!(depot_return_penalty_per_km >= 0.0)) {
    throw ConfigError("depot return penalty must be non-negative");
  }
}

RewardBreakdown reward_terms(const Scenario& scenario, std::span<const MicrogridStep> microgrids,
                             std::span<const MessStep> mess, const Violations& violations) {
  RewardBreakdown out;
  const double dt = scenario.dt_h;
  for (std::size_t m = 0; m < microgrids.size(); ++m) {
    const auto& params = scenario.microgrids[m];
    const auto& s = microgrids[m];
    out.restoration_value += params.interruption_cost * s.restored_kw * dt;
    out.gen_cost += params.generation_cost * s.dg_kw * dt;
    out.interruption_cost += params.interruption_cost * (s.load_kw - s.restored_kw) * dt;
  }
  for (const auto& u : mess) {
    out.battery_cost += scenario.costs.battery_per_kwh * std::abs(u.power_kw) * dt;
    if (u.moved) {
      out.transport_cost += scenario.costs.transport_per_h * dt;
    }
  }
  out.penalty = violations.total();
  out.reward = scenario.reward.objective * out.objective() - scenario.reward.penalty * out.penalty;
  return out;
}

Environment::Environment(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  for (const auto& mg : scenario_.microgrids) {
    category_nodes_.push_back(scenario_.network.microgrid_node(mg.id));
    category_labels_.push_back("MG" + std::to_string(mg.id));
  }
  for (const auto& [id, node] : scenario_.network.depots()) {
    category_nodes_.push_back(node);
    category_labels_.push_back("D" + std::to_string(id));
  }
  const double scale = scenario_.network.diameter() + scenario_.network.max_edge_weight();
  distance_scale_ = scale > 0.0 ? scale : 1.0;
}

int Environment::hour_of(int t) const {
  return static_cast<int>(std::floor(t * scenario_.dt_h + 1e-9)) % kHoursPerDay;
}

NodeId Environment::category_node(int category) const {
  if (category < 0 || static_cast<std::size_t>(category) >= category_nodes_.size()) {
    throw std::out_of_range("destination category " + std::to_string(category));
  }
  return category_nodes_[static_cast<std::size_t>(category)];
}

std::string Environment::category_label(int category) const {
  category_node(category);
  return category_labels_[static_cast<std::size_t>(category)];
}

std::optional<int> Environment::category_at(NodeId node) const {
  for (std::size_t k = 0; k < category_nodes_.size(); ++k) {
    if (category_nodes_[k] == node) {
      return static_cast<int>(k);
    }
  }
  return std::nullopt;
}

int Environment::hold_category(std::size_t unit) const {
  const auto& s = state_.fleet.at(unit);
  if (const auto* at = std::get_if<AtNode>(&s.location)) {
    if (auto k = category_at(at->node)) {
      return *k;
    }
  }
  if (auto k = category_at(s.destination)) {
    return *k;
  }
  return 0;
}

std::size_t Environment::action_dim() const {
  return scenario_.fleet.size() * (category_nodes_.size() + 1) + scenario_.microgrids.size();
}

std::size_t Environment::observation_dim() const {
  return 1 + 2 * scenario_.microgrids.size() +
         scenario_.fleet.size() * (1 + category_nodes_.size());
}

Observation Environment::reset(std::uint64_t seed) {
  state_ = EnvState{};
  state_.rng.seed(seed);
  state_.t = 0;
  state_.done = scenario_.horizon == 0;
  for (const auto& mess : scenario_.fleet) {
    const NodeId home = scenario_.network.depot_node(mess.home_depot);
    state_.fleet.push_back(MessState{AtNode{home}, home, mess.initial_soc});
  }
  for (const auto& mg : scenario_.microgrids) {
    MicrogridState s;
    s.dg_energy_kwh = mg.dg_energy_max_kwh;
    state_.grid.push_back(s);
  }
  if (!state_.done) {
    for (std::size_t m = 0; m < scenario_.microgrids.size(); ++m) {
      state_.grid[m].load_kw = sample_load(scenario_.microgrids[m], hour_of(0), state_.rng);
    }
  }
  return observe();
}

void Environment::restore(EnvState state) {
  if (state.fleet.size() != scenario_.fleet.size() ||
      state.grid.size() != scenario_.microgrids.size()) {
    throw std::invalid_argument("state does not match scenario dimensions");
  }
  for (const auto& u : state.fleet) {
    validate_location(scenario_.network, u.location);
  }
  state_ = std::move(state);
}

Observation Environment::observe() const {
  Observation obs;
  obs.reserve(observation_dim());
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  obs.push_back(scenario_.horizon > 0 ? unit(static_cast<double>(state_.t) / scenario_.horizon)
                                      : 0.0);
  for (std::size_t m = 0; m < scenario_.microgrids.size(); ++m) {
    const auto& p = scenario_.microgrids[m];
    const auto& s = state_.grid[m];
    obs.push_back(p.peak_load_kw > 0.0 ? unit(s.load_kw / p.peak_load_kw) : 0.0);
    obs.push_back(unit((s.dg_energy_kwh - p.dg_energy_min_kwh) /
                       (p.dg_energy_max_kwh - p.dg_energy_min_kwh)));
  }
  for (const auto& u : state_.fleet) {
    obs.push_back(unit(u.soc));
    for (NodeId node : category_nodes_) {
      obs.push_back(unit(distance_to(scenario_.network, u.location, node) / distance_scale_));
    }
  }
  return obs;
}

Action Environment::decode_action(std::span<const double> raw) const {
  if (raw.size() != action_dim()) {
    throw std::invalid_argument("action vector has " + std::to_string(raw.size()) +
                                " components, expected " + std::to_string(action_dim()));
  }
  auto at = [&](std::size_t i) { return std::clamp(raw[i], -1.0, 1.0); };
  const std::size_t k = category_nodes_.size();
  const std::size_t n_units = scenario_.fleet.size();
  Action a;
  std::size_t pos = 0;
  for (std::size_t u = 0; u < n_units; ++u) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (raw[pos + c] > raw[pos + best]) {
        best = c;
      }
    }
    a.destination.push_back(static_cast<int>(best));
    pos += k;
  }
  for (std::size_t u = 0; u < n_units; ++u) {
    const auto& p = scenario_.fleet[u];
    const double x = at(pos++);
    a.mess_power_kw.push_back(-p.max_charge_kw +
                              0.5 * (x + 1.0) * (p.max_charge_kw + p.max_discharge_kw));
  }
  for (const auto& mg : scenario_.microgrids) {
    const double x = at(pos++);
    a.dg_power_kw.push_back(0.5 * (x + 1.0) * mg.dg_max_kw);
  }
  return a;
}

StepResult Environment::step(const Action& action) {
  if (state_.done) {
    throw std::logic_error("step called on a finished episode");
  }
  const std::size_t n_units = scenario_.fleet.size();
  const std::size_t n_mg = scenario_.microgrids.size();
  if (action.destination.size() != n_units || action.mess_power_kw.size() != n_units ||
      action.dg_power_kw.size() != n_mg) {
    throw std::invalid_argument("action dimensions do not match the scenario");
  }
  const double dt = scenario_.dt_h;
  const auto& net = scenario_.network;

  StepInfo info;
  info.t = state_.t;
  info.mess.resize(n_units);
  info.microgrids.resize(n_mg);
  std::vector<std::optional<std::size_t>> parked(n_units);

  // (1) movement and stay indicators
  for (std::size_t u = 0; u < n_units; ++u) {
    const auto& params = scenario_.fleet[u];
    auto& s = info.mess[u];
    const auto& cur = state_.fleet[u];
    s.destination_category = action.destination[u];
    s.destination = category_node(action.destination[u]);
    s.before = cur.location;
    s.after = advance(net, cur.location, s.destination, params.speed_kmh, dt);
    s.moved = !(s.before == s.after);
    for (std::size_t m = 0; m < n_mg; ++m) {
      if (at_microgrid(net, s.before, s.after, scenario_.microgrids[m].id)) {
        parked[u] = m;
        s.parked_microgrid = scenario_.microgrids[m].id;
      }
    }
    s.soc_before = cur.soc;
    // (2) projection of the exchange power
    s.requested_kw = action.mess_power_kw[u];
    s.feasible = feasible_power_range(params, cur.soc, s.parked_microgrid.has_value(), dt);
    s.power_kw = s.feasible.clamp(s.requested_kw);
    info.violations.mess_clip_kwh += std::abs(s.requested_kw - s.power_kw) * dt;
  }

  for (std::size_t m = 0; m < n_mg; ++m) {
    const auto& params = scenario_.microgrids[m];
    auto& g = info.microgrids[m];
    g.energy_before_kwh = state_.grid[m].dg_energy_kwh;
    g.load_kw = state_.grid[m].load_kw;
    g.dg_requested_kw = action.dg_power_kw[m];
    const PowerRange range = dg_feasible_range(params, state_.grid[m], dt);
    g.dg_max_kw = range.max_kw;
    g.dg_kw = range.clamp(g.dg_requested_kw);
    info.violations.dg_clip_kwh += std::abs(g.dg_requested_kw - g.dg_kw) * dt;

    // (3) net supply; charging beyond what the bus can deliver is scaled back
    double discharge = 0.0;
    double charge = 0.0;
    for (std::size_t u = 0; u < n_units; ++u) {
      if (parked[u] == m) {
        const double p = info.mess[u].power_kw;
        (p >= 0.0 ? discharge : charge) += std::abs(p);
      }
    }
    const double available = g.dg_kw + discharge;
    if (charge > available) {
      const double scale = charge > 0.0 ? available / charge : 0.0;
      for (std::size_t u = 0; u < n_units; ++u) {
        if (parked[u] == m && info.mess[u].power_kw < 0.0) {
          info.mess[u].power_kw *= scale;
        }
      }
      info.violations.charge_shortfall_kwh += (charge - available) * dt;
      g.supply_kw = 0.0;
    } else {
      g.supply_kw = available - charge;
    }

    // (4) restoration
    const Restoration r = mesr::restore(params, g.supply_kw, g.load_kw);
    g.restored_kw = r.active_kw;
    g.reactive_kvar = r.reactive_kvar;
    g.spill_kw = r.spill_kw;
    info.violations.spill_kwh += r.spill_kw * dt;
  }

  // (5) state transition
  for (std::size_t u = 0; u < n_units; ++u) {
    auto& s = info.mess[u];
    s.soc_after = soc_update(scenario_.fleet[u], s.soc_before, s.power_kw, dt);
    state_.fleet[u].location = s.after;
    state_.fleet[u].destination = s.destination;
    state_.fleet[u].soc = s.soc_after;
  }
  for (std::size_t m = 0; m < n_mg; ++m) {
    const auto& params = scenario_.microgrids[m];
    auto& g = info.microgrids[m];
    double e = g.energy_before_kwh - g.dg_kw * dt;
    if (e < params.dg_energy_min_kwh && e > params.dg_energy_min_kwh - 1e-9) {
      e = params.dg_energy_min_kwh;
    }
    g.energy_after_kwh = e;
    state_.grid[m].dg_energy_kwh = e;
  }
  state_.t += 1;
  state_.done = state_.t >= scenario_.horizon;
  if (!state_.done) {
    for (std::size_t m = 0; m < n_mg; ++m) {
      state_.grid[m].load_kw = sample_load(scenario_.microgrids[m], hour_of(state_.t), state_.rng);
    }
  } else if (scenario_.return_to_depot) {
    for (std::size_t u = 0; u < n_units; ++u) {
      const NodeId home = net.depot_node(scenario_.fleet[u].home_depot);
      info.violations.depot_return_kwh += scenario_.depot_return_penalty_per_km *
                                          distance_to(net, state_.fleet[u].location, home);
    }
  }

  // (6) reward
  info.reward = reward_terms(scenario_, info.microgrids, info.mess, info.violations);

  StepResult out;
  out.observation = observe();
  out.reward = info.reward.reward;
  out.done = state_.done;
  out.info = std::move(info);
  return out;
}

std::string serialize_state(const EnvState& state) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "t " << state.t << " done " << state.done << "\n";
  os << "fleet " << state.fleet.size() << "\n";
  for (const auto& u : state.fleet) {
    if (const auto* at = std::get_if<AtNode>(&u.location)) {
      os << "node " << at->node;
    } else {
      const auto& e = std::get<OnEdge>(u.location);
      os << "edge " << e.from << " " << e.dist_from << " " << e.to << " " << e.dist_to;
    }
    os << " dest " << u.destination << " soc " << u.soc << "\n";
  }
  os << "grid " << state.grid.size() << "\n";
  for (const auto& g : state.grid) {
    os << g.dg_energy_kwh << " " << g.load_kw << "\n";
  }
  os << "rng " << state.rng << "\n";
  return os.str();
}

EnvState deserialize_state(const std::string& text) {
  std::istringstream is(text);
  EnvState s;
  std::string tag;
  std::size_t n = 0;
  auto expect = [&](const char* what) {
    if (!(is >> tag) || tag != what) {
      throw std::invalid_argument(std::string("malformed state: expected '") + what + "'");
    }
  };
  expect("t");
  is >> s.t;
  expect("done");
  is >> s.done;
  expect("fleet");
  is >> n;
  for (std::size_t i = 0; i < n; ++i) {
    MessState u;
    is >> tag;
    if (tag == "node") {
      AtNode at;
      is >> at.node;
      u.location = at;
    } else if (tag == "edge") {
      OnEdge e;
      is >> e.from >> e.dist_from >> e.to >> e.dist_to;
      u.location = e;
    } else {
      throw std::invalid_argument("malformed state: bad location tag");
    }
    expect("dest");
    is >> u.destination;
    expect("soc");
    is >> u.soc;
    s.fleet.push_back(u);
  }
  expect("grid");
  is >> n;
  for (std::size_t i = 0; i < n; ++i) {
    MicrogridState g;
    is >> g.dg_energy_kwh >> g.load_kw;
    s.grid.push_back(g);
  }
  expect("rng");
  is >> s.rng;
  if (!is) {
    throw std::invalid_argument("malformed state: truncated");
  }
  return s;
}

}  // namespace mesr
