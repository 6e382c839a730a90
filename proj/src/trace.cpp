#include "mesr/trace.hpp"

#include <cmath>

namespace mesr {

using nlohmann::json;

namespace {

json location_json(const Location& loc) {
  if (const auto* at = std::get_if<AtNode>(&loc)) {
    return {{"node", at->node}};
  }
  const auto& e = std::get<OnEdge>(loc);
  return {{"from", e.from}, {"dist_from", e.dist_from}, {"to", e.to}, {"dist_to", e.dist_to}};
}

}  // namespace

json action_to_json(const Action& a) {
  return {{"destination", a.destination},
          {"mess_power_kw", a.mess_power_kw},
          {"dg_power_kw", a.dg_power_kw}};
}

Action action_from_json(const json& j) {
  Action a;
  a.destination = j.at("destination").get<std::vector<int>>();
  a.mess_power_kw = j.at("mess_power_kw").get<std::vector<double>>();
  a.dg_power_kw = j.at("dg_power_kw").get<std::vector<double>>();
  return a;
}

std::vector<TripSegment> trip_chain(const Environment& env, const EpisodeLog& log,
                                    std::size_t unit) {
  const auto& net = env.scenario().network;
  const double dt = env.scenario().dt_h;
  std::vector<TripSegment> chain;
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const MessStep& m = log.steps[t].info.mess.at(unit);
    const auto kind = m.moved ? TripSegment::Kind::transit : TripSegment::Kind::stay;
    const bool extend = !chain.empty() && chain.back().kind == kind &&
                        (kind == TripSegment::Kind::transit || chain.back().to == m.before);
    if (!extend) {
      TripSegment seg;
      seg.kind = kind;
      seg.start_t = static_cast<int>(t);
      seg.from = m.before;
      if (kind == TripSegment::Kind::stay) {
        if (const auto* at = std::get_if<AtNode>(&m.before)) {
          seg.microgrid = net.microgrid_at(at->node);
        }
      }
      chain.push_back(seg);
    }
    auto& seg = chain.back();
    seg.end_t = static_cast<int>(t) + 1;
    seg.to = m.after;
    if (m.power_kw < 0.0) {
      seg.charged_kwh += -m.power_kw * dt;
    } else {
      seg.discharged_kwh += m.power_kw * dt;
    }
  }
  return chain;
}

json make_trace(const Environment& env, const EpisodeLog& log, std::uint64_t seed,
                const std::string& policy_name) {
  const auto& sc = env.scenario();
  json meta;
  meta["policy"] = policy_name;
  meta["seed"] = seed;
  meta["horizon"] = sc.horizon;
  meta["dt_h"] = sc.dt_h;
  meta["episode_return"] = log.episode_return;
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < env.category_count(); ++k) {
    labels.push_back(env.category_label(static_cast<int>(k)));
  }
  meta["categories"] = labels;
  std::vector<int> unit_ids, mg_ids;
  for (const auto& u : sc.fleet) {
    unit_ids.push_back(u.id);
  }
  for (const auto& m : sc.microgrids) {
    mg_ids.push_back(m.id);
  }
  meta["units"] = unit_ids;
  meta["microgrids"] = mg_ids;

  json steps = json::array();
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const auto& r = log.steps[t];
    const auto& b = r.info.reward;
    const auto& v = r.info.violations;
    json step;
    step["t"] = r.info.t;
    step["reward"] = r.reward;
    step["breakdown"] = {{"restoration_value", b.restoration_value},
                         {"gen_cost", b.gen_cost},
                         {"battery_cost", b.battery_cost},
                         {"transport_cost", b.transport_cost},
                         {"penalty", b.penalty},
                         {"interruption_cost", b.interruption_cost}};
    step["violations"] = {{"mess_clip_kwh", v.mess_clip_kwh},
                          {"dg_clip_kwh", v.dg_clip_kwh},
                          {"charge_shortfall_kwh", v.charge_shortfall_kwh},
                          {"spill_kwh", v.spill_kwh},
                          {"depot_return_kwh", v.depot_return_kwh}};
    json units = json::array();
    for (std::size_t u = 0; u < r.info.mess.size(); ++u) {
      const auto& m = r.info.mess[u];
      json ju = {{"id", sc.fleet[u].id},
                 {"location", location_json(m.after)},
                 {"location_before", location_json(m.before)},
                 {"kappa", env.category_label(m.destination_category)},
                 {"destination_node", m.destination},
                 {"requested_kw", m.requested_kw},
                 {"power_kw", m.power_kw},
                 {"soc_before", m.soc_before},
                 {"soc", m.soc_after},
                 {"moved", m.moved}};
      ju["parked_microgrid"] = m.parked_microgrid ? json(*m.parked_microgrid) : json(nullptr);
      units.push_back(std::move(ju));
    }
    step["mess"] = std::move(units);
    json grids = json::array();
    for (std::size_t k = 0; k < r.info.microgrids.size(); ++k) {
      const auto& g = r.info.microgrids[k];
      grids.push_back({{"id", sc.microgrids[k].id},
                       {"dg_requested_kw", g.dg_requested_kw},
                       {"dg_kw", g.dg_kw},
                       {"load_kw", g.load_kw},
                       {"supply_kw", g.supply_kw},
                       {"restored_kw", g.restored_kw},
                       {"reactive_kvar", g.reactive_kvar},
                       {"spill_kw", g.spill_kw},
                       {"energy_kwh", g.energy_after_kwh}});
    }
    step["microgrids"] = std::move(grids);
    step["action"] = action_to_json(log.actions[t]);
    steps.push_back(std::move(step));
  }

  json chains = json::array();
  for (std::size_t u = 0; u < sc.fleet.size(); ++u) {
    json segs = json::array();
    for (const auto& s : trip_chain(env, log, u)) {
      json js = {{"kind", s.kind == TripSegment::Kind::stay ? "stay" : "transit"},
                 {"start_t", s.start_t},
                 {"end_t", s.end_t},
                 {"from", location_json(s.from)},
                 {"to", location_json(s.to)},
                 {"charged_kwh", s.charged_kwh},
                 {"discharged_kwh", s.discharged_kwh}};
      js["microgrid"] = s.microgrid ? json(*s.microgrid) : json(nullptr);
      segs.push_back(std::move(js));
    }
    chains.push_back({{"id", sc.fleet[u].id}, {"segments", std::move(segs)}});
  }
  return {{"meta", std::move(meta)}, {"steps", std::move(steps)}, {"trip_chains", std::move(chains)}};
}

std::vector<TransportCycle> find_transport_cycles(const json& trace) {
  std::vector<TransportCycle> cycles;
  for (const auto& chain : trace.at("trip_chains")) {
    const int id = chain.at("id").get<int>();
    std::optional<std::pair<int, int>> charged;  // microgrid, last charging step
    bool travelled = false;
    for (const auto& seg : chain.at("segments")) {
      const std::string kind = seg.at("kind").get<std::string>();
      if (kind == "transit") {
        travelled = charged.has_value();
        continue;
      }
      if (seg.at("microgrid").is_null()) {
        continue;
      }
      const int mg = seg.at("microgrid").get<int>();
      const int start = seg.at("start_t").get<int>();
      const int end = seg.at("end_t").get<int>();
      if (charged && travelled && mg != charged->first &&
          seg.at("discharged_kwh").get<double>() > 0.0) {
        cycles.push_back({id, charged->first, mg, charged->second, start});
      }
      if (seg.at("charged_kwh").get<double>() > 0.0) {
        charged = std::make_pair(mg, end - 1);
        travelled = false;
      }
    }
  }
  return cycles;
}

ReplayCheck replay_trace(Environment& env, const json& trace) {
  ReplayCheck check;
  env.reset(trace.at("meta").at("seed").get<std::uint64_t>());
  for (const auto& step : trace.at("steps")) {
    const StepResult r = env.step(action_from_json(step.at("action")));
    const double logged = step.at("reward").get<double>();
    ++check.steps;
    if (r.reward != logged) {
      ++check.mismatches;
      check.max_abs_diff = std::max(check.max_abs_diff, std::abs(r.reward - logged));
    }
  }
  if (!env.state().done) {
    ++check.mismatches;
  }
  return check;
}

}  // namespace mesr
