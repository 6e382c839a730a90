#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesr/baselines.hpp"
#include "mesr/env.hpp"

namespace mesr {

/// A maximal run of one unit either parked at a node or on the road.
struct TripSegment {
  enum class Kind { stay, transit };
  Kind kind = Kind::stay;
  int start_t = 0;
  int end_t = 0;  ///< exclusive
  Location from = AtNode{};
  Location to = AtNode{};
  std::optional<int> microgrid;  ///< stays only, when the node hosts one
  double charged_kwh = 0.0;      ///< drawn from the grid
  double discharged_kwh = 0.0;   ///< delivered to the grid
};

std::vector<TripSegment> trip_chain(const Environment& env, const EpisodeLog& log,
                                    std::size_t unit);

/// Energy drawn at one microgrid, carried over the road and delivered at another.
struct TransportCycle {
  int unit_id = 0;
  int charge_microgrid = 0;
  int discharge_microgrid = 0;
  int charge_t = 0;
  int discharge_t = 0;
};

/// Stays with charging, followed by a transit, followed by a discharging stay
/// at a different microgrid.
std::vector<TransportCycle> find_transport_cycles(const nlohmann::json& trace);

nlohmann::json make_trace(const Environment& env, const EpisodeLog& log, std::uint64_t seed,
                          const std::string& policy_name);

struct ReplayCheck {
  std::size_t steps = 0;
  std::size_t mismatches = 0;
  double max_abs_diff = 0.0;
  bool identical() const { return mismatches == 0; }
};

/// Feeds the logged requested actions back through `env` from the logged
/// seed and compares every reward bit for bit.
ReplayCheck replay_trace(Environment& env, const nlohmann::json& trace);

Action action_from_json(const nlohmann::json& j);
nlohmann::json action_to_json(const Action& a);

}  // namespace mesr
