#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mesr {

using NodeId = int;

/// Tolerance (km) used when deciding that a vehicle sits exactly on a node.
inline constexpr double kDistanceTolerance = 1e-9;

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AtNode {
  NodeId node{};
  friend bool operator==(const AtNode&, const AtNode&) = default;
};

/// A position strictly inside a road segment. `from`/`to` give the direction
/// of travel at the moment the position was produced, the two distances sum
/// to the edge length.
struct OnEdge {
  NodeId from{};
  double dist_from{};
  NodeId to{};
  double dist_to{};
  friend bool operator==(const OnEdge&, const OnEdge&) = default;
};

using Location = std::variant<AtNode, OnEdge>;

std::string to_string(const Location& loc);

struct Neighbor {
  NodeId node;
  double weight;
};

/// Undirected weighted road graph with microgrid and depot placements.
class TransportNetwork {
 public:
  void add_node(NodeId id);
  void add_edge(NodeId a, NodeId b, double weight_km);
  void add_microgrid(int microgrid_id, NodeId node);
  void add_depot(int depot_id, NodeId node);

  /// Checks every invariant (positive weights, connectivity, placements) and
  /// builds the all-pairs distance table. Throws NetworkError.
  void finalize();

  bool has_node(NodeId id) const { return index_.count(id) != 0; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  std::optional<double> edge_weight(NodeId a, NodeId b) const;
  /// Neighbors sorted by ascending node id.
  const std::vector<Neighbor>& neighbors(NodeId id) const;

  const std::map<int, NodeId>& microgrids() const { return microgrids_; }
  const std::map<int, NodeId>& depots() const { return depots_; }
  NodeId microgrid_node(int microgrid_id) const;
  NodeId depot_node(int depot_id) const;
  std::optional<int> microgrid_at(NodeId node) const;

  /// Node-to-node shortest distance from the precomputed table.
  double distance(NodeId a, NodeId b) const;
  /// Largest finite node-to-node distance.
  double diameter() const { return diameter_; }
  double max_edge_weight() const { return max_edge_weight_; }

 private:
  std::size_t index_of(NodeId id) const;

  std::vector<NodeId> nodes_;
  std::map<NodeId, std::size_t> index_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::size_t edge_count_ = 0;
  std::map<int, NodeId> microgrids_;
  std::map<int, NodeId> depots_;
  std::vector<std::vector<double>> distances_;
  double diameter_ = 0.0;
  double max_edge_weight_ = 0.0;
  bool finalized_ = false;
};

TransportNetwork parse_network(std::istream& in, const std::string& source = "<stream>");
TransportNetwork load_network(const std::filesystem::path& path);

struct Route {
  double distance = 0.0;
  /// Nodes visited after leaving the start location, ending at the target.
  /// For a start at node x this begins with x itself.
  std::vector<NodeId> path;
};

/// Throws NetworkError if `loc` does not describe a point of `net`.
void validate_location(const TransportNetwork& net, const Location& loc);

/// Dijkstra from the target outwards; equal-length alternatives resolve to the
/// smallest next node id at every hop.
Route shortest_path(const TransportNetwork& net, const Location& from, NodeId to);

/// Distance from an arbitrary location to a node, using the distance table.
double distance_to(const TransportNetwork& net, const Location& from, NodeId to);

/// Moves a vehicle for one interval along the shortest path toward `dest`.
Location advance(const TransportNetwork& net, const Location& loc, NodeId dest,
                 double speed_kmh, double dt_h);

/// 1 iff the vehicle stays parked at the node of microgrid `microgrid_id`
/// for the whole interval.
bool at_microgrid(const TransportNetwork& net, const Location& before,
                  const Location& after, int microgrid_id);

}  // namespace mesr
