#include "mesr/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

namespace mesr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string to_string(const Location& loc) {
  return std::visit(overloaded{
                        [](const AtNode& a) { return "node " + std::to_string(a.node); },
                        [](const OnEdge& e) {
                          std::ostringstream os;
                          os << "edge " << e.from << "(" << e.dist_from << ")-" << e.to << "("
                             << e.dist_to << ")";
                          return os.str();
                        },
                    },
                    loc);
}

void TransportNetwork::add_node(NodeId id) {
  if (index_.count(id) != 0) {
    return;
  }
  index_[id] = nodes_.size();
  nodes_.push_back(id);
  adjacency_.emplace_back();
  finalized_ = false;
}

void TransportNetwork::add_edge(NodeId a, NodeId b, double weight_km) {
  if (!has_node(a) || !has_node(b)) {
    throw NetworkError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                       " references an unknown node");
  }
  if (a == b) {
    throw NetworkError("self-loop on node " + std::to_string(a));
  }
  if (!(weight_km > 0.0) || !std::isfinite(weight_km)) {
    throw NetworkError("non-positive weight on edge " + std::to_string(a) + "-" +
                       std::to_string(b));
  }
  if (auto existing = edge_weight(a, b)) {
    if (*existing != weight_km) {
      throw NetworkError("conflicting weights for edge " + std::to_string(a) + "-" +
                         std::to_string(b));
    }
    return;
  }
  auto insert_sorted = [](std::vector<Neighbor>& list, Neighbor n) {
    auto it = std::lower_bound(list.begin(), list.end(), n.node,
                               [](const Neighbor& x, NodeId id) { return x.node < id; });
    list.insert(it, n);
  };
  insert_sorted(adjacency_[index_of(a)], {b, weight_km});
  insert_sorted(adjacency_[index_of(b)], {a, weight_km});
  ++edge_count_;
  max_edge_weight_ = std::max(max_edge_weight_, weight_km);
  finalized_ = false;
}

void TransportNetwork::add_microgrid(int microgrid_id, NodeId node) {
  if (!has_node(node)) {
    throw NetworkError("microgrid " + std::to_string(microgrid_id) + " placed at unknown node " +
                       std::to_string(node));
  }
  if (microgrids_.count(microgrid_id) != 0) {
    throw NetworkError("duplicate microgrid id " + std::to_string(microgrid_id));
  }
  if (microgrid_at(node)) {
    throw NetworkError("node " + std::to_string(node) + " already hosts a microgrid");
  }
  microgrids_[microgrid_id] = node;
}

void TransportNetwork::add_depot(int depot_id, NodeId node) {
  if (!has_node(node)) {
    throw NetworkError("depot " + std::to_string(depot_id) + " placed at unknown node " +
                       std::to_string(node));
  }
  if (depots_.count(depot_id) != 0) {
    throw NetworkError("duplicate depot id " + std::to_string(depot_id));
  }
  depots_[depot_id] = node;
}

void TransportNetwork::finalize() {
  if (nodes_.empty()) {
    throw NetworkError("network has no nodes");
  }
  const std::size_t n = nodes_.size();
  distances_.assign(n, std::vector<double>(n, kInf));
  using Entry = std::pair<double, std::size_t>;
  for (std::size_t src = 0; src < n; ++src) {
    auto& dist = distances_[src];
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
    dist[src] = 0.0;
    frontier.push({0.0, src});
    while (!frontier.empty()) {
      auto [d, u] = frontier.top();
      frontier.pop();
      if (d > dist[u]) {
        continue;
      }
      for (const auto& nb : adjacency_[u]) {
        const std::size_t v = index_.at(nb.node);
        const double cand = d + nb.weight;
        if (cand < dist[v]) {
          dist[v] = cand;
          frontier.push({cand, v});
        }
      }
    }
  }
  diameter_ = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(distances_[i][j])) {
        throw NetworkError("graph is disconnected: node " + std::to_string(nodes_[j]) +
                           " unreachable from node " + std::to_string(nodes_[i]));
      }
      diameter_ = std::max(diameter_, distances_[i][j]);
    }
  }
  finalized_ = true;
}

std::size_t TransportNetwork::index_of(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw NetworkError("unknown node " + std::to_string(id));
  }
  return it->second;
}

std::optional<double> TransportNetwork::edge_weight(NodeId a, NodeId b) const {
  if (!has_node(a) || !has_node(b)) {
    return std::nullopt;
  }
  const auto& list = adjacency_[index_of(a)];
  auto it = std::lower_bound(list.begin(), list.end(), b,
                             [](const Neighbor& x, NodeId id) { return x.node < id; });
  if (it != list.end() && it->node == b) {
    return it->weight;
  }
  return std::nullopt;
}

const std::vector<Neighbor>& TransportNetwork::neighbors(NodeId id) const {
  return adjacency_[index_of(id)];
}

NodeId TransportNetwork::microgrid_node(int microgrid_id) const {
  auto it = microgrids_.find(microgrid_id);
  if (it == microgrids_.end()) {
    throw NetworkError("unknown microgrid id " + std::to_string(microgrid_id));
  }
  return it->second;
}

NodeId TransportNetwork::depot_node(int depot_id) const {
  auto it = depots_.find(depot_id);
  if (it == depots_.end()) {
    throw NetworkError("unknown depot id " + std::to_string(depot_id));
  }
  return it->second;
}

std::optional<int> TransportNetwork::microgrid_at(NodeId node) const {
  for (const auto& [id, n] : microgrids_) {
    if (n == node) {
      return id;
    }
  }
  return std::nullopt;
}

double TransportNetwork::distance(NodeId a, NodeId b) const {
  if (!finalized_) {
    throw NetworkError("network used before finalize()");
  }
  return distances_[index_of(a)][index_of(b)];
}

TransportNetwork parse_network(std::istream& in, const std::string& source) {
  struct Record {
    int line;
    std::string kind;
    long long a;
    long long b;
    double w;
  };
  std::vector<Record> records;
  std::string raw;
  int line_no = 0;
  auto fail = [&](int line, const std::string& what) -> NetworkError {
    return NetworkError(source + ":" + std::to_string(line) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    std::istringstream ls(raw);
    std::string kind;
    if (!(ls >> kind)) {
      continue;
    }
    Record rec{line_no, kind, 0, 0, 0.0};
    bool ok = false;
    if (kind == "node") {
      ok = static_cast<bool>(ls >> rec.a);
    } else if (kind == "edge") {
      ok = static_cast<bool>(ls >> rec.a >> rec.b >> rec.w);
    } else if (kind == "microgrid" || kind == "depot") {
      ok = static_cast<bool>(ls >> rec.a >> rec.b);
    } else {
      throw fail(line_no, "unknown record type '" + kind + "'");
    }
    std::string extra;
    if (!ok || (ls >> extra)) {
      throw fail(line_no, "malformed '" + kind + "' record");
    }
    records.push_back(rec);
  }

  TransportNetwork net;
  for (const auto& r : records) {
    if (r.kind == "node") {
      if (net.has_node(static_cast<NodeId>(r.a))) {
        throw fail(r.line, "duplicate node " + std::to_string(r.a));
      }
      net.add_node(static_cast<NodeId>(r.a));
    }
  }
  for (const auto& r : records) {
    try {
      if (r.kind == "edge") {
        if (!(r.w > 0.0)) {
          throw NetworkError("non-positive weight");
        }
        net.add_edge(static_cast<NodeId>(r.a), static_cast<NodeId>(r.b), r.w);
      } else if (r.kind == "microgrid") {
        net.add_microgrid(static_cast<int>(r.a), static_cast<NodeId>(r.b));
      } else if (r.kind == "depot") {
        net.add_depot(static_cast<int>(r.a), static_cast<NodeId>(r.b));
      }
    } catch (const NetworkError& e) {
      throw fail(r.line, e.what());
    }
  }
  try {
    net.finalize();
  } catch (const NetworkError& e) {
    throw NetworkError(source + ": " + e.what());
  }
  return net;
}

TransportNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw NetworkError("cannot open network file " + path.string());
  }
  return parse_network(in, path.string());
}

void validate_location(const TransportNetwork& net, const Location& loc) {
  if (const auto* at = std::get_if<AtNode>(&loc)) {
    if (!net.has_node(at->node)) {
      throw NetworkError("location at unknown node " + std::to_string(at->node));
    }
    return;
  }
  const auto& e = std::get<OnEdge>(loc);
  auto w = net.edge_weight(e.from, e.to);
  if (!w) {
    throw NetworkError("location on a non-existent edge: " + to_string(loc));
  }
  if (e.dist_from < 0.0 || e.dist_to < 0.0 ||
      std::abs(e.dist_from + e.dist_to - *w) > kDistanceTolerance) {
    throw NetworkError("inconsistent on-edge offsets: " + to_string(loc));
  }
}

namespace {

// Distances from every node to `target`, plus the exit choice for the start.
struct Exit {
  NodeId node;
  double offset;
};

std::vector<Exit> exits_of(const Location& loc) {
  if (const auto* at = std::get_if<AtNode>(&loc)) {
    return {{at->node, 0.0}};
  }
  const auto& e = std::get<OnEdge>(loc);
  return {{e.from, e.dist_from}, {e.to, e.dist_to}};
}

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= kDistanceTolerance * std::max(1.0, std::abs(b));
}

}  // namespace

Route shortest_path(const TransportNetwork& net, const Location& from, NodeId to) {
  validate_location(net, from);
  if (!net.has_node(to)) {
    throw NetworkError("unknown target node " + std::to_string(to));
  }
  // The table holds single-source Dijkstra distances; the path is recovered
  // greedily by the smallest neighbor that stays on a shortest path.
  auto dist = [&](NodeId n) { return net.distance(n, to); };

  Route route;
  route.distance = kInf;
  NodeId first = 0;
  for (const auto& ex : exits_of(from)) {
    const double total = ex.offset + dist(ex.node);
    if (total < route.distance ||
        (total == route.distance && ex.node < first)) {
      route.distance = total;
      first = ex.node;
    }
  }
  if (!std::isfinite(route.distance)) {
    throw NetworkError("target node " + std::to_string(to) + " is unreachable");
  }
  route.path.push_back(first);
  NodeId cur = first;
  while (cur != to) {
    NodeId next = cur;
    for (const auto& nb : net.neighbors(cur)) {
      if (nearly_equal(nb.weight + dist(nb.node), dist(cur))) {
        next = nb.node;
        break;
      }
    }
    if (next == cur) {
      throw NetworkError("shortest path reconstruction failed");
    }
    route.path.push_back(next);
    cur = next;
  }
  return route;
}

double distance_to(const TransportNetwork& net, const Location& from, NodeId to) {
  if (const auto* at = std::get_if<AtNode>(&from)) {
    return net.distance(at->node, to);
  }
  const auto& e = std::get<OnEdge>(from);
  return std::min(e.dist_from + net.distance(e.from, to), e.dist_to + net.distance(e.to, to));
}

Location advance(const TransportNetwork& net, const Location& loc, NodeId dest,
                 double speed_kmh, double dt_h) {
  if (!(speed_kmh > 0.0) || !(dt_h > 0.0)) {
    throw std::invalid_argument("advance requires positive speed and interval");
  }
  const Route route = shortest_path(net, loc, dest);
  double budget = speed_kmh * dt_h;
  if (budget >= route.distance - kDistanceTolerance) {
    return AtNode{dest};
  }

  // First leg: from the current position to the first node of the route.
  NodeId prev;
  double leg;
  if (const auto* at = std::get_if<AtNode>(&loc)) {
    prev = at->node;
    leg = 0.0;
  } else {
    const auto& e = std::get<OnEdge>(loc);
    const bool via_to = route.path.front() == e.to;
    leg = via_to ? e.dist_to : e.dist_from;
    prev = via_to ? e.from : e.to;
    if (budget < leg - kDistanceTolerance) {
      const double w = leg + (via_to ? e.dist_from : e.dist_to);
      const double remaining = leg - budget;
      return OnEdge{prev, w - remaining, route.path.front(), remaining};
    }
  }
  budget -= leg;
  prev = route.path.front();
  if (std::abs(budget) <= kDistanceTolerance) {
    return AtNode{prev};
  }
  for (std::size_t i = 1; i < route.path.size(); ++i) {
    const NodeId next = route.path[i];
    const double w = *net.edge_weight(prev, next);
    if (std::abs(budget - w) <= kDistanceTolerance) {
      return AtNode{next};
    }
    if (budget < w) {
      return OnEdge{prev, budget, next, w - budget};
    }
    budget -= w;
    prev = next;
  }
  return AtNode{dest};
}

bool at_microgrid(const TransportNetwork& net, const Location& before, const Location& after,
                  int microgrid_id) {
  if (!(before == after)) {
    return false;
  }
  const auto* at = std::get_if<AtNode>(&before);
  return at != nullptr && at->node == net.microgrid_node(microgrid_id);
}

}  // namespace mesr
