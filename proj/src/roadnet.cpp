#include "fleetcast/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <utility>

#include "fleetcast/csv.hpp"
#include "fleetcast/error.hpp"

namespace fleetcast {

double haversine_m(GeoPoint a, GeoPoint b) {
  constexpr double kEarthRadius = 6371008.8;
  constexpr double kRad = 3.14159265358979323846 / 180.0;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kRad) * std::cos(b.lat * kRad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(s)));
}

NodeId RoadNetwork::add_node(std::int64_t external_id, GeoPoint position) {
  if (by_external_.count(external_id))
    throw ValidationError("duplicate node id " + std::to_string(external_id));
  const auto id = static_cast<NodeId>(positions_.size());
  positions_.push_back(position);
  external_ids_.push_back(external_id);
  by_external_.emplace(external_id, id);
  out_.emplace_back();
  in_.emplace_back();
  return id;
}

void RoadNetwork::add_edge(NodeId from, NodeId to, double travel_time) {
  if (!contains(from) || !contains(to)) throw ValidationError("edge endpoint out of range");
  if (!(travel_time > 0.0) || !std::isfinite(travel_time))
    throw ValidationError("edge travel time must be positive");
  for (auto& e : out_[from]) {
    if (e.to == to) {
      if (travel_time < e.travel_time) {
        e.travel_time = travel_time;
        for (auto& r : in_[to])
          if (r.to == from) r.travel_time = travel_time;
      }
      return;
    }
  }
  out_[from].push_back({to, travel_time});
  in_[to].push_back({from, travel_time});
  ++edge_count_;
}

std::optional<NodeId> RoadNetwork::find_external(std::int64_t external_id) const {
  auto it = by_external_.find(external_id);
  if (it == by_external_.end()) return std::nullopt;
  return it->second;
}

RoadNetwork load_network(const std::filesystem::path& nodes_file, const std::filesystem::path& edges_file) {
  RoadNetwork net;
  std::vector<std::string_view> f;

  csv::Reader nodes(nodes_file);
  nodes.expect_header({"node_id", "lat", "lon"});
  while (nodes.next(f)) {
    if (f.size() != 3) throw ParseError(nodes_file.string() + ": expected 3 fields", nodes.line());
    const auto ext = csv::to_int(f[0], nodes.line());
    GeoPoint p{csv::to_double(f[1], nodes.line()), csv::to_double(f[2], nodes.line())};
    try {
      net.add_node(ext, p);
    } catch (const ValidationError& e) {
      throw ParseError(nodes_file.string() + ": " + e.what(), nodes.line());
    }
  }

  csv::Reader edges(edges_file);
  edges.expect_header({"from", "to", "travel_time_s"});
  while (edges.next(f)) {
    if (f.size() != 3) throw ParseError(edges_file.string() + ": expected 3 fields", edges.line());
    const auto from = csv::to_int(f[0], edges.line());
    const auto to = csv::to_int(f[1], edges.line());
    const double t = csv::to_double(f[2], edges.line());
    const auto u = net.find_external(from);
    const auto v = net.find_external(to);
    if (!u || !v)
      throw ValidationError(edges_file.string() + ": line " + std::to_string(edges.line()) +
                            " references unknown node " + std::to_string(!u ? from : to));
    if (!(t > 0.0))
      throw ValidationError(edges_file.string() + ": line " + std::to_string(edges.line()) +
                            " has non-positive travel time");
    net.add_edge(*u, *v, t);
  }
  return net;
}

namespace {

struct DijkstraResult {
  std::vector<double> dist;
  std::vector<NodeId> pred;
};

// Single-source Dijkstra over `edges_of` (out_edges or in_edges). Equal-distance
// relaxations keep the smaller predecessor id; heap ties pop the smaller node id.
template <typename EdgesOf>
DijkstraResult dijkstra(const RoadNetwork& net, NodeId source, EdgesOf edges_of, NodeId stop_at = -1) {
  const auto n = net.node_count();
  DijkstraResult res{std::vector<double>(n, kUnreachable), std::vector<NodeId>(n, -1)};
  std::vector<char> done(n, 0);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  res.dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == stop_at) break;
    for (const auto& e : edges_of(u)) {
      const double nd = d + e.travel_time;
      if (nd < res.dist[e.to]) {
        res.dist[e.to] = nd;
        res.pred[e.to] = u;
        heap.emplace(nd, e.to);
      } else if (nd == res.dist[e.to] && !done[e.to] && u < res.pred[e.to]) {
        res.pred[e.to] = u;
      }
    }
  }
  return res;
}

void check_node(const RoadNetwork& net, NodeId v) {
  if (!net.contains(v)) throw ValidationError("node id " + std::to_string(v) + " out of range");
}

}  // namespace

std::vector<double> travel_times_from(const RoadNetwork& net, NodeId source) {
  check_node(net, source);
  return dijkstra(net, source, [&](NodeId u) { return net.out_edges(u); }).dist;
}

std::vector<double> travel_times_to(const RoadNetwork& net, NodeId target) {
  check_node(net, target);
  return dijkstra(net, target, [&](NodeId u) { return net.in_edges(u); }).dist;
}

std::optional<double> shortest_travel_time(const RoadNetwork& net, NodeId u, NodeId v) {
  check_node(net, u);
  check_node(net, v);
  if (u == v) return 0.0;
  const auto res = dijkstra(net, u, [&](NodeId x) { return net.out_edges(x); });
  if (res.dist[v] == kUnreachable) return std::nullopt;
  return res.dist[v];
}

std::optional<TravelPath> shortest_path(const RoadNetwork& net, NodeId u, NodeId v) {
  check_node(net, u);
  check_node(net, v);
  if (u == v) return TravelPath{{u}, 0.0};
  // Run to completion: a node's predecessor may still improve on ties after it is popped.
  const auto res = dijkstra(net, u, [&](NodeId x) { return net.out_edges(x); });
  if (res.dist[v] == kUnreachable) return std::nullopt;
  TravelPath path;
  for (NodeId x = v; x != -1; x = res.pred[x]) path.nodes.push_back(x);
  std::reverse(path.nodes.begin(), path.nodes.end());
  // Sum edge weights along the chosen sequence so total_time matches the route exactly.
  for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
    for (const auto& e : net.out_edges(path.nodes[i]))
      if (e.to == path.nodes[i + 1]) {
        path.total_time += e.travel_time;
        break;
      }
  }
  return path;
}

NodeId nearest_node(const RoadNetwork& net, double lat, double lon) {
  if (net.empty()) throw ValidationError("nearest_node on an empty network");
  if (!std::isfinite(lat) || !std::isfinite(lon)) throw ValidationError("non-finite coordinates");
  NodeId best = 0;
  double best_d = kUnreachable;
  for (NodeId v = 0; v < static_cast<NodeId>(net.node_count()); ++v) {
    const double d = haversine_m({lat, lon}, net.position(v));
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

}  // namespace fleetcast
