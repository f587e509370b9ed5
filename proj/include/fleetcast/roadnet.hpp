#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace fleetcast {

using NodeId = std::int32_t;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct Edge {
  NodeId to;
  double travel_time;  // seconds, > 0
};

/// Great-circle distance in meters.
double haversine_m(GeoPoint a, GeoPoint b);

/// Weighted directed road graph. Node ids are dense in [0, node_count()); the
/// external ids from the input files are kept for reporting.
class RoadNetwork {
 public:
  NodeId add_node(std::int64_t external_id, GeoPoint position);

  /// Adds u -> v. A duplicate edge keeps the smaller travel time.
  void add_edge(NodeId from, NodeId to, double travel_time);

  std::size_t node_count() const { return positions_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  bool empty() const { return positions_.empty(); }
  bool contains(NodeId v) const { return v >= 0 && static_cast<std::size_t>(v) < positions_.size(); }

  std::span<const Edge> out_edges(NodeId v) const { return out_[v]; }
  std::span<const Edge> in_edges(NodeId v) const { return in_[v]; }

  GeoPoint position(NodeId v) const { return positions_[v]; }
  std::int64_t external_id(NodeId v) const { return external_ids_[v]; }
  std::optional<NodeId> find_external(std::int64_t external_id) const;

 private:
  std::vector<GeoPoint> positions_;
  std::vector<std::int64_t> external_ids_;
  std::unordered_map<std::int64_t, NodeId> by_external_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<Edge>> in_;
  std::size_t edge_count_ = 0;
};

/// Reads `node_id,lat,lon` and `from,to,travel_time_s` CSV files.
RoadNetwork load_network(const std::filesystem::path& nodes_file, const std::filesystem::path& edges_file);

struct TravelPath {
  std::vector<NodeId> nodes;
  double total_time = 0.0;
};

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// One-to-all Dijkstra. Entries are kUnreachable where no path exists.
std::vector<double> travel_times_from(const RoadNetwork& net, NodeId source);

/// All-to-one: travel time from every node to `target` (Dijkstra on reversed edges).
std::vector<double> travel_times_to(const RoadNetwork& net, NodeId target);

/// Shortest travel time u -> v, or nullopt when v is unreachable.
std::optional<double> shortest_travel_time(const RoadNetwork& net, NodeId u, NodeId v);

/// Shortest path u -> v; among equal-time paths each node keeps the smallest predecessor id.
std::optional<TravelPath> shortest_path(const RoadNetwork& net, NodeId u, NodeId v);

/// Node closest to (lat, lon) by great-circle distance, ties to the smaller id.
NodeId nearest_node(const RoadNetwork& net, double lat, double lon);

}  // namespace fleetcast
