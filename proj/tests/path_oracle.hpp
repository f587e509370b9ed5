#pragma once

#include <algorithm>
#include <vector>

#include "fleetcast/roadnet.hpp"

namespace testing {

/// All-pairs reference distances.
inline std::vector<std::vector<double>> floyd_warshall(const fleetcast::RoadNetwork& net) {
  const auto n = net.node_count();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, fleetcast::kUnreachable));
  for (std::size_t v = 0; v < n; ++v) {
    d[v][v] = 0;
    for (const auto& e : net.out_edges(static_cast<fleetcast::NodeId>(v))) d[v][e.to] = std::min(d[v][e.to], e.travel_time);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

/// Sum of the cheapest edge between consecutive nodes.
inline double path_time(const fleetcast::RoadNetwork& net, const std::vector<fleetcast::NodeId>& nodes) {
  double t = 0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    double best = fleetcast::kUnreachable;
    for (const auto& e : net.out_edges(nodes[i]))
      if (e.to == nodes[i + 1]) best = std::min(best, e.travel_time);
    t += best;
  }
  return t;
}

}  // namespace testing
