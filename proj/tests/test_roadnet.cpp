#include <doctest.h>

#include <algorithm>
#include <functional>

#include "fleetcast/error.hpp"
#include "fleetcast/roadnet.hpp"
#include "path_oracle.hpp"
#include "support.hpp"

using namespace fleetcast;
using testing::TempDir;
using testing::write_text;

using testing::floyd_warshall;
using testing::path_time;

TEST_CASE("loading a two-node network") {
  TempDir dir("roadnet");
  write_text(dir / "nodes.csv", "node_id,lat,lon\n0,40.0,-74.0\n1,40.001,-74.0\n");
  write_text(dir / "edges.csv", "from,to,travel_time_s\n0,1,5\n");
  const auto net = load_network(dir / "nodes.csv", dir / "edges.csv");
  CHECK(net.node_count() == 2);
  CHECK(net.edge_count() == 1);
  CHECK(net.out_edges(0)[0].travel_time == 5.0);
}

TEST_CASE("edges naming an unknown node are rejected") {
  TempDir dir("roadnet");
  write_text(dir / "nodes.csv", "node_id,lat,lon\n0,40.0,-74.0\n1,40.001,-74.0\n");
  write_text(dir / "edges.csv", "from,to,travel_time_s\n0,99,5\n");
  CHECK_THROWS_AS(load_network(dir / "nodes.csv", dir / "edges.csv"), ValidationError);
}

TEST_CASE("duplicate edges keep the smaller travel time") {
  TempDir dir("roadnet");
  write_text(dir / "nodes.csv", "node_id,lat,lon\n0,40.0,-74.0\n1,40.001,-74.0\n");
  write_text(dir / "edges.csv", "from,to,travel_time_s\n0,1,5\n0,1,3\n");
  const auto net = load_network(dir / "nodes.csv", dir / "edges.csv");
  REQUIRE(net.out_edges(0).size() == 1);
  CHECK(net.out_edges(0)[0].travel_time == 3.0);
  CHECK(net.in_edges(1)[0].travel_time == 3.0);
  CHECK(net.edge_count() == 1);
}

TEST_CASE("malformed files report the path") {
  TempDir dir("roadnet");
  write_text(dir / "nodes.csv", "node_id,lat,lon\n0,40.0\n");
  write_text(dir / "edges.csv", "from,to,travel_time_s\n");
  try {
    load_network(dir / "nodes.csv", dir / "edges.csv");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("nodes.csv") != std::string::npos);
  }
  CHECK_THROWS(load_network(dir / "missing.csv", dir / "edges.csv"));
}

TEST_CASE("shortest travel times on small graphs") {
  auto net = testing::line_nodes(4);
  net.add_edge(0, 1, 5);
  net.add_edge(1, 2, 7);
  CHECK(shortest_travel_time(net, 0, 0) == 0.0);
  CHECK(shortest_travel_time(net, 0, 2) == 12.0);
  CHECK_FALSE(shortest_travel_time(net, 0, 3).has_value());
  CHECK_FALSE(shortest_travel_time(net, 2, 0).has_value());
  const auto fw = floyd_warshall(net);
  CHECK(fw[0][2] == 12.0);

  const auto self = shortest_path(net, 2, 2);
  REQUIRE(self);
  CHECK(self->nodes == std::vector<NodeId>{2});
  CHECK(self->total_time == 0.0);
  const auto chain = shortest_path(net, 0, 2);
  REQUIRE(chain);
  CHECK(chain->nodes == std::vector<NodeId>{0, 1, 2});
  CHECK(chain->total_time == 12.0);
}

TEST_CASE("equal-cost paths go through the smaller node id") {
  // Diamond 0 -> {1, 2} -> 3 with both branches costing 10. Enumerate all
  // simple paths and confirm the tie rule picks the lexicographically first.
  for (bool reversed : {false, true}) {
    RoadNetwork net = testing::line_nodes(4);
    if (reversed) {
      net.add_edge(0, 2, 4);
      net.add_edge(2, 3, 6);
      net.add_edge(0, 1, 6);
      net.add_edge(1, 3, 4);
    } else {
      net.add_edge(0, 1, 6);
      net.add_edge(1, 3, 4);
      net.add_edge(0, 2, 4);
      net.add_edge(2, 3, 6);
    }
    std::vector<std::vector<NodeId>> best;
    std::function<void(std::vector<NodeId>)> walk = [&](std::vector<NodeId> p) {
      if (p.back() == 3) {
        best.push_back(p);
        return;
      }
      for (const auto& e : net.out_edges(p.back())) {
        auto q = p;
        q.push_back(e.to);
        walk(q);
      }
    };
    walk({0});
    std::erase_if(best, [&](const auto& p) { return path_time(net, p) != 10.0; });
    std::sort(best.begin(), best.end());
    REQUIRE(best.size() == 2);
    const auto got = shortest_path(net, 0, 3);
    REQUIRE(got);
    CHECK(got->nodes == best.front());
  }
}

TEST_CASE("Dijkstra agrees with Floyd-Warshall on random graphs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 30);
    const auto net = testing::random_graph(n, 0.15, rng);
    const auto fw = floyd_warshall(net);
    for (NodeId u = 0; u < n; ++u) {
      const auto from = travel_times_from(net, u);
      const auto to = travel_times_to(net, u);
      for (NodeId v = 0; v < n; ++v) {
        CHECK(from[v] == fw[u][v]);
        CHECK(to[v] == fw[v][u]);
        const auto p = shortest_path(net, u, v);
        CHECK(p.has_value() == (fw[u][v] != kUnreachable));
        if (p) {
          CHECK(p->nodes.front() == u);
          CHECK(p->nodes.back() == v);
          CHECK(path_time(net, p->nodes) == fw[u][v]);
          CHECK(p->total_time == fw[u][v]);
        }
      }
    }
  }
}

TEST_CASE("nearest node") {
  auto net = testing::line_nodes(10);
  CHECK(nearest_node(net, 40.0, -74.0 + 0.0012 * 7) == 7);
  // Midpoint between 3 and 7 nudged toward 3: brute-force scan agrees.
  const double lat = 40.0, lon = -74.0 + 0.0012 * 4.99;
  NodeId brute = 0;
  for (NodeId v = 1; v < 10; ++v)
    if (haversine_m({lat, lon}, net.position(v)) < haversine_m({lat, lon}, net.position(brute))) brute = v;
  CHECK(nearest_node(net, lat, lon) == brute);

  RoadNetwork two;
  two.add_node(10, {0.0, 0.0});
  two.add_node(20, {0.0, 0.5});
  CHECK(nearest_node(two, 0.0, 0.26) == 1);
  CHECK(nearest_node(two, 0.0, 0.25) == 0);  // tie goes to the smaller id

  RoadNetwork empty;
  CHECK_THROWS_AS(nearest_node(empty, 40.0, -74.0), ValidationError);
}
