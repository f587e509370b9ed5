#include <doctest.h>

#include <algorithm>
#include <map>

#include "fleetcast/drop.hpp"
#include "fleetcast/error.hpp"
#include "fleetcast/synth.hpp"
#include "support.hpp"

using namespace fleetcast;

namespace {

struct World {
  RoadNetwork net = synth::grid_network(25, 27, 200.0, 8.0, {40.70, -74.00});
  HexGrid grid = build_hex_partition(net, 500.0);
  TimeSlotSpec slots = TimeSlotSpec::make(3600, 0);
  TopNodeTable top = top_nodes_per_region({}, grid, slots);
};

const World& world() {
  static const World w;
  return w;
}

/// A region with all 18 regions of rings 1..2 present.
RegionId interior_region(const HexGrid& g) {
  for (RegionId r = 0; r < static_cast<RegionId>(g.region_count()); ++r)
    if (g.within(r, 2).size() == 19) return r;
  throw std::runtime_error("grid has no interior region");
}

/// Serves a fixed number of rows, then stops.
class ShortProvider final : public ForecastProvider {
 public:
  explicit ShortProvider(int regions) : regions_(regions) {}
  Eigen::MatrixXd predict(DemandKind, std::int64_t j, int horizon) override {
    Eigen::MatrixXd m(horizon, regions_);
    for (int t = 0; t < horizon; ++t) m.row(t).setConstant(static_cast<double>(j + 1 + t));
    return m;
  }
  int max_horizon() const override { return 2; }
  Eigen::Index regions() const override { return regions_; }

 private:
  int regions_;
};

}  // namespace

TEST_CASE("peak detection") {
  CHECK(is_peak({50, 1000, 0}, 0.1));
  CHECK_FALSE(is_peak({100, 1000, 0}, 0.1));
  CHECK_FALSE(is_peak({1000, 1000, 0}, 0.1));
}

TEST_CASE("popularity") {
  CHECK(popularity(10, 4, true, 0.5) == 10.0);
  CHECK(popularity(10, 4, false, 0.5) == 8.0);
  CHECK(popularity(1, 4, false, 0.5) == -1.0);
  for (double o : {0.0, 3.5, 12.0})
    for (double d : {0.0, 7.0}) CHECK(popularity(o, d, false, 0.0) == popularity(o, d, true, 0.0));
}

TEST_CASE("weighted and expanded scores") {
  Eigen::Vector3d c(4, 4, 4);
  CHECK(region_weighted_score(c, 2, 1.0) == doctest::Approx(6.0));
  Eigen::Vector3d ten(10, 10, 10);
  CHECK(region_weighted_score(ten, 2, 0.7) == doctest::Approx(10.95));
  CHECK_THROWS_AS(region_weighted_score(ten, 0, 0.7), ValidationError);
  CHECK_THROWS_AS(region_weighted_score(ten, 3, 0.7), ValidationError);

  const std::vector<double> five{5.0, 5.0};
  CHECK(expanded_score(10, five, 0.6) == doctest::Approx(8.0));
  CHECK(expanded_score(10, five, 1.0) == 10.0);
  CHECK(expanded_score(10, {}, 0.6) == 10.0);
}

TEST_CASE("score fixtures") {
  for (const auto& f : testing::fixtures()["scores"]) {
    const int delta = f["delta"];
    const int regions = f["regions"];
    const auto o = f["o"].get<std::vector<double>>();
    const auto d = f["d"].get<std::vector<double>>();
    const auto weighted = f["weighted"].get<std::vector<double>>();
    std::vector<double> w(regions);
    for (int r = 0; r < regions; ++r) {
      Eigen::VectorXd p(delta + 1);
      for (int t = 0; t <= delta; ++t)
        p(t) = popularity(o[t * regions + r], d[t * regions + r], f["peak"], f["lambda"]);
      w[r] = region_weighted_score(p, delta, f["gamma"]);
      CHECK(w[r] == doctest::Approx(weighted[r]).epsilon(1e-12));
    }
    const std::vector<double> nb(w.begin() + 1, w.end());
    CHECK(expanded_score(w[0], nb, f["alpha"]) == doctest::Approx(f["expanded"].get<double>()).epsilon(1e-12));

    // Sampling follows score / sum; checked through the cumulative thresholds.
    const auto scores = f["scores"].get<std::vector<double>>();
    const auto probs = f["probabilities"].get<std::vector<double>>();
    double total = 0.0;
    for (double s : scores) total += s;
    for (std::size_t i = 0; i < scores.size(); ++i) CHECK(scores[i] / total == doctest::Approx(probs[i]).epsilon(1e-12));
  }
}

TEST_CASE("estimated slots to a region") {
  const auto& w = world();
  const RegionId r = interior_region(w.grid);
  const auto travel = travel_times_from(w.net, w.grid.center_node(r));
  const auto deltas = estimate_delta(w.grid, travel, 60.0);
  CHECK(deltas[r] == 1);
  for (std::size_t q = 0; q < deltas.size(); ++q) {
    const double t = travel[w.grid.center_node(static_cast<RegionId>(q))];
    CHECK(deltas[q] == std::max(1, static_cast<int>(std::ceil(t / 60.0))));
  }
}

TEST_CASE("candidate sets") {
  const auto& w = world();
  const RegionId r = interior_region(w.grid);
  const auto travel = travel_times_from(w.net, w.grid.center_node(r));
  const auto deltas = estimate_delta(w.grid, travel, 3600.0);
  const auto n = static_cast<Eigen::Index>(w.grid.region_count());
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, n);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, n);
  for (Eigen::Index q = 0; q < n; ++q) o.col(q).setConstant(static_cast<double>(q % 7 + 1));
  PlannerConfig cfg;

  SUBCASE("L = 0 keeps only the agent's region") {
    cfg.L = 0;
    const auto s = candidate_scores(w.grid, r, deltas, o, d, false, cfg);
    REQUIRE(s.size() == 1);
    CHECK(s[0].region == r);
  }
  SUBCASE("peak keeps the n best of 19") {
    const auto all = candidate_scores(w.grid, r, deltas, o, d, false, cfg);
    CHECK(all.size() == 19);
    const auto kept = candidate_scores(w.grid, r, deltas, o, d, true, cfg);
    CHECK(kept.size() == 5);
    auto ranked = all;
    std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.score > b.score; });
    for (const auto& k : kept) {
      const auto pos = std::find_if(ranked.begin(), ranked.end(), [&](auto& c) { return c.region == k.region; });
      CHECK(pos - ranked.begin() < 5);
    }
  }
  SUBCASE("negative scores clamp to the floor") {
    d.setConstant(50.0);
    const auto s = candidate_scores(w.grid, r, deltas, o, d, false, cfg);
    for (const auto& c : s) CHECK(c.score == cfg.score_floor);
  }
  SUBCASE("too few forecast rows") {
    CHECK_THROWS_AS(candidate_scores(w.grid, r, deltas, o.topRows(1), d.topRows(1), false, cfg), ValidationError);
  }
}

TEST_CASE("weighted sampling") {
  auto rng = make_stream(3, "sampling");
  const std::vector<CandidateScore> one{{7, 0.2}};
  for (int i = 0; i < 20; ++i) CHECK(sample_destination_region(one, rng) == 7);
  CHECK_THROWS_AS(sample_destination_region(std::vector<CandidateScore>{}, rng), ValidationError);

  const std::vector<CandidateScore> pair{{0, 1.0}, {1, 3.0}};
  const std::vector<CandidateScore> scaled{{0, 2.5}, {1, 7.5}};
  int second = 0;
  auto a = make_stream(9, "sampling");
  auto b = make_stream(9, "sampling");
  for (int i = 0; i < 100000; ++i) {
    const RegionId x = sample_destination_region(pair, a);
    CHECK(x == sample_destination_region(scaled, b));
    second += x == 1;
  }
  CHECK(std::abs(second / 100000.0 - 0.75) <= 0.01);
}

TEST_CASE("drop planner routes") {
  const auto& w = world();
  const RegionId r = interior_region(w.grid);
  const auto n = static_cast<Eigen::Index>(w.grid.region_count());
  Eigen::MatrixXd means = Eigen::MatrixXd::Ones(24, n);
  const RegionId dominant = w.grid.ring(r, 1).front();
  means.col(dominant).setConstant(100.0);
  HistoricalAverage ha(means, Eigen::MatrixXd::Zero(24, n));
  PlannerConfig cfg;
  cfg.L = 2;
  cfg.alpha = 1.0;  // scores are then 100 vs 1 after scaling, no neighbor spill
  cfg.n = 3;        // expected share 100/102, well clear of the 95% bound
  DropPlanner planner(w.net, w.grid, ha, w.top, w.slots, cfg);

  const NodeId start = w.grid.center_node(r);
  const auto travel = travel_times_from(w.net, start);
  auto rng = make_stream(11, "planner");
  int hits = 0;
  std::vector<TravelPath> paths;
  for (int i = 0; i < 1000; ++i) {
    const auto path = planner.plan({0, start, 0.0, 8 * 3600, 1, 100}, rng);
    REQUIRE(!path.nodes.empty());
    CHECK(path.nodes.front() == start);
    CHECK(path.total_time == doctest::Approx(travel[path.nodes.back()]).epsilon(1e-12));
    hits += w.grid.region_of(path.nodes.back()) == dominant;
    paths.push_back(path);
  }
  CHECK(hits >= 950);

  // Replaying the same stream reproduces the routes.
  auto replay = make_stream(11, "planner");
  for (int i = 0; i < 50; ++i) CHECK(planner.plan({0, start, 0.0, 8 * 3600, 1, 100}, replay).nodes == paths[i].nodes);

  CHECK_THROWS_AS(DropPlanner(w.net, w.grid, ha, TopNodeTable(w.grid.region_count(), 12), w.slots, cfg), ShapeError);
  HistoricalAverage narrow(Eigen::MatrixXd::Ones(24, 3), Eigen::MatrixXd::Ones(24, 3));
  CHECK_THROWS_AS(DropPlanner(w.net, w.grid, narrow, w.top, w.slots, cfg), ShapeError);
  cfg.delta = 1.5;
  CHECK_THROWS_AS(DropPlanner(w.net, w.grid, ha, w.top, w.slots, cfg), ValidationError);
}

TEST_CASE("drop planner with a single-node region stays put") {
  RoadNetwork net = testing::line_nodes(1);
  const auto grid = build_hex_partition(net, 500.0);
  const auto slots = TimeSlotSpec::make(3600, 0);
  const auto top = top_nodes_per_region({}, grid, slots);
  HistoricalAverage ha(Eigen::MatrixXd::Ones(24, 1), Eigen::MatrixXd::Zero(24, 1));
  DropPlanner planner(net, grid, ha, top, slots, PlannerConfig{});
  auto rng = make_stream(1, "planner");
  const auto path = planner.plan({0, 0, 0.0, 0, 1, 1}, rng);
  CHECK(path.nodes == std::vector<NodeId>{0});
  CHECK(path.total_time == 0.0);
}

TEST_CASE("forecast padding past the provider horizon") {
  const auto& w = world();
  ShortProvider provider(static_cast<int>(w.grid.region_count()));
  DropPlanner planner(w.net, w.grid, provider, w.top, w.slots, PlannerConfig{});
  const auto f = planner.forecast(DemandKind::origin, 10, 5);
  REQUIRE(f.rows() == 5);
  CHECK(f(0, 0) == 10.0);
  CHECK(f(1, 0) == 11.0);
  for (int t = 2; t < 5; ++t) CHECK(f(t, 3) == 11.0);
}

TEST_CASE("random destination baseline") {
  SUBCASE("single node network") {
    RoadNetwork net = testing::line_nodes(1);
    RandomDestinationPlanner rd(net);
    auto rng = make_stream(1, "planner");
    const auto path = rd.plan({0, 0, 0.0, 0, 1, 1}, rng);
    CHECK(path.nodes == std::vector<NodeId>{0});
  }
  SUBCASE("uniform over a 20-node ring") {
    RoadNetwork net = testing::line_nodes(20);
    for (int i = 0; i < 20; ++i) {
      net.add_edge(i, (i + 1) % 20, 10);
      net.add_edge((i + 1) % 20, i, 10);
    }
    RandomDestinationPlanner rd(net);
    auto rng = make_stream(4, "planner");
    std::vector<int> hist(20, 0);
    for (int i = 0; i < 10000; ++i) {
      const auto path = rd.plan({0, 5, 0.0, 0, 1, 1}, rng);
      REQUIRE(path.nodes.front() == 5);
      for (std::size_t k = 1; k < path.nodes.size(); ++k) {
        const auto out = net.out_edges(path.nodes[k - 1]);
        CHECK(std::any_of(out.begin(), out.end(), [&](const Edge& e) { return e.to == path.nodes[k]; }));
      }
      ++hist[path.nodes.back()];
    }
    double chi2 = 0.0;
    for (int c : hist) chi2 += (c - 500.0) * (c - 500.0) / 500.0;
    CHECK(chi2 < 43.82);  // 19 dof, p = 0.001
  }
  SUBCASE("only reachable nodes are chosen") {
    RoadNetwork net = testing::line_nodes(4);
    net.add_edge(0, 1, 5);
    net.add_edge(2, 3, 5);
    CHECK(reachable_nodes(net, 0) == std::vector<NodeId>{0, 1});
    auto rng = make_stream(2, "planner");
    for (int i = 0; i < 100; ++i) CHECK(plan_route_rd(net, 0, rng).nodes.back() <= 1);
  }
}
