#include "fleetcast/drop.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "fleetcast/error.hpp"

namespace fleetcast {

void PlannerConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("invalid planner config: " + what); };
  if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (L < 0) fail("L must be >= 0");
  if (n < 1) fail("n must be >= 1");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(score_floor > 0.0)) fail("score_floor must be positive");
  if (max_resample < 0) fail("max_resample must be >= 0");
}

std::vector<int> estimate_delta(const HexGrid& grid, std::span<const double> travel_from_agent, double slot_duration) {
  std::vector<int> out(grid.region_count(), -1);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double t = travel_from_agent[grid.center_node(static_cast<RegionId>(r))];
    if (t == kUnreachable) continue;
    out[r] = std::max(1, static_cast<int>(std::ceil(t / slot_duration)));
  }
  return out;
}

std::vector<CandidateScore> candidate_scores(const HexGrid& grid, RegionId agent_region,
                                             std::span<const int> delta_slots, const Eigen::MatrixXd& origins,
                                             const Eigen::MatrixXd& destinations, bool peak,
                                             const PlannerConfig& cfg) {
  std::vector<double> weighted(grid.region_count(), 0.0);
  std::vector<bool> done(grid.region_count(), false);
  auto score_of = [&](RegionId r) {
    if (!done[r]) {
      const int d = delta_slots[r];
      if (origins.rows() < d + 1 || destinations.rows() < d + 1)
        throw ValidationError("forecasts do not cover the travel horizon");
      Eigen::VectorXd p(d + 1);
      for (int t = 0; t <= d; ++t) p(t) = popularity(origins(t, r), destinations(t, r), peak, cfg.lambda);
      weighted[r] = region_weighted_score(p, d, cfg.gamma);
      done[r] = true;
    }
    return weighted[r];
  };

  std::vector<CandidateScore> out;
  for (RegionId r : grid.within(agent_region, cfg.L)) {
    if (delta_slots[r] < 0) continue;
    std::vector<double> nb;
    for (RegionId q : grid.neighbors(r))
      if (delta_slots[q] >= 0) nb.push_back(score_of(q));
    out.push_back({r, expanded_score(score_of(r), nb, cfg.alpha)});
  }
  if (peak && out.size() > static_cast<std::size_t>(cfg.n)) {
    std::vector<CandidateScore> ranked = out;
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.score > b.score || (a.score == b.score && a.region < b.region);
    });
    ranked.resize(static_cast<std::size_t>(cfg.n));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.region < b.region; });
    out = std::move(ranked);
  }
  for (auto& c : out) c.score = std::max(c.score, cfg.score_floor);
  return out;
}

namespace {

template <typename Item, typename Weight>
std::size_t sample_index(std::span<const Item> items, Weight weight, Rng& rng) {
  double total = 0.0;
  for (const auto& it : items) total += weight(it);
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    acc += weight(items[i]);
    if (u < acc) return i;
  }
  return items.size() - 1;
}

}  // namespace

RegionId sample_destination_region(std::span<const CandidateScore> scores, Rng& rng) {
  if (scores.empty()) throw ValidationError("no candidate regions to sample from");
  return scores[sample_index(scores, [](const CandidateScore& c) { return c.score; }, rng)].region;
}

NodeId sample_node(std::span<const WeightedNode> nodes, Rng& rng) {
  if (nodes.empty()) throw ValidationError("no candidate nodes to sample from");
  return nodes[sample_index(nodes, [](const WeightedNode& n) { return n.weight; }, rng)].node;
}

std::vector<NodeId> reachable_nodes(const RoadNetwork& net, NodeId from) {
  const auto t = travel_times_from(net, from);
  std::vector<NodeId> out;
  for (NodeId v = 0; v < static_cast<NodeId>(t.size()); ++v)
    if (t[v] != kUnreachable) out.push_back(v);
  return out;
}

TravelPath plan_route_rd(const RoadNetwork& net, NodeId from, Rng& rng) {
  const auto nodes = reachable_nodes(net, from);
  return *shortest_path(net, from, nodes[uniform_index(rng, nodes.size())]);
}

TravelPath RandomDestinationPlanner::plan(const PlanRequest& req, Rng& rng) {
  auto it = reachable_.find(req.node);
  if (it == reachable_.end()) {
    if (reachable_.size() >= 4096) reachable_.clear();
    it = reachable_.emplace(req.node, reachable_nodes(net_, req.node)).first;
  }
  return *shortest_path(net_, req.node, it->second[uniform_index(rng, it->second.size())]);
}

DropPlanner::DropPlanner(const RoadNetwork& net, const HexGrid& grid, ForecastProvider& provider,
                         const TopNodeTable& top_nodes, TimeSlotSpec slots, PlannerConfig cfg)
    : net_(net), grid_(grid), provider_(provider), top_nodes_(top_nodes), slots_(slots), cfg_(cfg) {
  cfg_.validate();
  if (provider_.regions() != static_cast<Eigen::Index>(grid_.region_count()))
    throw ShapeError("forecast provider region count differs from the partition");
  if (top_nodes_.slots_per_day() != slots_.slots_per_day)
    throw ShapeError("top-node table slot count differs from the time slot spec");
}

Eigen::MatrixXd DropPlanner::forecast(DemandKind kind, std::int64_t j, int rows) {
  int native = rows;
  if (provider_.max_horizon() > 0 && rows > provider_.max_horizon()) {
    native = provider_.max_horizon();
    if (!warned_) {
      spdlog::warn("forecast horizon {} exceeds the provider's {}; repeating its last slot", rows, native);
      warned_ = true;
    }
  }
  Eigen::MatrixXd f = provider_.predict(kind, j - 1, native);
  Eigen::MatrixXd out(rows, f.cols());
  out.topRows(native) = f;
  for (int r = native; r < rows; ++r) out.row(r) = f.row(native - 1);
  return out;
}

TravelPath DropPlanner::plan(const PlanRequest& req, Rng& rng) {
  const NodeId here = req.node;
  const auto travel = travel_times_from(net_, here);
  const auto deltas = estimate_delta(grid_, travel, static_cast<double>(slots_.slot_duration));
  const RegionId region = grid_.region_of(here);

  int horizon = 1;
  for (RegionId r : grid_.within(region, cfg_.L + 1)) horizon = std::max(horizon, deltas[r]);
  const auto j = slots_.slot_index(req.now_abs);
  const Eigen::MatrixXd o = forecast(DemandKind::origin, j, horizon + 1);
  const Eigen::MatrixXd d = forecast(DemandKind::destination, j, horizon + 1);
  const bool peak = is_peak({req.idle_count, req.fleet_size, j}, cfg_.delta);
  const auto scores = candidate_scores(grid_, region, deltas, o, d, peak, cfg_);

  if (!scores.empty()) {
    const int sod = slots_.slot_of_day(j);
    for (int attempt = 0; attempt <= cfg_.max_resample; ++attempt) {
      const RegionId target = sample_destination_region(scores, rng);
      const NodeId node = sample_node(top_nodes_.nodes(target, sod), rng);
      if (travel[node] != kUnreachable) return *shortest_path(net_, here, node);
    }
  }
  const NodeId center = grid_.center_node(region);
  if (travel[center] != kUnreachable) return *shortest_path(net_, here, center);
  return {{here}, 0.0};
}

void DropPlanner::observe_request(const SimRequest& request) {
  provider_.observe(DemandKind::origin, slots_.slot_index(request.time), grid_.region_of(request.origin));
  provider_.observe(DemandKind::destination, slots_.slot_index(request.dropoff_time),
                    grid_.region_of(request.destination));
}

}  // namespace fleetcast
