#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fleetcast/demand_data.hpp"
#include "fleetcast/forecaster.hpp"
#include "fleetcast/rng.hpp"
#include "fleetcast/roadnet.hpp"
#include "fleetcast/sim.hpp"

namespace fleetcast {

struct PlannerConfig {
  double delta = 0.1;   // peak threshold on idle / fleet
  double gamma = 0.7;   // discount
  double alpha = 0.6;   // expansion weight
  int L = 2;            // neighbor order
  int n = 5;            // regions kept at peak
  double lambda = 0.5;  // destination penalty
  double score_floor = 1e-6;
  int max_resample = 5;

  void validate() const;
};

struct SupplyState {
  int idle_count = 0;
  int fleet_size = 0;
  std::int64_t slot = 0;
};

inline bool is_peak(const SupplyState& s, double delta) {
  return static_cast<double>(s.idle_count) / static_cast<double>(s.fleet_size) < delta;
}

inline double popularity(double o, double d, bool peak, double lambda) { return peak ? o : o - lambda * d; }

/// Discounted mean popularity over the Δ+1 slots starting at the current one.
template <typename Derived>
double region_weighted_score(const Eigen::DenseBase<Derived>& series, int delta_slots, double gamma) {
  if (delta_slots < 1 || series.size() < delta_slots + 1)
    throw ValidationError("weighted score needs delta >= 1 and delta + 1 entries");
  double acc = 0.0;
  double g = 1.0;
  for (int t = 0; t <= delta_slots; ++t, g *= gamma) acc += g * series(t);
  return acc / delta_slots;
}

/// α·w + (1−α)·mean(neighbors); just w when there are no neighbors.
inline double expanded_score(double w, std::span<const double> neighbors, double alpha) {
  if (neighbors.empty()) return w;
  double sum = 0.0;
  for (double v : neighbors) sum += v;
  return alpha * w + (1.0 - alpha) * sum / static_cast<double>(neighbors.size());
}

struct CandidateScore {
  RegionId region = 0;
  double score = 0.0;
};

/// Slots needed to reach each region's center node: max(1, ceil(t / slot)), or
/// -1 when the center is unreachable.
std::vector<int> estimate_delta(const HexGrid& grid, std::span<const double> travel_from_agent, double slot_duration);

/// Scores of the regions within `cfg.L` rings of `agent_region`, ascending ids.
/// Row t of the forecast matrices is the forecast for slot j + t.
std::vector<CandidateScore> candidate_scores(const HexGrid& grid, RegionId agent_region,
                                             std::span<const int> delta_slots, const Eigen::MatrixXd& origins,
                                             const Eigen::MatrixXd& destinations, bool peak,
                                             const PlannerConfig& cfg);

/// Pr(r) = score_r / Σ score. Throws on an empty list.
RegionId sample_destination_region(std::span<const CandidateScore> scores, Rng& rng);
NodeId sample_node(std::span<const WeightedNode> nodes, Rng& rng);

/// Uniform over nodes reachable from `from` (itself included), sorted by id.
std::vector<NodeId> reachable_nodes(const RoadNetwork& net, NodeId from);
TravelPath plan_route_rd(const RoadNetwork& net, NodeId from, Rng& rng);

class DropPlanner final : public Planner {
 public:
  DropPlanner(const RoadNetwork& net, const HexGrid& grid, ForecastProvider& provider, const TopNodeTable& top_nodes,
              TimeSlotSpec slots, PlannerConfig cfg);

  TravelPath plan(const PlanRequest& req, Rng& rng) override;
  void observe_request(const SimRequest& request) override;

  /// Forecast rows for slots j .. j+rows-1, padding past the provider's horizon
  /// by repeating its last row.
  Eigen::MatrixXd forecast(DemandKind kind, std::int64_t j, int rows);

 private:
  const RoadNetwork& net_;
  const HexGrid& grid_;
  ForecastProvider& provider_;
  const TopNodeTable& top_nodes_;
  TimeSlotSpec slots_;
  PlannerConfig cfg_;
  bool warned_ = false;
};

class RandomDestinationPlanner final : public Planner {
 public:
  explicit RandomDestinationPlanner(const RoadNetwork& net) : net_(net) {}
  TravelPath plan(const PlanRequest& req, Rng& rng) override;

 private:
  const RoadNetwork& net_;
  std::unordered_map<NodeId, std::vector<NodeId>> reachable_;
};

}  // namespace fleetcast
