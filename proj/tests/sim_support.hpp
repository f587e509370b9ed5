#pragma once

#include <functional>

#include "fleetcast/sim.hpp"

namespace testing {

/// Always stays in place.
class StayPlanner final : public fleetcast::Planner {
 public:
  fleetcast::TravelPath plan(const fleetcast::PlanRequest& req, fleetcast::Rng&) override { return {{req.node}, 0.0}; }
};

/// Delegates to a callback.
class ScriptedPlanner final : public fleetcast::Planner {
 public:
  using Fn = std::function<fleetcast::TravelPath(const fleetcast::PlanRequest&, fleetcast::Rng&)>;
  explicit ScriptedPlanner(Fn fn) : fn_(std::move(fn)) {}
  fleetcast::TravelPath plan(const fleetcast::PlanRequest& req, fleetcast::Rng& rng) override { return fn_(req, rng); }

 private:
  Fn fn_;
};

/// First seed whose agent start nodes equal `wanted` (agent order).
inline std::uint64_t seed_with_starts(const fleetcast::RoadNetwork& net, fleetcast::SimConfig cfg,
                                      const std::vector<fleetcast::NodeId>& wanted) {
  StayPlanner stay;
  for (std::uint64_t seed = 1; seed < 500; ++seed) {
    cfg.seed = seed;
    const auto r = fleetcast::run(net, {}, cfg, stay);
    bool ok = true;
    for (std::size_t a = 0; a < wanted.size(); ++a) ok = ok && r.agents[a].start_node == wanted[a];
    if (ok) return seed;
  }
  throw std::runtime_error("no seed places agents as requested");
}

/// Sum of idle records plus occupied time for each agent.
inline std::vector<double> accounted_time(const fleetcast::SimResult& r) {
  std::vector<double> out;
  for (const auto& a : r.agents) {
    double t = a.occupied_time;
    for (double x : a.idle_records) t += x;
    out.push_back(t);
  }
  return out;
}

}  // namespace testing
