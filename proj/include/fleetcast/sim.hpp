#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "fleetcast/rng.hpp"
#include "fleetcast/roadnet.hpp"
#include "fleetcast/timeutil.hpp"

namespace fleetcast {

/// A request as it enters the simulation. `dropoff_time` is the recorded trip
/// end, used only to feed destination counts to forecasters.
struct SimRequest {
  Timestamp time = 0;
  Timestamp dropoff_time = 0;
  NodeId origin = 0;
  NodeId destination = 0;
};

/// What a planner sees when an empty agent needs a search route.
struct PlanRequest {
  int agent = 0;
  NodeId node = 0;
  double now = 0.0;        // seconds since span start
  Timestamp now_abs = 0;   // floor of the absolute time
  int idle_count = 0;      // empty agents, including this one
  int fleet_size = 0;
};

class Planner {
 public:
  virtual ~Planner() = default;
  /// Search route starting at `req.node`. A single-node path means stay in place.
  virtual TravelPath plan(const PlanRequest& req, Rng& rng) = 0;
  /// Called once per introduced request, in arrival order.
  virtual void observe_request(const SimRequest& /*request*/) {}
};

struct SimConfig {
  int fleet_size = 1000;
  double mlt = 600.0;        // seconds
  Timestamp span_start = 0;
  Timestamp span_end = 0;
  double dwell = 300.0;      // stay-in-place duration, one time slot
  std::uint64_t seed = 1;

  void validate() const;
};

enum class RequestState { pending, assigned, served, expired };

struct Request {
  int id = 0;
  NodeId origin = 0;
  NodeId destination = 0;
  double t_o = 0.0;  // seconds since span start
  double t_star = 0.0;
  RequestState state = RequestState::pending;
  double wait = 0.0;
  int agent = -1;
};

enum class LogKind {
  request_arrival,
  assign,
  pickup,
  dropoff,
  request_expiry,
  agent_node_arrival,
  idle_start,
  idle_end,
  search_route
};

const char* to_string(LogKind kind);
LogKind parse_log_kind(std::string_view text);

struct LogEntry {
  double time = 0.0;  // seconds since span start
  std::int64_t seq = 0;
  LogKind kind = LogKind::request_arrival;
  int agent = -1;
  int request = -1;
  NodeId node = -1;
};

struct SimMetrics {
  double avg_idle = 0.0;  // per search route, pooled over agents
  double avg_wait = 0.0;
  double expired_pct = 0.0;
  std::int64_t introduced = 0;
  std::int64_t served = 0;
  std::int64_t expired = 0;
  std::int64_t idle_records = 0;
  std::int64_t routes = 0;
};

struct AgentSummary {
  std::vector<double> idle_records;
  double occupied_time = 0.0;
  NodeId start_node = 0;
};

struct SimResult {
  SimMetrics metrics;
  std::vector<LogEntry> log;
  std::vector<Request> requests;
  std::vector<AgentSummary> agents;
  double end_time = 0.0;  // seconds since span start
};

/// Runs the event loop from span start until span end and until every request
/// in the span has expired or been picked up. Requests outside the span are
/// ignored; `requests` must be time-ordered.
SimResult run(const RoadNetwork& net, const std::vector<SimRequest>& requests, const SimConfig& config,
              Planner& planner);

/// Pooled mean idle time: sum of all records over their count; 0 when none.
double average_idle(const std::vector<std::vector<double>>& records);

/// Recomputes the headline metrics from an event log alone.
SimMetrics replay_metrics(const std::vector<LogEntry>& log, double mlt);

void write_event_log(const std::filesystem::path& path, const std::vector<LogEntry>& log, const RoadNetwork& net);
std::vector<LogEntry> read_event_log(const std::filesystem::path& path, const RoadNetwork& net);

}  // namespace fleetcast
