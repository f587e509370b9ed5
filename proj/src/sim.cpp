#include "fleetcast/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "fleetcast/csv.hpp"
#include "fleetcast/error.hpp"

namespace fleetcast {

void SimConfig::validate() const {
  if (fleet_size < 1) throw ValidationError("fleet_size must be >= 1");
  if (!(mlt > 0.0) || !std::isfinite(mlt)) throw ValidationError("mlt must be positive");
  if (span_end <= span_start) throw ValidationError("simulation span must be non-empty");
  if (!(dwell > 0.0) || !std::isfinite(dwell)) throw ValidationError("dwell must be positive");
}

namespace {

constexpr const char* kKindNames[] = {"request_arrival",    "assign",     "pickup",   "dropoff",     "request_expiry",
                                      "agent_node_arrival", "idle_start", "idle_end", "search_route"};

}  // namespace

const char* to_string(LogKind kind) { return kKindNames[static_cast<int>(kind)]; }

LogKind parse_log_kind(std::string_view text) {
  for (int i = 0; i < static_cast<int>(std::size(kKindNames)); ++i)
    if (text == kKindNames[i]) return static_cast<LogKind>(i);
  throw ValidationError("unknown event kind '" + std::string(text) + "'");
}

double average_idle(const std::vector<std::vector<double>>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& agent : records)
    for (double r : agent) {
      sum += r;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

enum class EventKind { request_arrival, agent_node_arrival, request_expiry };

struct Event {
  double time;
  std::int64_t seq;
  EventKind kind;
  int id;
  int version;
  std::size_t index;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.time > b.time || (a.time == b.time && a.seq > b.seq);
  }
};

struct AgentState {
  bool occupied = false;
  std::vector<NodeId> route;
  std::vector<double> times;  // arrival time at each route node
  std::size_t progress = 0;   // last node reached
  bool dwelling = false;
  int version = 0;
  bool record_open = false;
  double record_start = 0.0;
  std::vector<double> records;
  double occupied_since = 0.0;
  double occupied_time = 0.0;
  int request = -1;
  std::size_t pickup_index = 0;
  bool picked_up = false;
  NodeId start = 0;
};

class Simulation {
 public:
  Simulation(const RoadNetwork& net, const std::vector<SimRequest>& input, const SimConfig& cfg, Planner& planner)
      : net_(net), input_(input), cfg_(cfg), planner_(planner) {}

  SimResult run();

 private:
  void push(double t, EventKind kind, int id, int version = 0, std::size_t index = 0) {
    events_.push({t, event_seq_++, kind, id, version, index});
  }
  void log(double t, LogKind kind, int agent, int request, NodeId node) {
    log_.push_back({t, static_cast<std::int64_t>(log_.size()), kind, agent, request, node});
  }

  const std::vector<double>& distances_to(NodeId target);
  int empty_count() const { return static_cast<int>(agents_.size()) - occupied_count_; }

  void on_request_arrival(int r, double now);
  void on_expiry(int r, double now);
  void on_node_arrival(int a, std::size_t i, double now);

  bool try_assign(int r, double now);
  void assign(int a, int r, double now);
  void rescan(double now);
  void pickup(int a, double now);
  void open_record(int a, double now);
  void close_record(int a, double now);
  void plan_search(int a, double now);
  bool set_route(AgentState& s, const std::vector<NodeId>& nodes, double now);
  void schedule_next(int a);

  const RoadNetwork& net_;
  const std::vector<SimRequest>& input_;
  const SimConfig& cfg_;
  Planner& planner_;

  std::vector<AgentState> agents_;
  std::vector<Request> requests_;
  std::vector<const SimRequest*> sources_;
  std::set<int> pending_;
  int awaiting_pickup_ = 0;
  int occupied_count_ = 0;
  std::int64_t routes_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::int64_t event_seq_ = 0;
  std::vector<LogEntry> log_;
  std::unordered_map<NodeId, std::vector<double>> dist_cache_;
  Rng planner_rng_;
};

const std::vector<double>& Simulation::distances_to(NodeId target) {
  auto it = dist_cache_.find(target);
  if (it != dist_cache_.end()) return it->second;
  if (dist_cache_.size() >= 2048) dist_cache_.clear();
  return dist_cache_.emplace(target, travel_times_to(net_, target)).first->second;
}

void Simulation::open_record(int a, double now) {
  auto& s = agents_[a];
  s.record_open = true;
  s.record_start = now;
  log(now, LogKind::idle_start, a, -1, s.route[s.progress]);
}

void Simulation::close_record(int a, double now) {
  auto& s = agents_[a];
  s.records.push_back(now - s.record_start);
  s.record_open = false;
  log(now, LogKind::idle_end, a, -1, -1);
}

bool Simulation::set_route(AgentState& s, const std::vector<NodeId>& nodes, double now) {
  std::vector<double> times{now};
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    double w = kUnreachable;
    if (net_.contains(nodes[i - 1]) && net_.contains(nodes[i]))
      for (const auto& e : net_.out_edges(nodes[i - 1]))
        if (e.to == nodes[i]) w = std::min(w, e.travel_time);
    if (w == kUnreachable) return false;
    times.push_back(times.back() + w);
  }
  s.route = nodes;
  s.times = std::move(times);
  return true;
}

void Simulation::schedule_next(int a) {
  auto& s = agents_[a];
  if (s.progress + 1 < s.route.size()) push(s.times[s.progress + 1], EventKind::agent_node_arrival, a, s.version, s.progress + 1);
}

void Simulation::plan_search(int a, double now) {
  auto& s = agents_[a];
  const NodeId node = s.route[s.progress];
  PlanRequest req{a, node, now, cfg_.span_start + static_cast<Timestamp>(std::floor(now)), empty_count(),
                  cfg_.fleet_size};
  std::vector<NodeId> nodes;
  try {
    nodes = planner_.plan(req, planner_rng_).nodes;
    if (nodes.empty() || nodes.front() != node) throw ValidationError("route does not start at the agent's node");
  } catch (const std::exception& e) {
    spdlog::warn("planner failed for agent {} at t={}: {}; staying in place", a, now, e.what());
    nodes = {node};
  }
  ++s.version;
  s.progress = 0;
  s.dwelling = false;
  if (nodes.size() > 1 && !set_route(s, nodes, now)) {
    spdlog::warn("planner returned a broken path for agent {}; staying in place", a);
    nodes = {node};
  }
  if (nodes.size() <= 1) {
    s.dwelling = true;
    s.route = {node, node};
    s.times = {now, now + cfg_.dwell};
  }
  ++routes_;
  log(now, LogKind::search_route, a, -1, s.route.back());
  schedule_next(a);
}

bool Simulation::try_assign(int r, double now) {
  const auto& req = requests_[r];
  const auto& dist = distances_to(req.origin);
  int best = -1;
  double best_travel = kUnreachable;
  for (int a = 0; a < static_cast<int>(agents_.size()); ++a) {
    const auto& s = agents_[a];
    if (s.occupied) continue;
    NodeId head = s.route[s.progress];
    double extra = 0.0;
    if (!s.dwelling && s.progress + 1 < s.route.size()) {
      head = s.route[s.progress + 1];
      extra = s.times[s.progress + 1] - now;
    }
    const double travel = extra + dist[head];
    if (travel == kUnreachable || now + travel > req.t_o + req.t_star) continue;
    if (travel < best_travel) {
      best_travel = travel;
      best = a;
    }
  }
  if (best < 0) return false;
  assign(best, r, now);
  return true;
}

void Simulation::assign(int a, int r, double now) {
  auto& s = agents_[a];
  auto& req = requests_[r];
  close_record(a, now);

  std::vector<NodeId> nodes;
  std::vector<double> times;
  if (!s.dwelling && s.progress + 1 < s.route.size()) {
    nodes = {s.route[s.progress], s.route[s.progress + 1]};
    times = {s.times[s.progress], s.times[s.progress + 1]};
  } else {
    nodes = {s.route[s.progress]};
    times = {now};
  }
  auto append = [&](const TravelPath& p) {
    AgentState tmp;
    set_route(tmp, p.nodes, times.back());
    for (std::size_t i = 1; i < p.nodes.size(); ++i) {
      nodes.push_back(p.nodes[i]);
      times.push_back(tmp.times[i]);
    }
  };
  append(*shortest_path(net_, nodes.back(), req.origin));
  const std::size_t pickup_index = nodes.size() - 1;
  if (auto leg = shortest_path(net_, req.origin, req.destination))
    append(*leg);
  else
    spdlog::warn("request {}: destination unreachable from origin; dropping off at the origin", r);

  s.route = std::move(nodes);
  s.times = std::move(times);
  s.progress = 0;
  s.dwelling = false;
  ++s.version;
  s.occupied = true;
  ++occupied_count_;
  s.occupied_since = now;
  s.request = r;
  s.pickup_index = pickup_index;
  s.picked_up = false;
  req.state = RequestState::assigned;
  req.agent = a;
  pending_.erase(r);
  ++awaiting_pickup_;
  log(now, LogKind::assign, a, r, s.route[std::min<std::size_t>(1, s.route.size() - 1)]);
  if (pickup_index == 0) pickup(a, now);
  if (s.route.size() > 1)
    schedule_next(a);
  else
    push(now, EventKind::agent_node_arrival, a, s.version, 0);
}

void Simulation::pickup(int a, double now) {
  auto& s = agents_[a];
  auto& req = requests_[s.request];
  s.picked_up = true;
  req.state = RequestState::served;
  req.wait = std::clamp(now - req.t_o, 0.0, req.t_star);
  --awaiting_pickup_;
  log(now, LogKind::pickup, a, s.request, req.origin);
}

void Simulation::rescan(double now) {
  if (pending_.empty() || empty_count() == 0) return;
  const std::vector<int> snapshot(pending_.begin(), pending_.end());
  for (int r : snapshot) {
    if (empty_count() == 0) break;
    if (requests_[r].state == RequestState::pending) try_assign(r, now);
  }
}

void Simulation::on_request_arrival(int r, double now) {
  const auto& req = requests_[r];
  log(now, LogKind::request_arrival, -1, r, req.origin);
  planner_.observe_request(*sources_[r]);
  pending_.insert(r);
  push(req.t_o + req.t_star, EventKind::request_expiry, r);
  try_assign(r, now);
}

void Simulation::on_expiry(int r, double now) {
  auto& req = requests_[r];
  if (req.state != RequestState::pending) return;
  req.state = RequestState::expired;
  req.wait = req.t_star;
  pending_.erase(r);
  log(now, LogKind::request_expiry, -1, r, req.origin);
}

void Simulation::on_node_arrival(int a, std::size_t i, double now) {
  auto& s = agents_[a];
  s.progress = i;
  log(now, LogKind::agent_node_arrival, a, s.request, s.route[i]);
  const bool last = i + 1 == s.route.size();
  if (s.occupied) {
    if (i == s.pickup_index && !s.picked_up) pickup(a, now);
    if (!last) {
      schedule_next(a);
      return;
    }
    log(now, LogKind::dropoff, a, s.request, s.route[i]);
    s.occupied_time += now - s.occupied_since;
    s.occupied = false;
    --occupied_count_;
    s.request = -1;
    s.route = {s.route[i]};
    s.times = {now};
    s.progress = 0;
    s.dwelling = false;
    ++s.version;
    open_record(a, now);
    rescan(now);
    if (!agents_[a].occupied) plan_search(a, now);
    return;
  }
  if (last) {
    if (s.dwelling) {
      s.route = {s.route[i]};
      s.times = {now};
      s.progress = 0;
      s.dwelling = false;
    }
    rescan(now);
    if (!agents_[a].occupied) {
      close_record(a, now);
      open_record(a, now);
      plan_search(a, now);
    }
    return;
  }
  schedule_next(a);
  rescan(now);
}

SimResult Simulation::run() {
  cfg_.validate();
  planner_rng_ = make_stream(cfg_.seed, "planner");
  const double span = static_cast<double>(cfg_.span_end - cfg_.span_start);

  for (std::size_t i = 0; i < input_.size(); ++i) {
    const auto& in = input_[i];
    if (!net_.contains(in.origin) || !net_.contains(in.destination))
      throw ValidationError("request " + std::to_string(i) + " references an unknown node");
    if (i > 0 && in.time < input_[i - 1].time) throw ValidationError("requests must be time-ordered");
    if (in.time < cfg_.span_start || in.time >= cfg_.span_end) continue;
    Request r;
    r.id = static_cast<int>(requests_.size());
    r.origin = in.origin;
    r.destination = in.destination;
    r.t_o = static_cast<double>(in.time - cfg_.span_start);
    r.t_star = cfg_.mlt;
    requests_.push_back(r);
    sources_.push_back(&in);
  }

  std::vector<NodeId> starts;
  for (NodeId v = 0; v < static_cast<NodeId>(net_.node_count()); ++v)
    if (!net_.out_edges(v).empty()) starts.push_back(v);
  if (starts.empty()) throw ValidationError("no node has outgoing edges; agents could never move");
  Rng place = make_stream(cfg_.seed, "agents");
  agents_.resize(static_cast<std::size_t>(cfg_.fleet_size));
  for (int a = 0; a < cfg_.fleet_size; ++a) {
    auto& s = agents_[a];
    s.start = starts[uniform_index(place, starts.size())];
    s.route = {s.start};
    s.times = {0.0};
    open_record(a, 0.0);
  }
  for (int a = 0; a < cfg_.fleet_size; ++a) plan_search(a, 0.0);
  for (const auto& r : requests_) push(r.t_o, EventKind::request_arrival, r.id);

  double now = 0.0;
  while (!events_.empty()) {
    const Event ev = events_.top();
    if (ev.time > span && pending_.empty() && awaiting_pickup_ == 0) break;
    events_.pop();
    now = ev.time;
    switch (ev.kind) {
      case EventKind::request_arrival:
        on_request_arrival(ev.id, now);
        break;
      case EventKind::request_expiry:
        on_expiry(ev.id, now);
        break;
      case EventKind::agent_node_arrival:
        if (ev.version == agents_[ev.id].version) on_node_arrival(ev.id, ev.index, now);
        break;
    }
  }

  SimResult out;
  out.end_time = std::max(span, now);
  for (int a = 0; a < cfg_.fleet_size; ++a) {
    auto& s = agents_[a];
    if (s.record_open && out.end_time > s.record_start) close_record(a, out.end_time);
    if (s.occupied) s.occupied_time += out.end_time - s.occupied_since;
  }

  std::vector<std::vector<double>> records;
  for (auto& s : agents_) {
    records.push_back(s.records);
    out.agents.push_back({std::move(s.records), s.occupied_time, s.start});
  }
  auto& m = out.metrics;
  m.avg_idle = average_idle(records);
  for (const auto& r : records) m.idle_records += static_cast<std::int64_t>(r.size());
  m.routes = routes_;
  m.introduced = static_cast<std::int64_t>(requests_.size());
  double wait_sum = 0.0;
  for (const auto& r : requests_) {
    if (r.state == RequestState::served) ++m.served;
    if (r.state == RequestState::expired) ++m.expired;
    wait_sum += r.wait;
  }
  const auto resolved = m.served + m.expired;
  m.avg_wait = resolved ? wait_sum / static_cast<double>(resolved) : 0.0;
  m.expired_pct = m.introduced ? 100.0 * static_cast<double>(m.expired) / static_cast<double>(m.introduced) : 0.0;
  out.requests = std::move(requests_);
  out.log = std::move(log_);
  return out;
}

}  // namespace

SimResult run(const RoadNetwork& net, const std::vector<SimRequest>& requests, const SimConfig& config,
              Planner& planner) {
  Simulation sim(net, requests, config, planner);
  return sim.run();
}

SimMetrics replay_metrics(const std::vector<LogEntry>& log, double mlt) {
  SimMetrics m;
  std::map<int, double> arrival;
  std::map<int, double> wait;
  std::map<int, double> open;
  std::map<int, std::vector<double>> per_agent;
  for (const auto& e : log) {
    switch (e.kind) {
      case LogKind::request_arrival:
        arrival[e.request] = e.time;
        ++m.introduced;
        break;
      case LogKind::pickup:
        wait[e.request] = std::clamp(e.time - arrival.at(e.request), 0.0, mlt);
        ++m.served;
        break;
      case LogKind::request_expiry:
        wait[e.request] = mlt;
        ++m.expired;
        break;
      case LogKind::idle_start:
        open[e.agent] = e.time;
        per_agent[e.agent];
        break;
      case LogKind::idle_end:
        per_agent[e.agent].push_back(e.time - open.at(e.agent));
        break;
      case LogKind::search_route:
        ++m.routes;
        break;
      default:
        break;
    }
  }
  std::vector<std::vector<double>> records;
  for (auto& [agent, r] : per_agent) {
    m.idle_records += static_cast<std::int64_t>(r.size());
    records.push_back(std::move(r));
  }
  m.avg_idle = average_idle(records);
  double wait_sum = 0.0;
  for (const auto& [r, w] : wait) wait_sum += w;
  const auto resolved = m.served + m.expired;
  m.avg_wait = resolved ? wait_sum / static_cast<double>(resolved) : 0.0;
  m.expired_pct = m.introduced ? 100.0 * static_cast<double>(m.expired) / static_cast<double>(m.introduced) : 0.0;
  return m;
}

void write_event_log(const std::filesystem::path& path, const std::vector<LogEntry>& log, const RoadNetwork& net) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "time,seq,kind,agent,request,node\n";
  for (const auto& e : log) {
    out << csv::format_double(e.time) << ',' << e.seq << ',' << to_string(e.kind) << ',';
    if (e.agent >= 0) out << e.agent;
    out << ',';
    if (e.request >= 0) out << e.request;
    out << ',';
    if (e.node >= 0) out << net.external_id(e.node);
    out << '\n';
  }
}

std::vector<LogEntry> read_event_log(const std::filesystem::path& path, const RoadNetwork& net) {
  csv::Reader in(path);
  in.expect_header({"time", "seq", "kind", "agent", "request", "node"});
  std::vector<LogEntry> out;
  std::vector<std::string_view> f;
  while (in.next(f)) {
    if (f.size() != 6) throw ParseError(path.string() + ": expected 6 fields", in.line());
    LogEntry e;
    e.time = csv::to_double(f[0], in.line());
    e.seq = csv::to_int(f[1], in.line());
    e.kind = parse_log_kind(f[2]);
    e.agent = f[3].empty() ? -1 : static_cast<int>(csv::to_int(f[3], in.line()));
    e.request = f[4].empty() ? -1 : static_cast<int>(csv::to_int(f[4], in.line()));
    if (!f[5].empty()) {
      const auto node = net.find_external(csv::to_int(f[5], in.line()));
      if (!node) throw ParseError(path.string() + ": unknown node id", in.line());
      e.node = *node;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace fleetcast
