#include "fleetcast/commands.hpp"

#include <algorithm>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <json.hpp>

#include "fleetcast/context.hpp"
#include "fleetcast/csv.hpp"
#include "fleetcast/drop.hpp"
#include "fleetcast/error.hpp"
#include "fleetcast/forecaster.hpp"
#include "fleetcast/sim.hpp"
#include "fleetcast/stgcsl.hpp"

namespace fleetcast::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // inputs and artifacts
      "nodes", "edges", "trips", "context", "partition", "weights_origin", "weights_destination",
      // partition and binning
      "radius_m", "epsilon", "slot_seconds", "epoch", "top_fraction",
      // split
      "val_days", "test_days", "val_fraction", "test_fraction",
      // model
      "h", "k", "m", "block1_channels", "block2_channels", "head_channels", "dropout", "context_clusters", "lr",
      "lr_decay", "lr_decay_every", "batch_size", "epochs", "models", "resume",
      // planner and forecaster
      "planner", "forecaster", "precomputed", "delta", "gamma", "alpha", "L", "n", "lambda", "score_floor",
      // simulation
      "fleet_size", "mlt_min", "span_start", "span_end", "history_end", "dwell_s", "seed", "seeds", "planners",
      "log_level"};
  return keys;
}

namespace {

StGcslConfig model_config(const RunConfig& c) {
  StGcslConfig m;
  m.h = static_cast<int>(c.integer("h", m.h));
  m.k = static_cast<int>(c.integer("k", m.k));
  m.m = static_cast<int>(c.integer("m", m.k));
  m.block1_channels = static_cast<int>(c.integer("block1_channels", m.block1_channels));
  m.block2_channels = static_cast<int>(c.integer("block2_channels", m.block2_channels));
  m.head_channels = static_cast<int>(c.integer("head_channels", m.head_channels));
  m.dropout = c.number("dropout", m.dropout);
  m.context_clusters = static_cast<int>(c.integer("context_clusters", m.context_clusters));
  m.lr = c.number("lr", m.lr);
  m.lr_decay = c.number("lr_decay", m.lr_decay);
  m.lr_decay_every = static_cast<int>(c.integer("lr_decay_every", m.lr_decay_every));
  m.batch_size = static_cast<int>(c.integer("batch_size", m.batch_size));
  m.epochs = static_cast<int>(c.integer("epochs", m.epochs));
  m.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
  m.validate();
  return m;
}

PlannerConfig planner_config(const RunConfig& c) {
  PlannerConfig p;
  p.delta = c.number("delta", p.delta);
  p.gamma = c.number("gamma", p.gamma);
  p.alpha = c.number("alpha", p.alpha);
  p.L = static_cast<int>(c.integer("L", p.L));
  p.n = static_cast<int>(c.integer("n", p.n));
  p.lambda = c.number("lambda", p.lambda);
  p.score_floor = c.number("score_floor", p.score_floor);
  p.validate();
  return p;
}

std::vector<DemandKind> model_kinds(const RunConfig& c) {
  std::vector<DemandKind> out;
  for (const auto& k : c.list("models", "origin,destination")) {
    if (k == "origin")
      out.push_back(DemandKind::origin);
    else if (k == "destination")
      out.push_back(DemandKind::destination);
    else
      throw ValidationError("models: unknown kind '" + k + "' (expected origin or destination)");
  }
  if (out.empty()) throw ValidationError("models: at least one kind is required");
  return out;
}

const char* kind_name(DemandKind k) { return k == DemandKind::origin ? "origin" : "destination"; }

struct Dataset {
  RoadNetwork net;
  std::vector<TripRecord> trips;
  TimeSlotSpec slots;
  std::int64_t total_slots = 0;
};

Dataset load_dataset(const RunConfig& c) {
  const auto nodes = c.existing_path("nodes");
  const auto edges = c.existing_path("edges");
  const auto trips = c.existing_path("trips");
  const auto context = c.optional_path("context");
  (void)context;
  Dataset ds;
  ds.net = load_network(nodes, edges);
  if (ds.net.empty()) throw ValidationError("road network has no nodes");
  ds.trips = load_trips(trips, ds.net);
  if (ds.trips.empty()) throw ValidationError(trips.string() + ": no trips");
  std::stable_sort(ds.trips.begin(), ds.trips.end(),
                   [](const auto& a, const auto& b) { return a.pickup_time < b.pickup_time; });
  const Timestamp first = ds.trips.front().pickup_time;
  const Timestamp epoch = c.has("epoch") ? parse_timestamp(*c.get("epoch")) : floor_div(first, 86400) * 86400;
  ds.slots = TimeSlotSpec::make(c.integer("slot_seconds", 300), epoch);
  const Timestamp last = ds.trips.back().pickup_time;
  if (last < epoch) throw ValidationError("epoch lies after every trip");
  ds.total_slots = (floor_div(last - epoch, 86400) + 1) * ds.slots.slots_per_day;
  return ds;
}

DataSplit split_for(const RunConfig& c, std::int64_t total, int spd) {
  return DataSplit::by_days(total, spd, static_cast<int>(c.integer("val_days", 5)),
                            static_cast<int>(c.integer("test_days", 5)), c.number("val_fraction", 0.15),
                            c.number("test_fraction", 0.15));
}

DemandMatrix bin(const Dataset& ds, const HexGrid& grid, DemandKind kind, std::int64_t slots) {
  return bin_requests(ds.trips, grid, ds.slots, slots, kind).matrix;
}

Partition build_partition(const RunConfig& c, const Dataset& ds) {
  const double radius = c.number("radius_m", 500.0);
  const double eps = c.number("epsilon", 0.7);
  if (!(radius > 0)) throw ValidationError("radius_m must be positive");
  if (!(eps >= -1.0 && eps <= 1.0)) throw ValidationError("epsilon must lie in [-1, 1]");
  Partition p;
  p.grid = build_hex_partition(ds.net, radius);
  const auto split = split_for(c, ds.total_slots, ds.slots.slots_per_day);
  const auto origins = bin(ds, p.grid, DemandKind::origin, ds.total_slots);
  p.graph = build_correlation_graph(p.grid, origins.rows(0, std::max<Eigen::Index>(split.train_end, 2)), eps);
  return p;
}

Partition obtain_partition(const RunConfig& c, const Dataset& ds, const fs::path& out) {
  Partition p;
  if (c.has("partition"))
    p = load_partition(c.existing_path("partition"));
  else if (fs::exists(out / "partition.json"))
    p = load_partition(out / "partition.json");
  else
    return build_partition(c, ds);
  if (p.grid.node_count() != ds.net.node_count())
    throw ValidationError("partition covers " + std::to_string(p.grid.node_count()) + " nodes but the network has " +
                          std::to_string(ds.net.node_count()));
  return p;
}

/// Clusters the dataset span, then classifies any later slots with the same centroids.
std::vector<int> context_labels(const RunConfig& c, const Dataset& ds, int clusters, std::uint64_t seed,
                                std::int64_t slots) {
  std::vector<ContextObservation> obs;
  if (auto p = c.optional_path("context")) obs = load_context(*p);
  const auto total = std::max(slots, ds.total_slots);
  const auto features = build_context_features(ds.slots, total, obs);
  const std::vector<ContextFeature> fit(features.begin(), features.begin() + ds.total_slots);
  const auto cl = cluster_context(fit, clusters, seed);
  auto labels = cl.labels;
  for (auto j = ds.total_slots; j < total; ++j) labels.push_back(cl.classify(features[static_cast<std::size_t>(j)]));
  return labels;
}

json metrics_json(const ForecastMetrics& m) {
  return {{"mape_pct", m.mape_pct}, {"mae", m.mae}, {"rmse", m.rmse}, {"count", m.count}, {"mape_count", m.mape_count}};
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

fs::path weights_path(const RunConfig& c, const fs::path& out, DemandKind kind) {
  const std::string key = std::string("weights_") + kind_name(kind);
  if (c.has(key)) return c.existing_path(key);
  auto p = out / ("weights_" + std::string(kind_name(kind)) + ".bin");
  if (!fs::exists(p)) throw ValidationError("missing weights: " + p.string() + " (run train first or set " + key + ")");
  return p;
}

}  // namespace

void cmd_partition(const RunConfig& c, const fs::path& out, std::ostream& report) {
  const auto ds = load_dataset(c);
  const auto p = build_partition(c, ds);
  save_partition(out / "partition.json", p);
  report << fmt::format("partition: {} nodes, {} regions, {} graph edges (epsilon {})\n", ds.net.node_count(),
                        p.grid.region_count(), p.graph.edge_count(), p.graph.epsilon);
}

void cmd_train(const RunConfig& c, const fs::path& out, std::ostream& report) {
  const auto cfg = model_config(c);
  const auto kinds = model_kinds(c);
  const bool resume = c.flag("resume", false);
  const auto ds = load_dataset(c);
  const auto part = obtain_partition(c, ds, out);
  const auto split = split_for(c, ds.total_slots, ds.slots.slots_per_day);
  const auto labels = context_labels(c, ds, cfg.context_clusters, cfg.seed, ds.total_slots);

  json summary;
  for (auto kind : kinds) {
    const std::string name = kind_name(kind);
    const auto counts = bin(ds, part.grid, kind, ds.total_slots).counts;
    const TrainInputs in{counts, labels, part.graph.adjacency, split};
    const auto ckpt_path = out / ("checkpoint_" + name + ".bin");
    TrainCheckpoint ckpt;
    if (resume && fs::exists(ckpt_path)) {
      const auto prior = load_checkpoint(ckpt_path, cfg, counts.cols());
      ckpt = train(in, cfg, &prior);
    } else {
      ckpt = train(in, cfg);
    }
    save_checkpoint(ckpt_path, cfg, ckpt);
    save_weights(out / ("weights_" + name + ".bin"), cfg, ckpt.best);
    std::ofstream log(out / ("train_log_" + name + ".csv"));
    log << "epoch,train_loss,val_loss,lr\n";
    for (const auto& e : ckpt.log)
      log << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.val_loss) << ','
          << csv::format_double(e.lr) << '\n';

    json entry{{"epochs", ckpt.epochs_done}, {"best_val_loss", ckpt.best_val}};
    const auto targets = window_targets(cfg, split.train_end, split.val_end);
    if (!targets.empty()) {
      const auto pred = rolling_forecasts(ckpt.best, cfg, part.graph.adjacency, counts, labels, targets, 1);
      Eigen::MatrixXd truth(static_cast<Eigen::Index>(targets.size()), counts.cols());
      for (std::size_t r = 0; r < targets.size(); ++r)
        truth.row(static_cast<Eigen::Index>(r)) = counts.row(targets[r]).cast<double>();
      const auto m = forecast_metrics(pred[0], truth);
      entry["validation"] = metrics_json(m);
      report << fmt::format("train {}: {} epochs, best val loss {:.6g}, val MAPE {:.3f}%, MAE {:.4g}, RMSE {:.4g}\n",
                            name, ckpt.epochs_done, ckpt.best_val, m.mape_pct, m.mae, m.rmse);
    } else {
      report << fmt::format("train {}: {} epochs (no validation windows)\n", name, ckpt.epochs_done);
    }
    summary[name] = entry;
  }
  write_json(out / "train_summary.json", summary);
}

void cmd_eval_forecast(const RunConfig& c, const fs::path& out, std::ostream& report) {
  const auto kinds = model_kinds(c);
  const auto ds = load_dataset(c);
  const auto part = obtain_partition(c, ds, out);
  const auto split = split_for(c, ds.total_slots, ds.slots.slots_per_day);
  const auto origins = bin(ds, part.grid, DemandKind::origin, ds.total_slots);
  const auto dests = bin(ds, part.grid, DemandKind::destination, ds.total_slots);
  auto ha = ha_fit(origins, dests, ds.slots, split.val_end);
  constexpr int kSteps = 3;

  json doc;
  for (auto kind : kinds) {
    const std::string name = kind_name(kind);
    const auto model = load_weights(weights_path(c, out, kind), part.grid.region_count());
    const auto& cfg = model.config;
    const auto labels = context_labels(c, ds, cfg.context_clusters, cfg.seed, ds.total_slots);
    const auto& counts = kind == DemandKind::origin ? origins.counts : dests.counts;
    const auto targets = window_targets(cfg, std::max<Eigen::Index>(split.val_end, cfg.h + kSteps - 1), split.total);
    if (targets.empty()) throw ValidationError("no test windows to evaluate");
    const auto pred = rolling_forecasts(model.weights, cfg, part.graph.adjacency, counts, labels, targets, kSteps);
    Eigen::MatrixXd truth(static_cast<Eigen::Index>(targets.size()), counts.cols());
    Eigen::MatrixXd ha_pred(truth.rows(), truth.cols());
    for (std::size_t r = 0; r < targets.size(); ++r) {
      truth.row(static_cast<Eigen::Index>(r)) = counts.row(targets[r]).cast<double>();
      ha_pred.row(static_cast<Eigen::Index>(r)) = ha.predict(kind, targets[r] - 1, 1).row(0);
    }
    json entry{{"test_windows", targets.size()}};
    for (int s = 1; s <= kSteps; ++s) {
      const auto ms = forecast_metrics(pred[s - 1], truth);
      const auto mh = forecast_metrics(ha_pred, truth);
      entry["horizon_" + std::to_string(s)] = {{"stgcsl", metrics_json(ms)}, {"ha", metrics_json(mh)}};
      report << fmt::format("{} horizon {}: ST-GCSL MAPE {:.3f}% MAE {:.4g} RMSE {:.4g} | HA MAPE {:.3f}% MAE {:.4g} RMSE {:.4g}\n",
                            name, s, ms.mape_pct, ms.mae, ms.rmse, mh.mape_pct, mh.mae, mh.rmse);
    }
    doc[name] = entry;
  }
  write_json(out / "forecast_metrics.json", doc);
}

namespace {

/// Everything a simulation run needs that does not depend on the planner seed.
struct SimSetup {
  Dataset ds;
  Partition part;
  std::vector<SimRequest> requests;
  SimConfig sim;
  PlannerConfig planner;
  TopNodeTable top;
  std::unique_ptr<HistoricalAverage> ha;
  DemandMatrix origins, destinations;
  std::int64_t live_start = 0;
  std::vector<int> labels;
  std::string forecaster;
  bool precomputed = false;
  std::optional<LoadedModel> origin_model, destination_model;
};

SimSetup prepare_simulation(const RunConfig& c, const fs::path& out) {
  SimSetup s;
  s.planner = planner_config(c);
  s.forecaster = c.text("forecaster", "ha");
  if (s.forecaster != "ha" && s.forecaster != "stgcsl")
    throw ValidationError("forecaster must be 'ha' or 'stgcsl', got '" + s.forecaster + "'");
  for (const auto& p : c.list("planners", c.text("planner", "drop")))
    if (p != "drop" && p != "rd") throw ValidationError("planner must be 'drop' or 'rd', got '" + p + "'");
  s.precomputed = c.flag("precomputed", false);
  s.sim.fleet_size = static_cast<int>(c.integer("fleet_size", 1000));
  s.sim.mlt = c.number("mlt_min", 10.0) * 60.0;
  if (!c.has("span_start") || !c.has("span_end")) throw ValidationError("span_start and span_end are required");
  s.sim.span_start = parse_timestamp(*c.get("span_start"));
  s.sim.span_end = parse_timestamp(*c.get("span_end"));
  s.sim.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
  s.sim.dwell = c.number("dwell_s", static_cast<double>(c.integer("slot_seconds", 300)));
  s.sim.validate();
  const Timestamp history_end = c.has("history_end") ? parse_timestamp(*c.get("history_end")) : s.sim.span_start;
  const double top_fraction = c.number("top_fraction", 0.15);
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ValidationError("top_fraction must lie in (0, 1]");

  s.ds = load_dataset(c);
  s.part = obtain_partition(c, s.ds, out);
  const auto& grid = s.part.grid;
  const auto& slots = s.ds.slots;

  std::vector<TripRecord> history;
  for (const auto& t : s.ds.trips) {
    if (t.pickup_time < history_end) history.push_back(t);
    if (t.pickup_time >= s.sim.span_start && t.pickup_time < s.sim.span_end)
      s.requests.push_back({t.pickup_time, t.dropoff_time, t.origin, t.destination});
  }
  const auto history_slots = slots.slot_index(history_end);
  const auto horizon_slots = std::max(s.ds.total_slots, slots.slot_index(s.sim.span_end) + 1);
  s.origins = bin(s.ds, grid, DemandKind::origin, horizon_slots);
  s.destinations = bin(s.ds, grid, DemandKind::destination, horizon_slots);
  s.ha = std::make_unique<HistoricalAverage>(ha_fit(s.origins, s.destinations, slots, history_slots));
  s.top = top_nodes_per_region(history, grid, slots, top_fraction);
  s.live_start = slots.slot_index(s.sim.span_start);
  if (s.forecaster == "stgcsl") {
    s.origin_model = load_weights(weights_path(c, out, DemandKind::origin), grid.region_count());
    s.destination_model = load_weights(weights_path(c, out, DemandKind::destination), grid.region_count());
    const auto& cfg = s.origin_model->config;
    s.labels = context_labels(c, s.ds, cfg.context_clusters, cfg.seed, horizon_slots);
  }
  return s;
}

SimResult simulate_once(const SimSetup& s, const std::string& planner_name, std::uint64_t seed) {
  SimConfig sim = s.sim;
  sim.seed = seed;
  if (planner_name == "rd") {
    RandomDestinationPlanner rd(s.ds.net);
    return run(s.ds.net, s.requests, sim, rd);
  }
  std::unique_ptr<ForecastProvider> provider;
  if (s.forecaster == "stgcsl") {
    StgcslProvider::Options opt;
    opt.live_start = s.live_start;
    opt.precomputed = s.precomputed;
    provider = std::make_unique<StgcslProvider>(*s.origin_model, *s.destination_model, s.part.graph.adjacency,
                                                s.origins, s.destinations, s.labels, opt);
  } else {
    provider = std::make_unique<HistoricalAverage>(*s.ha);
  }
  DropPlanner drop(s.ds.net, s.part.grid, *provider, s.top, s.ds.slots, s.planner);
  return run(s.ds.net, s.requests, sim, drop);
}

json sim_json(const SimMetrics& m) {
  return {{"avg_idle_s", m.avg_idle},       {"avg_wait_s", m.avg_wait}, {"expired_pct", m.expired_pct},
          {"introduced", m.introduced},     {"served", m.served},       {"expired", m.expired},
          {"idle_records", m.idle_records}, {"routes", m.routes}};
}

}  // namespace

void cmd_simulate(const RunConfig& c, const fs::path& out, std::ostream& report) {
  const auto planner = c.text("planner", "drop");
  const auto setup = prepare_simulation(c, out);
  const auto result = simulate_once(setup, planner, setup.sim.seed);
  json doc = sim_json(result.metrics);
  doc["planner"] = planner;
  doc["forecaster"] = planner == "rd" ? "none" : setup.forecaster;
  doc["seed"] = setup.sim.seed;
  doc["fleet_size"] = setup.sim.fleet_size;
  doc["mlt_s"] = setup.sim.mlt;
  write_json(out / "metrics.json", doc);
  write_event_log(out / "events.csv", result.log, setup.ds.net);
  const auto& m = result.metrics;
  report << fmt::format("simulate {}: {} requests, avg idle {:.3f} s, avg wait {:.3f} s, expired {:.3f}%\n", planner,
                        m.introduced, m.avg_idle, m.avg_wait, m.expired_pct);
}

void cmd_compare(const RunConfig& c, const fs::path& out, std::ostream& report) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : c.list("seeds", "1,2,3,4,5")) {
    try {
      seeds.push_back(static_cast<std::uint64_t>(csv::to_int(s, 0)));
    } catch (const std::exception&) {
      throw ValidationError("seeds: '" + s + "' is not an integer");
    }
  }
  if (seeds.empty()) throw ValidationError("seeds: at least one seed is required");
  const auto planners = c.list("planners", "drop,rd");
  if (planners.empty()) throw ValidationError("planners: at least one planner is required");
  const auto setup = prepare_simulation(c, out);

  std::ofstream csv_out(out / "compare.csv");
  if (!csv_out) throw ValidationError("cannot write " + (out / "compare.csv").string());
  csv_out << "planner,seed,avg_idle_s,avg_wait_s,expired_pct\n";
  for (const auto& planner : planners) {
    double idle = 0, wait = 0, expired = 0;
    for (auto seed : seeds) {
      const auto m = simulate_once(setup, planner, seed).metrics;
      csv_out << planner << ',' << seed << ',' << csv::format_double(m.avg_idle) << ','
              << csv::format_double(m.avg_wait) << ',' << csv::format_double(m.expired_pct) << '\n';
      idle += m.avg_idle;
      wait += m.avg_wait;
      expired += m.expired_pct;
    }
    const double n = static_cast<double>(seeds.size());
    csv_out << planner << ",mean," << csv::format_double(idle / n) << ',' << csv::format_double(wait / n) << ','
            << csv::format_double(expired / n) << '\n';
    report << fmt::format("{}: mean idle {:.3f} s, mean wait {:.3f} s, mean expired {:.3f}% over {} seeds\n", planner,
                          idle / n, wait / n, expired / n, seeds.size());
  }
}

void run_command(const std::string& name, const RunConfig& config, const fs::path& out, std::ostream& report) {
  config.check_known(known_keys());
  fs::create_directories(out);
  if (name == "partition")
    cmd_partition(config, out, report);
  else if (name == "train")
    cmd_train(config, out, report);
  else if (name == "eval-forecast")
    cmd_eval_forecast(config, out, report);
  else if (name == "simulate")
    cmd_simulate(config, out, report);
  else if (name == "compare")
    cmd_compare(config, out, report);
  else
    throw ValidationError("unknown command '" + name + "'");
}

}  // namespace fleetcast::cli
