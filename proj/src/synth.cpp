#include "fleetcast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <numbers>
#include <random>

#include "fleetcast/csv.hpp"
#include "fleetcast/error.hpp"
#include "fleetcast/rng.hpp"

namespace fleetcast::synth {

RoadNetwork grid_network(int rows, int cols, double spacing_m, double speed_mps, GeoPoint sw, double jitter_m,
                         std::uint64_t seed) {
  if (rows < 1 || cols < 1 || !(spacing_m > 0) || !(speed_mps > 0) || !(jitter_m >= 0) || jitter_m >= spacing_m / 2)
    throw ValidationError("invalid grid network");
  constexpr double kEarthRadius = 6371008.8;
  const double deg_per_m = 180.0 / (std::numbers::pi * kEarthRadius);
  const double lon_scale = 1.0 / std::cos(sw.lat * std::numbers::pi / 180.0);
  Rng rng = make_stream(seed, "grid");
  RoadNetwork net;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double y = r * spacing_m, x = c * spacing_m;
      if (jitter_m > 0) {
        y += (2 * uniform01(rng) - 1) * jitter_m;
        x += (2 * uniform01(rng) - 1) * jitter_m;
      }
      net.add_node(r * cols + c + 1, {sw.lat + y * deg_per_m, sw.lon + x * deg_per_m * lon_scale});
    }
  auto link = [&](NodeId u, NodeId v) {
    const double t = jitter_m > 0 ? haversine_m(net.position(u), net.position(v)) / speed_mps : spacing_m / speed_mps;
    net.add_edge(u, v, t);
    net.add_edge(v, u, t);
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const NodeId v = r * cols + c;
      if (c + 1 < cols) link(v, v + 1);
      if (r + 1 < rows) link(v, v + cols);
    }
  return net;
}

Eigen::VectorXd daily_profile(int spd) {
  Eigen::VectorXd p(spd);
  for (int s = 0; s < spd; ++s) {
    const double hour = 24.0 * (s + 0.5) / spd;
    auto bump = [&](double mu, double sd) { return std::exp(-0.5 * std::pow((hour - mu) / sd, 2)); };
    p(s) = 0.25 + 1.2 * bump(8.5, 1.5) + 1.0 * bump(18.0, 2.0) + 0.5 * bump(13.0, 2.5);
  }
  return p / p.mean();
}

Eigen::MatrixXi planted_demand(const PlantedDemandConfig& cfg) {
  if (cfg.regions < 1 || cfg.days < 1 || cfg.slots_per_day < 1 || cfg.groups < 1)
    throw ValidationError("invalid planted demand config");
  Rng rng = make_stream(cfg.seed, "planted");
  std::normal_distribution<double> normal(0.0, 1.0);
  const int slots = cfg.days * cfg.slots_per_day;
  Eigen::VectorXd base(cfg.regions);
  for (int i = 0; i < cfg.regions; ++i) base(i) = cfg.base_min + (cfg.base_max - cfg.base_min) * uniform01(rng);
  const auto profile = daily_profile(cfg.slots_per_day);
  std::vector<double> shock(cfg.groups, 0.0);
  const double innovation = cfg.shock_sd * std::sqrt(1.0 - cfg.ar * cfg.ar);
  Eigen::MatrixXi out(slots, cfg.regions);
  double day_factor = 1.0;
  for (int j = 0; j < slots; ++j) {
    if (j % cfg.slots_per_day == 0) day_factor = std::exp(cfg.day_sd * normal(rng));
    for (auto& s : shock) s = cfg.ar * s + innovation * normal(rng);
    for (int i = 0; i < cfg.regions; ++i) {
      const int g = i * cfg.groups / cfg.regions;
      const double rate = base(i) * profile(j % cfg.slots_per_day) * day_factor * std::exp(shock[g]);
      out(j, i) = std::poisson_distribution<int>(rate)(rng);
    }
  }
  return out;
}

namespace {

std::size_t weighted_pick(const std::vector<double>& w, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.size() - 1;
}

NodeId random_node(const HexGrid& grid, RegionId r, Rng& rng) {
  const auto& nodes = grid.region_nodes(r);
  return nodes[uniform_index(rng, nodes.size())];
}

}  // namespace

std::vector<TripRecord> generate_trips(const RoadNetwork& net, const HexGrid& grid, const TripConfig& cfg) {
  const auto n = grid.region_count();
  if (cfg.origin_weight.size() != n || cfg.destination_weight.size() != n)
    throw ValidationError("trip weights must have one entry per region");
  Rng rng = make_stream(cfg.seed, "trips");
  const auto profile = daily_profile(cfg.slots.slots_per_day);
  double ow = 0, dw = 0;
  for (double w : cfg.origin_weight) ow += w;
  for (double w : cfg.destination_weight) dw += w;
  std::vector<TripRecord> out;
  for (int day = 0; day < cfg.days; ++day)
    for (int s = 0; s < cfg.slots.slots_per_day; ++s) {
      const std::int64_t j = static_cast<std::int64_t>(day) * cfg.slots.slots_per_day + s;
      const double mean = cfg.trips_per_day * profile(s) / cfg.slots.slots_per_day;
      const int count = std::poisson_distribution<int>(mean)(rng);
      std::vector<TripRecord> slot_trips;
      for (int k = 0; k < count; ++k) {
        for (int attempt = 0; attempt < 100; ++attempt) {
          const NodeId o = random_node(grid, static_cast<RegionId>(weighted_pick(cfg.origin_weight, ow, rng)), rng);
          const NodeId d =
              random_node(grid, static_cast<RegionId>(weighted_pick(cfg.destination_weight, dw, rng)), rng);
          const auto t = shortest_travel_time(net, o, d);
          if (!t) continue;
          const Timestamp pickup =
              cfg.slots.slot_start(j) + static_cast<Timestamp>(uniform_index(rng, cfg.slots.slot_duration));
          slot_trips.push_back({pickup, pickup + static_cast<Timestamp>(std::ceil(*t)), o, d});
          break;
        }
      }
      std::stable_sort(slot_trips.begin(), slot_trips.end(),
                       [](const auto& a, const auto& b) { return a.pickup_time < b.pickup_time; });
      out.insert(out.end(), slot_trips.begin(), slot_trips.end());
    }
  return out;
}

std::vector<TripRecord> trips_from_counts(const RoadNetwork& net, const HexGrid& grid, const TimeSlotSpec& slots,
                                          const Eigen::MatrixXi& counts, std::uint64_t seed) {
  if (counts.cols() != static_cast<Eigen::Index>(grid.region_count()))
    throw ShapeError("count matrix does not match the partition");
  Rng rng = make_stream(seed, "trips");
  std::vector<TripRecord> out;
  const auto all = static_cast<std::size_t>(net.node_count());
  for (Eigen::Index j = 0; j < counts.rows(); ++j) {
    std::vector<TripRecord> slot_trips;
    for (Eigen::Index i = 0; i < counts.cols(); ++i)
      for (int k = 0; k < counts(j, i); ++k) {
        const NodeId o = random_node(grid, static_cast<RegionId>(i), rng);
        const NodeId d = static_cast<NodeId>(uniform_index(rng, all));
        const Timestamp pickup = slots.slot_start(j) + static_cast<Timestamp>(uniform_index(rng, slots.slot_duration));
        const auto dist = haversine_m(net.position(o), net.position(d));
        slot_trips.push_back({pickup, pickup + 60 + static_cast<Timestamp>(dist / 8.0), o, d});
      }
    std::stable_sort(slot_trips.begin(), slot_trips.end(),
                     [](const auto& a, const auto& b) { return a.pickup_time < b.pickup_time; });
    out.insert(out.end(), slot_trips.begin(), slot_trips.end());
  }
  return out;
}

Eigen::MatrixXi periodic_demand(int regions, int days, int slots_per_day, std::uint64_t seed) {
  if (regions < 1 || days < 1 || slots_per_day < 1) throw ValidationError("periodic demand needs positive sizes");
  Rng rng = make_stream(seed, "periodic");
  std::uniform_real_distribution<double> base(20.0, 60.0);
  Eigen::VectorXd b(regions);
  for (auto& v : b) v = base(rng);
  const auto profile = daily_profile(slots_per_day);
  Eigen::MatrixXi out(static_cast<Eigen::Index>(days) * slots_per_day, regions);
  for (Eigen::Index j = 0; j < out.rows(); ++j)
    for (int i = 0; i < regions; ++i)
      out(j, i) = std::max(1, static_cast<int>(std::lround(b(i) * profile(j % slots_per_day))));
  return out;
}

Scenario concentrated_scenario(const ConcentratedConfig& cfg) {
  Scenario s;
  s.net = grid_network(25, 27, 200.0, 8.0, {40.70, -74.00}, 40.0, 7);
  s.grid = build_hex_partition(s.net, 500.0);
  s.slots = TimeSlotSpec::make(cfg.slot_seconds, 0);
  const auto n = s.grid.region_count();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng = make_stream(cfg.seed, "hot");
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<double> ow(n, 1.0), dw(n, 1.0);
  const auto hot = static_cast<std::size_t>(cfg.hot_fraction * static_cast<double>(n));
  for (std::size_t k = 0; k < hot; ++k) ow[ids[k]] = cfg.hot_weight;
  s.trips = generate_trips(s.net, s.grid, {s.slots, cfg.days, cfg.trips_per_day, ow, dw, cfg.seed});
  return s;
}

void write_network(const std::filesystem::path& nodes, const std::filesystem::path& edges, const RoadNetwork& net) {
  std::ofstream n(nodes), e(edges);
  if (!n || !e) throw ValidationError("cannot write network files");
  n << "node_id,lat,lon\n";
  e << "from,to,travel_time_s\n";
  for (NodeId v = 0; v < static_cast<NodeId>(net.node_count()); ++v) {
    n << net.external_id(v) << ',' << csv::format_double(net.position(v).lat) << ','
      << csv::format_double(net.position(v).lon) << '\n';
    for (const auto& edge : net.out_edges(v))
      e << net.external_id(v) << ',' << net.external_id(edge.to) << ',' << csv::format_double(edge.travel_time)
        << '\n';
  }
}

void write_trips(const std::filesystem::path& path, const std::vector<TripRecord>& trips, const RoadNetwork& net) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "pickup_datetime,pickup_lat,pickup_lon,dropoff_datetime,dropoff_lat,dropoff_lon\n";
  for (const auto& t : trips) {
    const auto o = net.position(t.origin), d = net.position(t.destination);
    out << format_timestamp(t.pickup_time) << ',' << csv::format_double(o.lat) << ',' << csv::format_double(o.lon)
        << ',' << format_timestamp(t.dropoff_time) << ',' << csv::format_double(d.lat) << ','
        << csv::format_double(d.lon) << '\n';
  }
}

}  // namespace fleetcast::synth
