#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fleetcast/synth.hpp"
#include "fleetcast/timeutil.hpp"

namespace fs = std::filesystem;
using namespace fleetcast;

namespace {

void write_all(const fs::path& dir, const RoadNetwork& net, const std::vector<TripRecord>& trips) {
  fs::create_directories(dir);
  synth::write_network(dir / "nodes.csv", dir / "edges.csv", net);
  synth::write_trips(dir / "trips.csv", trips, net);
  std::cout << net.node_count() << " nodes, " << trips.size() << " trips written to " << dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic road networks and trip records"};
  app.require_subcommand(1);
  std::string out = ".";
  std::uint64_t seed = 1;
  int days = 8;
  int slot_seconds = 900;

  auto* planted = app.add_subcommand("planted", "Correlated demand with daily periodicity on the 50-region lattice");
  auto* periodic = app.add_subcommand("periodic", "Noise-free repeating demand on a small lattice");
  int rows = 6, cols = 6;
  periodic->add_option("--rows", rows, "Lattice rows");
  periodic->add_option("--cols", cols, "Lattice columns");
  auto* scenario = app.add_subcommand("scenario", "Concentrated demand plus a matching simulation config");
  double trips_per_day = 3500.0;
  scenario->add_option("--trips-per-day", trips_per_day, "Mean trips per day");
  for (auto* sub : {planted, periodic, scenario}) {
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--days", days, "Days of trips");
    sub->add_option("--slot-seconds", slot_seconds, "Slot length in seconds");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (*planted) {
      auto net = synth::grid_network(25, 27, 200.0, 8.0, {40.70, -74.00}, 40.0, 7);
      const auto grid = build_hex_partition(net, 500.0);
      synth::PlantedDemandConfig pc;
      pc.regions = static_cast<int>(grid.region_count());
      pc.days = days;
      pc.slots_per_day = 86400 / slot_seconds;
      pc.seed = seed;
      const auto counts = synth::planted_demand(pc);
      write_all(out, net, synth::trips_from_counts(net, grid, TimeSlotSpec::make(slot_seconds, 0), counts, seed));
    } else if (*periodic) {
      auto net = synth::grid_network(rows, cols, 200.0, 8.0, {40.70, -74.00});
      const auto grid = build_hex_partition(net, 500.0);
      const auto counts = synth::periodic_demand(static_cast<int>(grid.region_count()), days, 86400 / slot_seconds, seed);
      write_all(out, net, synth::trips_from_counts(net, grid, TimeSlotSpec::make(slot_seconds, 0), counts, seed));
    } else {
      synth::ConcentratedConfig cc;
      cc.days = days;
      cc.slot_seconds = slot_seconds;
      cc.trips_per_day = trips_per_day;
      cc.seed = seed;
      const auto s = synth::concentrated_scenario(cc);
      write_all(out, s.net, s.trips);
      const Timestamp start = static_cast<Timestamp>(days - 1) * 86400 + 7 * 3600;
      std::ofstream conf(fs::path(out) / "sim.conf");
      conf << "# two simulated hours on the last day\n"
           << "nodes = nodes.csv\nedges = edges.csv\ntrips = trips.csv\n"
           << "radius_m = 500\nslot_seconds = " << slot_seconds << "\n"
           << "span_start = " << format_timestamp(start) << "\n"
           << "span_end = " << format_timestamp(start + 7200) << "\n"
           << "history_end = " << format_timestamp(static_cast<Timestamp>(days - 1) * 86400) << "\n"
           << "fleet_size = 50\nmlt_min = 10\ndwell_s = 900\nL = 2\n"
           << "planner = drop\nforecaster = ha\nseed = 1\nseeds = 1,2,3,4,5,6,7,8,9,10\nplanners = drop,rd\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
