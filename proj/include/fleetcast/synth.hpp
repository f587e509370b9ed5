#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "fleetcast/demand_data.hpp"
#include "fleetcast/roadnet.hpp"

namespace fleetcast::synth {

/// Bidirectional rows x cols lattice; node (r, c) has external id r*cols + c + 1.
/// With jitter, each node moves up to `jitter_m` per axis and edge times follow
/// the great-circle length at `speed_mps`.
RoadNetwork grid_network(int rows, int cols, double spacing_m, double speed_mps, GeoPoint south_west,
                         double jitter_m = 0.0, std::uint64_t seed = 1);

/// Daily profile with morning and evening peaks, normalized to mean 1.
Eigen::VectorXd daily_profile(int slots_per_day);

struct PlantedDemandConfig {
  int regions = 30;
  int days = 30;
  int slots_per_day = 24;
  int groups = 3;           // regions in a group share one demand shock
  double base_min = 40.0;   // per-region mean count range
  double base_max = 160.0;
  double ar = 0.85;         // shock persistence between slots
  double shock_sd = 0.25;
  double day_sd = 0.15;     // day-level multiplicative factor
  std::uint64_t seed = 1;
};

/// Poisson counts [slots x regions] around base · profile · day factor · exp(group shock).
Eigen::MatrixXi planted_demand(const PlantedDemandConfig& cfg);

/// Noise-free counts: round(base_i · profile(slot of day)), identical every day.
Eigen::MatrixXi periodic_demand(int regions, int days, int slots_per_day, std::uint64_t seed);

struct TripConfig {
  TimeSlotSpec slots;
  int days = 1;
  double trips_per_day = 1000.0;
  std::vector<double> origin_weight;       // per region
  std::vector<double> destination_weight;  // per region
  std::uint64_t seed = 1;
};

/// Trips sorted by pickup time; endpoints are uniform nodes of the sampled
/// regions, dropoff time adds the shortest travel time. Unroutable draws are redrawn.
std::vector<TripRecord> generate_trips(const RoadNetwork& net, const HexGrid& grid, const TripConfig& cfg);

/// Turns a count matrix into trips: counts(j, i) pickups in region i during slot j.
std::vector<TripRecord> trips_from_counts(const RoadNetwork& net, const HexGrid& grid, const TimeSlotSpec& slots,
                                          const Eigen::MatrixXi& counts, std::uint64_t seed);

/// Lattice of about 50 hex regions at 500 m radius where a fifth of the regions
/// attract `hot_weight` times the pickups of the rest.
struct ConcentratedConfig {
  int days = 8;
  int slot_seconds = 900;
  double trips_per_day = 3500.0;
  double hot_fraction = 0.2;
  double hot_weight = 16.0;
  std::uint64_t seed = 1;
};

struct Scenario {
  RoadNetwork net;
  HexGrid grid;
  TimeSlotSpec slots;
  std::vector<TripRecord> trips;
};

Scenario concentrated_scenario(const ConcentratedConfig& cfg);

void write_network(const std::filesystem::path& nodes, const std::filesystem::path& edges, const RoadNetwork& net);
void write_trips(const std::filesystem::path& path, const std::vector<TripRecord>& trips, const RoadNetwork& net);

}  // namespace fleetcast::synth
