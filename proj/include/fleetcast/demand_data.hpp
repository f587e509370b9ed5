#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "fleetcast/error.hpp"
#include "fleetcast/roadnet.hpp"
#include "fleetcast/timeutil.hpp"

namespace fleetcast {

using RegionId = std::int32_t;

// ---------------------------------------------------------------------------
// Hexagonal partition
// ---------------------------------------------------------------------------

/// Axial coordinate of a pointy-top hexagon.
struct AxialCoord {
  int q = 0;
  int r = 0;
  auto operator<=>(const AxialCoord&) const = default;
};

int hex_distance(AxialCoord a, AxialCoord b);

/// Pointy-top hex tiling in a local equirectangular projection. Only cells that
/// contain at least one road node become regions; region ids follow the
/// lexicographic (q, r) order of their cells.
class HexGrid {
 public:
  HexGrid() = default;
  HexGrid(GeoPoint origin, double circumradius_m, std::vector<AxialCoord> region_cells,
          std::vector<RegionId> node_region, std::vector<NodeId> center_nodes);

  GeoPoint origin() const { return origin_; }
  double circumradius() const { return radius_; }
  std::size_t region_count() const { return cells_.size(); }
  std::size_t node_count() const { return node_region_.size(); }

  AxialCoord cell(RegionId r) const { return cells_[r]; }
  GeoPoint region_center(RegionId r) const { return cell_center(cells_[r]); }
  /// Road node of the region closest to the hex center.
  NodeId center_node(RegionId r) const { return center_nodes_[r]; }
  const std::vector<NodeId>& region_nodes(RegionId r) const { return region_nodes_[r]; }
  const std::vector<RegionId>& node_regions() const { return node_region_; }
  const std::vector<AxialCoord>& cells() const { return cells_; }
  const std::vector<NodeId>& center_nodes() const { return center_nodes_; }

  /// Region of a node; throws ValidationError for unknown nodes.
  RegionId region_of(NodeId node) const;

  /// Region whose cell has this coordinate, or -1.
  RegionId find(AxialCoord c) const;

  /// Cell containing a point. Points equidistant from two centers go to the
  /// lexicographically smaller (q, r).
  AxialCoord cell_of(GeoPoint p) const;
  GeoPoint cell_center(AxialCoord c) const;

  /// Regions at hex distance exactly `order` (ascending ids). ring(r, 0) = {r}.
  std::vector<RegionId> ring(RegionId r, int order) const;
  /// Union of rings 0..order.
  std::vector<RegionId> within(RegionId r, int order) const;
  /// First-order geographic neighbors, precomputed.
  const std::vector<RegionId>& neighbors(RegionId r) const { return neighbors_[r]; }

 private:
  GeoPoint origin_;
  double radius_ = 0.0;
  std::vector<AxialCoord> cells_;
  std::map<AxialCoord, RegionId> index_;
  std::vector<RegionId> node_region_;
  std::vector<std::vector<NodeId>> region_nodes_;
  std::vector<NodeId> center_nodes_;
  std::vector<std::vector<RegionId>> neighbors_;
};

HexGrid build_hex_partition(const RoadNetwork& net, double circumradius_m);

/// Same as grid.region_of(node).
inline RegionId assign_region(const HexGrid& grid, NodeId node) { return grid.region_of(node); }

// ---------------------------------------------------------------------------
// Time slots and demand matrices
// ---------------------------------------------------------------------------

struct TimeSlotSpec {
  std::int64_t slot_duration = 300;  // seconds
  int slots_per_day = 288;
  Timestamp epoch = 0;  // start of slot 0, expected at midnight UTC

  /// Validated constructor: duration must divide a day.
  static TimeSlotSpec make(std::int64_t slot_duration_s, Timestamp epoch);

  std::int64_t slot_index(Timestamp t) const { return floor_div(t - epoch, slot_duration); }
  double slot_index(double seconds_since_epoch) const;
  Timestamp slot_start(std::int64_t j) const { return epoch + j * slot_duration; }
  int slot_of_day(std::int64_t j) const {
    return static_cast<int>(((j % slots_per_day) + slots_per_day) % slots_per_day);
  }
  int weekday(std::int64_t j) const { return day_of_week(slot_start(j)); }
};

struct TripRecord {
  Timestamp pickup_time = 0;
  Timestamp dropoff_time = 0;
  NodeId origin = 0;
  NodeId destination = 0;
};

/// Reads the trips CSV and snaps both endpoints to the nearest road node.
std::vector<TripRecord> load_trips(const std::filesystem::path& path, const RoadNetwork& net);

enum class DemandKind { origin, destination };

/// counts(j, i): requests in slot j (row) and region i (column).
struct DemandMatrix {
  Eigen::MatrixXi counts;
  DemandKind kind = DemandKind::origin;

  Eigen::Index slots() const { return counts.rows(); }
  Eigen::Index regions() const { return counts.cols(); }
  /// Rows [first, first + count) as a new matrix.
  DemandMatrix rows(Eigen::Index first, Eigen::Index count) const;
};

struct BinnedDemand {
  DemandMatrix matrix;
  std::size_t skipped = 0;  // records outside [0, total_slots)
};

/// Bins records by the endpoint and timestamp selected by `kind`.
BinnedDemand bin_requests(const std::vector<TripRecord>& records, const HexGrid& grid, const TimeSlotSpec& slots,
                          std::int64_t total_slots, DemandKind kind);

// ---------------------------------------------------------------------------
// Region correlation graph
// ---------------------------------------------------------------------------

/// Pearson correlation; 0 when either sequence has zero variance.
template <typename DerivedX, typename DerivedY>
double pearson_similarity(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw ValidationError("pearson_similarity: length mismatch");
  if (x.size() < 2) throw ValidationError("pearson_similarity: need at least 2 samples");
  const Eigen::ArrayXd a = x.derived().template cast<double>().array();
  const Eigen::ArrayXd b = y.derived().template cast<double>().array();
  const Eigen::ArrayXd da = a - a.mean();
  const Eigen::ArrayXd db = b - b.mean();
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  const double r = (da * db).sum() / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

struct RegionCorrelationGraph {
  Eigen::MatrixXi adjacency;  // symmetric 0/1, zero diagonal
  double epsilon = 1.0;

  std::size_t edge_count() const { return static_cast<std::size_t>(adjacency.sum()) / 2; }
};

/// Geographic (shared hex edge) or semantic (Pearson >= epsilon on `origins`) neighbors.
/// `origins` must cover the training span only.
RegionCorrelationGraph build_correlation_graph(const HexGrid& grid, const DemandMatrix& origins, double epsilon);

// ---------------------------------------------------------------------------
// Node-level destination table
// ---------------------------------------------------------------------------

struct WeightedNode {
  NodeId node;
  double weight;
};

/// For each (region, slot-of-day): the busiest ceil(fraction * |region nodes|)
/// nodes by historical origin count, weighted by their average count per day.
class TopNodeTable {
 public:
  TopNodeTable() = default;
  TopNodeTable(std::size_t regions, int slots_per_day) : slots_per_day_(slots_per_day), table_(regions * slots_per_day) {}

  const std::vector<WeightedNode>& nodes(RegionId r, int slot_of_day) const {
    return table_[static_cast<std::size_t>(r) * slots_per_day_ + slot_of_day];
  }
  std::vector<WeightedNode>& nodes(RegionId r, int slot_of_day) {
    return table_[static_cast<std::size_t>(r) * slots_per_day_ + slot_of_day];
  }
  int slots_per_day() const { return slots_per_day_; }

 private:
  int slots_per_day_ = 0;
  std::vector<std::vector<WeightedNode>> table_;
};

/// Cells without any historical request fall back to every node of the region with weight 1.
TopNodeTable top_nodes_per_region(const std::vector<TripRecord>& records, const HexGrid& grid,
                                  const TimeSlotSpec& slots, double fraction = 0.15);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct Partition {
  HexGrid grid;
  RegionCorrelationGraph graph;
};

/// Single JSON document: grid parameters, region cells and centers, node->region map,
/// adjacency as index pairs.
void save_partition(const std::filesystem::path& path, const Partition& partition);
Partition load_partition(const std::filesystem::path& path);

}  // namespace fleetcast
