#include "fleetcast/demand_data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <string>

#include "fleetcast/csv.hpp"

namespace fleetcast {
namespace {

constexpr double kEarthRadius = 6371008.8;
constexpr double kRad = 3.14159265358979323846 / 180.0;
const double kSqrt3 = std::sqrt(3.0);

constexpr std::array<AxialCoord, 6> kHexDirections{
    {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}}};

struct Planar {
  double x;
  double y;
};

Planar project(GeoPoint origin, GeoPoint p) {
  return {kEarthRadius * (p.lon - origin.lon) * kRad * std::cos(origin.lat * kRad),
          kEarthRadius * (p.lat - origin.lat) * kRad};
}

GeoPoint unproject(GeoPoint origin, Planar p) {
  return {origin.lat + p.y / (kEarthRadius * kRad),
          origin.lon + p.x / (kEarthRadius * kRad * std::cos(origin.lat * kRad))};
}

Planar axial_center(AxialCoord c, double size) {
  return {size * kSqrt3 * (c.q + c.r / 2.0), size * 1.5 * c.r};
}

AxialCoord cube_round(double fq, double fr) {
  const double fs = -fq - fr;
  double q = std::round(fq), r = std::round(fr), s = std::round(fs);
  const double dq = std::abs(q - fq), dr = std::abs(r - fr), ds = std::abs(s - fs);
  if (dq > dr && dq > ds)
    q = -r - s;
  else if (dr > ds)
    r = -q - s;
  return {static_cast<int>(q), static_cast<int>(r)};
}

}  // namespace

int hex_distance(AxialCoord a, AxialCoord b) {
  const int dq = a.q - b.q, dr = a.r - b.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

HexGrid::HexGrid(GeoPoint origin, double circumradius_m, std::vector<AxialCoord> region_cells,
                 std::vector<RegionId> node_region, std::vector<NodeId> center_nodes)
    : origin_(origin),
      radius_(circumradius_m),
      cells_(std::move(region_cells)),
      node_region_(std::move(node_region)),
      center_nodes_(std::move(center_nodes)) {
  if (!(radius_ > 0.0)) throw ValidationError("hex circumradius must be positive");
  if (center_nodes_.size() != cells_.size()) throw ValidationError("center node list does not match region count");
  for (std::size_t r = 0; r < cells_.size(); ++r) {
    if (!index_.emplace(cells_[r], static_cast<RegionId>(r)).second)
      throw ValidationError("duplicate hex cell for region " + std::to_string(r));
  }
  region_nodes_.assign(cells_.size(), {});
  for (std::size_t v = 0; v < node_region_.size(); ++v) {
    const auto r = node_region_[v];
    if (r < 0 || static_cast<std::size_t>(r) >= cells_.size())
      throw ValidationError("node " + std::to_string(v) + " maps to unknown region " + std::to_string(r));
    region_nodes_[r].push_back(static_cast<NodeId>(v));
  }
  neighbors_.resize(cells_.size());
  for (std::size_t r = 0; r < cells_.size(); ++r) {
    if (region_nodes_[r].empty()) throw ValidationError("region " + std::to_string(r) + " has no nodes");
    for (const auto& d : kHexDirections) {
      const auto n = find({cells_[r].q + d.q, cells_[r].r + d.r});
      if (n >= 0) neighbors_[r].push_back(n);
    }
    std::sort(neighbors_[r].begin(), neighbors_[r].end());
  }
}

RegionId HexGrid::region_of(NodeId node) const {
  if (node < 0 || static_cast<std::size_t>(node) >= node_region_.size())
    throw ValidationError("unknown node " + std::to_string(node));
  return node_region_[node];
}

RegionId HexGrid::find(AxialCoord c) const {
  auto it = index_.find(c);
  return it == index_.end() ? -1 : it->second;
}

AxialCoord HexGrid::cell_of(GeoPoint p) const {
  const Planar xy = project(origin_, p);
  const double fq = (kSqrt3 / 3.0 * xy.x - xy.y / 3.0) / radius_;
  const double fr = (2.0 / 3.0 * xy.y) / radius_;
  const AxialCoord base = cube_round(fq, fr);

  // The containing hexagon is the nearest lattice center; check the rounded
  // cell and its ring so boundary points resolve by the documented tie rule.
  const double tol = 1e-9 * radius_;
  AxialCoord best = base;
  double best_d = std::hypot(xy.x - axial_center(base, radius_).x, xy.y - axial_center(base, radius_).y);
  for (const auto& d : kHexDirections) {
    const AxialCoord c{base.q + d.q, base.r + d.r};
    const Planar cc = axial_center(c, radius_);
    const double dist = std::hypot(xy.x - cc.x, xy.y - cc.y);
    if (dist < best_d - tol || (std::abs(dist - best_d) <= tol && c < best)) {
      best = c;
      best_d = std::min(dist, best_d);
    }
  }
  return best;
}

GeoPoint HexGrid::cell_center(AxialCoord c) const { return unproject(origin_, axial_center(c, radius_)); }

std::vector<RegionId> HexGrid::ring(RegionId r, int order) const {
  std::vector<RegionId> out;
  if (order < 0) return out;
  for (std::size_t k = 0; k < cells_.size(); ++k)
    if (hex_distance(cells_[r], cells_[k]) == order) out.push_back(static_cast<RegionId>(k));
  return out;
}

std::vector<RegionId> HexGrid::within(RegionId r, int order) const {
  std::vector<RegionId> out;
  for (std::size_t k = 0; k < cells_.size(); ++k)
    if (hex_distance(cells_[r], cells_[k]) <= order) out.push_back(static_cast<RegionId>(k));
  return out;
}

HexGrid build_hex_partition(const RoadNetwork& net, double circumradius_m) {
  if (!(circumradius_m > 0.0)) throw ValidationError("hex circumradius must be positive");
  if (net.empty()) throw ValidationError("cannot partition an empty network");

  GeoPoint origin{0.0, 0.0};
  for (NodeId v = 0; v < static_cast<NodeId>(net.node_count()); ++v) {
    origin.lat += net.position(v).lat;
    origin.lon += net.position(v).lon;
  }
  origin.lat /= static_cast<double>(net.node_count());
  origin.lon /= static_cast<double>(net.node_count());

  // Temporary grid (no regions) just for cell_of.
  HexGrid probe(origin, circumradius_m, {}, {}, {});
  std::vector<AxialCoord> node_cell(net.node_count());
  std::map<AxialCoord, RegionId> used;
  for (NodeId v = 0; v < static_cast<NodeId>(net.node_count()); ++v) {
    node_cell[v] = probe.cell_of(net.position(v));
    used.emplace(node_cell[v], 0);
  }
  std::vector<AxialCoord> cells;
  for (auto& [c, id] : used) {
    id = static_cast<RegionId>(cells.size());
    cells.push_back(c);
  }
  std::vector<RegionId> node_region(net.node_count());
  for (std::size_t v = 0; v < node_cell.size(); ++v) node_region[v] = used.at(node_cell[v]);

  std::vector<NodeId> centers(cells.size(), -1);
  std::vector<double> best(cells.size(), kUnreachable);
  for (NodeId v = 0; v < static_cast<NodeId>(net.node_count()); ++v) {
    const auto r = node_region[v];
    const double d = haversine_m(net.position(v), probe.cell_center(cells[r]));
    if (d < best[r]) {
      best[r] = d;
      centers[r] = v;
    }
  }
  return HexGrid(origin, circumradius_m, std::move(cells), std::move(node_region), std::move(centers));
}

// ---------------------------------------------------------------------------

TimeSlotSpec TimeSlotSpec::make(std::int64_t slot_duration_s, Timestamp epoch) {
  if (slot_duration_s <= 0 || 86400 % slot_duration_s != 0)
    throw ValidationError("slot duration must divide 86400 seconds, got " + std::to_string(slot_duration_s));
  return {slot_duration_s, static_cast<int>(86400 / slot_duration_s), epoch};
}

double TimeSlotSpec::slot_index(double seconds_since_epoch) const {
  return std::floor(seconds_since_epoch / static_cast<double>(slot_duration));
}

std::vector<TripRecord> load_trips(const std::filesystem::path& path, const RoadNetwork& net) {
  csv::Reader in(path);
  in.expect_header({"pickup_datetime", "pickup_lat", "pickup_lon", "dropoff_datetime", "dropoff_lat", "dropoff_lon"});
  std::vector<TripRecord> out;
  std::vector<std::string_view> f;
  while (in.next(f)) {
    if (f.size() != 6) throw ParseError(path.string() + ": expected 6 fields", in.line());
    TripRecord rec;
    try {
      rec.pickup_time = parse_timestamp(f[0]);
      rec.dropoff_time = parse_timestamp(f[3]);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), in.line());
    }
    rec.origin = nearest_node(net, csv::to_double(f[1], in.line()), csv::to_double(f[2], in.line()));
    rec.destination = nearest_node(net, csv::to_double(f[4], in.line()), csv::to_double(f[5], in.line()));
    out.push_back(rec);
  }
  return out;
}

DemandMatrix DemandMatrix::rows(Eigen::Index first, Eigen::Index count) const {
  if (first < 0 || count < 0 || first + count > slots()) throw ValidationError("demand row range out of bounds");
  return {counts.middleRows(first, count), kind};
}

BinnedDemand bin_requests(const std::vector<TripRecord>& records, const HexGrid& grid, const TimeSlotSpec& slots,
                          std::int64_t total_slots, DemandKind kind) {
  BinnedDemand out;
  out.matrix.kind = kind;
  out.matrix.counts = Eigen::MatrixXi::Zero(total_slots, static_cast<Eigen::Index>(grid.region_count()));
  for (const auto& rec : records) {
    const bool by_origin = kind == DemandKind::origin;
    const auto j = slots.slot_index(by_origin ? rec.pickup_time : rec.dropoff_time);
    if (j < 0 || j >= total_slots) {
      ++out.skipped;
      continue;
    }
    out.matrix.counts(j, grid.region_of(by_origin ? rec.origin : rec.destination)) += 1;
  }
  return out;
}

RegionCorrelationGraph build_correlation_graph(const HexGrid& grid, const DemandMatrix& origins, double epsilon) {
  if (!(epsilon >= -1.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [-1, 1]");
  const auto n = static_cast<Eigen::Index>(grid.region_count());
  if (origins.regions() != n) throw ShapeError("origin matrix has wrong region count");
  RegionCorrelationGraph g;
  g.epsilon = epsilon;
  g.adjacency = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (RegionId k : grid.neighbors(static_cast<RegionId>(i))) g.adjacency(i, k) = 1;
  if (origins.slots() >= 2) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (pearson_similarity(origins.counts.col(i), origins.counts.col(j)) >= epsilon)
          g.adjacency(i, j) = g.adjacency(j, i) = 1;
  }
  return g;
}

TopNodeTable top_nodes_per_region(const std::vector<TripRecord>& records, const HexGrid& grid,
                                  const TimeSlotSpec& slots, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("top-node fraction must lie in (0, 1]");
  const int spd = slots.slots_per_day;
  const std::size_t n_nodes = grid.node_count();
  std::vector<double> counts(n_nodes * spd, 0.0);
  std::int64_t first_day = 0, last_day = -1;
  for (const auto& rec : records) {
    if (rec.origin < 0 || static_cast<std::size_t>(rec.origin) >= n_nodes) continue;
    const auto j = slots.slot_index(rec.pickup_time);
    const auto day = floor_div(j, spd);
    if (last_day < first_day) {
      first_day = last_day = day;
    } else {
      first_day = std::min(first_day, day);
      last_day = std::max(last_day, day);
    }
    counts[static_cast<std::size_t>(rec.origin) * spd + slots.slot_of_day(j)] += 1.0;
  }
  const double days = last_day >= first_day ? static_cast<double>(last_day - first_day + 1) : 1.0;

  TopNodeTable table(grid.region_count(), spd);
  for (RegionId r = 0; r < static_cast<RegionId>(grid.region_count()); ++r) {
    const auto& members = grid.region_nodes(r);
    // Guard against 0.15 * 20 = 3.0000000000000004 rounding up.
    const auto keep = static_cast<std::size_t>(
        std::max(1.0, std::ceil(fraction * static_cast<double>(members.size()) - 1e-9)));
    for (int s = 0; s < spd; ++s) {
      auto& out = table.nodes(r, s);
      double total = 0.0;
      for (NodeId v : members) total += counts[static_cast<std::size_t>(v) * spd + s];
      if (total == 0.0) {
        for (NodeId v : members) out.push_back({v, 1.0});
        continue;
      }
      std::vector<WeightedNode> ranked;
      for (NodeId v : members) ranked.push_back({v, counts[static_cast<std::size_t>(v) * spd + s] / days});
      std::stable_sort(ranked.begin(), ranked.end(), [](const WeightedNode& a, const WeightedNode& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.node < b.node;
      });
      ranked.resize(std::min(keep, ranked.size()));
      out = std::move(ranked);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

void save_partition(const std::filesystem::path& path, const Partition& p) {
  using nlohmann::json;
  json doc;
  doc["format"] = "fleetcast-partition";
  doc["version"] = 1;
  doc["grid"] = {{"origin_lat", p.grid.origin().lat},
                 {"origin_lon", p.grid.origin().lon},
                 {"circumradius_m", p.grid.circumradius()}};
  json regions = json::array();
  for (RegionId r = 0; r < static_cast<RegionId>(p.grid.region_count()); ++r) {
    const auto c = p.grid.region_center(r);
    regions.push_back({{"id", r},
                       {"q", p.grid.cell(r).q},
                       {"r", p.grid.cell(r).r},
                       {"center_lat", c.lat},
                       {"center_lon", c.lon},
                       {"center_node", p.grid.center_node(r)}});
  }
  doc["regions"] = std::move(regions);
  doc["node_region"] = p.grid.node_regions();
  json edges = json::array();
  const auto& a = p.graph.adjacency;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (a(i, j)) edges.push_back({i, j});
  doc["graph"] = {{"epsilon", p.graph.epsilon}, {"edges", std::move(edges)}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

Partition load_partition(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "fleetcast-partition")
      throw FormatError(path.string() + ": not a partition document");
    if (doc.at("version").get<int>() != 1)
      throw FormatError(path.string() + ": unsupported partition version " + doc.at("version").dump());
    const auto& g = doc.at("grid");
    const GeoPoint origin{g.at("origin_lat").get<double>(), g.at("origin_lon").get<double>()};
    std::vector<AxialCoord> cells;
    std::vector<NodeId> centers;
    for (const auto& r : doc.at("regions")) {
      if (r.at("id").get<std::size_t>() != cells.size())
        throw FormatError(path.string() + ": region ids must be dense and ordered");
      cells.push_back({r.at("q").get<int>(), r.at("r").get<int>()});
      centers.push_back(r.at("center_node").get<NodeId>());
    }
    auto node_region = doc.at("node_region").get<std::vector<RegionId>>();
    for (NodeId c : centers)
      if (c < 0 || static_cast<std::size_t>(c) >= node_region.size())
        throw FormatError(path.string() + ": center node out of range");

    Partition p{HexGrid(origin, g.at("circumradius_m").get<double>(), std::move(cells), std::move(node_region),
                        std::move(centers)),
                {}};
    const auto n = static_cast<Eigen::Index>(p.grid.region_count());
    p.graph.epsilon = doc.at("graph").at("epsilon").get<double>();
    p.graph.adjacency = Eigen::MatrixXi::Zero(n, n);
    for (const auto& e : doc.at("graph").at("edges")) {
      const auto i = e.at(0).get<Eigen::Index>(), j = e.at(1).get<Eigen::Index>();
      if (i < 0 || j < 0 || i >= n || j >= n || i == j)
        throw FormatError(path.string() + ": adjacency pair out of range");
      p.graph.adjacency(i, j) = p.graph.adjacency(j, i) = 1;
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed partition: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace fleetcast
