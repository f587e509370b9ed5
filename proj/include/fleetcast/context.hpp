#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "fleetcast/demand_data.hpp"

namespace fleetcast {

/// External conditions of one time slot.
struct ContextFeature {
  int time_of_day = 0;  // slot-of-day index
  int day_of_week = 0;  // 0 = Monday
  int weather = 0;      // small integer code
  int holiday = 0;      // 0/1
  int event = 0;        // 0/1

  std::array<double, 5> as_array() const {
    return {double(time_of_day), double(day_of_week), double(weather), double(holiday), double(event)};
  }
  auto operator<=>(const ContextFeature&) const = default;
};

/// Piecewise-constant weather/holiday/event observations.
struct ContextObservation {
  Timestamp from = 0;
  int weather = 0;
  int holiday = 0;
  int event = 0;
};

/// Reads `timestamp,weather,holiday,event`; each row holds until the next one.
std::vector<ContextObservation> load_context(const std::filesystem::path& path);

/// One feature per slot in [0, total_slots). Slots before the first observation
/// (or all slots, when `observations` is empty) get weather/holiday/event 0.
std::vector<ContextFeature> build_context_features(const TimeSlotSpec& slots, std::int64_t total_slots,
                                                   const std::vector<ContextObservation>& observations);

struct ContextClusters {
  Eigen::MatrixXd centroids;  // [K x 5] in scaled space
  Eigen::VectorXd scale_min;  // Max-Min scaling parameters
  Eigen::VectorXd scale_range;
  std::vector<int> labels;    // one per input slot
  int iterations = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
  /// Label of the nearest centroid (lowest index on ties).
  int classify(const ContextFeature& f) const;
};

/// Max-Min scaling per field; a zero-range field maps to 0.
Eigen::MatrixXd scale_features(const std::vector<ContextFeature>& features, Eigen::VectorXd& min_out,
                               Eigen::VectorXd& range_out);

/// Seeded k-means++ then Lloyd iterations (cap 100, tolerance 1e-6). K is
/// reduced to the number of distinct scaled tuples when fewer exist.
ContextClusters cluster_context(const std::vector<ContextFeature>& features, int k, std::uint64_t seed);

}  // namespace fleetcast
