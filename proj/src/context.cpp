#include "fleetcast/context.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "fleetcast/csv.hpp"
#include "fleetcast/error.hpp"
#include "fleetcast/rng.hpp"

namespace fleetcast {

std::vector<ContextObservation> load_context(const std::filesystem::path& path) {
  csv::Reader in(path);
  in.expect_header({"timestamp", "weather", "holiday", "event"});
  std::vector<ContextObservation> out;
  std::vector<std::string_view> f;
  while (in.next(f)) {
    if (f.size() != 4) throw ParseError(path.string() + ": expected 4 fields", in.line());
    ContextObservation o;
    try {
      o.from = parse_timestamp(f[0]);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), in.line());
    }
    o.weather = static_cast<int>(csv::to_int(f[1], in.line()));
    o.holiday = static_cast<int>(csv::to_int(f[2], in.line()));
    o.event = static_cast<int>(csv::to_int(f[3], in.line()));
    if (o.weather < 0 || o.weather > 255) throw ParseError(path.string() + ": weather code out of range", in.line());
    if ((o.holiday != 0 && o.holiday != 1) || (o.event != 0 && o.event != 1))
      throw ParseError(path.string() + ": holiday/event must be 0 or 1", in.line());
    if (!out.empty() && o.from < out.back().from)
      throw ParseError(path.string() + ": timestamps must be non-decreasing", in.line());
    out.push_back(o);
  }
  return out;
}

std::vector<ContextFeature> build_context_features(const TimeSlotSpec& slots, std::int64_t total_slots,
                                                   const std::vector<ContextObservation>& observations) {
  std::vector<ContextFeature> out(static_cast<std::size_t>(std::max<std::int64_t>(total_slots, 0)));
  std::size_t next = 0;
  const ContextObservation* current = nullptr;
  for (std::int64_t j = 0; j < total_slots; ++j) {
    const auto start = slots.slot_start(j);
    while (next < observations.size() && observations[next].from <= start) current = &observations[next++];
    auto& f = out[static_cast<std::size_t>(j)];
    f.time_of_day = slots.slot_of_day(j);
    f.day_of_week = slots.weekday(j);
    if (current) {
      f.weather = current->weather;
      f.holiday = current->holiday;
      f.event = current->event;
    }
  }
  return out;
}

Eigen::MatrixXd scale_features(const std::vector<ContextFeature>& features, Eigen::VectorXd& min_out,
                               Eigen::VectorXd& range_out) {
  const auto n = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd raw(n, 5);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = features[static_cast<std::size_t>(i)].as_array();
    for (int c = 0; c < 5; ++c) raw(i, c) = a[c];
  }
  if (n == 0) {
    min_out = Eigen::VectorXd::Zero(5);
    range_out = Eigen::VectorXd::Zero(5);
    return raw;
  }
  min_out = raw.colwise().minCoeff().transpose();
  range_out = raw.colwise().maxCoeff().transpose() - min_out;
  Eigen::MatrixXd scaled(n, 5);
  for (int c = 0; c < 5; ++c)
    if (range_out(c) > 0)
      scaled.col(c) = (raw.col(c).array() - min_out(c)) / range_out(c);
    else
      scaled.col(c).setZero();
  return scaled;
}

namespace {

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

int ContextClusters::classify(const ContextFeature& f) const {
  const auto a = f.as_array();
  Eigen::RowVectorXd x(5);
  for (int c = 0; c < 5; ++c) x(c) = scale_range(c) > 0 ? (a[c] - scale_min(c)) / scale_range(c) : 0.0;
  return nearest_centroid(centroids, x);
}

ContextClusters cluster_context(const std::vector<ContextFeature>& features, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("context_clusters must be >= 1");
  if (features.empty()) throw ValidationError("no context features to cluster");
  ContextClusters out;
  const Eigen::MatrixXd x = scale_features(features, out.scale_min, out.scale_range);
  const auto n = x.rows();

  std::set<std::vector<double>> distinct;
  for (Eigen::Index i = 0; i < n; ++i) distinct.insert({x(i, 0), x(i, 1), x(i, 2), x(i, 3), x(i, 4)});
  if (static_cast<std::size_t>(k) > distinct.size()) {
    spdlog::warn("only {} distinct context tuples; reducing clusters from {} to {}", distinct.size(), k,
                 distinct.size());
    k = static_cast<int>(distinct.size());
  }

  // k-means++ seeding.
  Rng rng = make_stream(seed, "kmeans");
  Eigen::MatrixXd centroids(k, 5);
  centroids.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2(i);
      if (d2(i) > 0 && u < acc) {
        pick = i;
        break;
      }
    }
    if (d2(pick) == 0)  // rounding at the tail: take the last point not yet covered
      for (Eigen::Index i = n - 1; i >= 0; --i)
        if (d2(i) > 0) {
          pick = i;
          break;
        }
    centroids.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centroids.row(c)).squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  int it = 0;
  for (; it < 100; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = nearest_centroid(centroids, x.row(i));
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, 5);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1;
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts(c) == 0) continue;  // empty cluster keeps its centroid
      const Eigen::RowVectorXd next = sums.row(c) / counts(c);
      shift = std::max(shift, (next - centroids.row(c)).norm());
      centroids.row(c) = next;
    }
    if (shift < 1e-6) {
      ++it;
      break;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = nearest_centroid(centroids, x.row(i));
  out.centroids = std::move(centroids);
  out.labels = std::move(labels);
  out.iterations = it;
  return out;
}

}  // namespace fleetcast
