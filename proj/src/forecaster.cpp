#include "fleetcast/forecaster.hpp"

#include <algorithm>

#include "fleetcast/error.hpp"

namespace fleetcast {

HistoricalAverage::HistoricalAverage(Eigen::MatrixXd origin_means, Eigen::MatrixXd destination_means)
    : origin_means_(std::move(origin_means)), destination_means_(std::move(destination_means)) {
  if (origin_means_.rows() == 0 || origin_means_.rows() != destination_means_.rows() ||
      origin_means_.cols() != destination_means_.cols())
    throw ShapeError("historical-average tables must be non-empty and of equal shape");
  if ((origin_means_.array() < 0).any() || (destination_means_.array() < 0).any() || !origin_means_.allFinite() ||
      !destination_means_.allFinite())
    throw ValidationError("historical averages must be finite and non-negative");
}

Eigen::MatrixXd HistoricalAverage::predict(DemandKind kind, std::int64_t j, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  const auto& m = means(kind);
  const auto spd = m.rows();
  Eigen::MatrixXd out(horizon, m.cols());
  for (int s = 0; s < horizon; ++s) out.row(s) = m.row(((j + 1 + s) % spd + spd) % spd);
  return out;
}

namespace {

Eigen::MatrixXd slot_of_day_means(const Eigen::MatrixXi& counts, const TimeSlotSpec& slots, Eigen::Index rows) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(slots.slots_per_day, counts.cols());
  Eigen::VectorXd n = Eigen::VectorXd::Zero(slots.slots_per_day);
  for (Eigen::Index j = 0; j < rows; ++j) {
    const int sod = slots.slot_of_day(j);
    sums.row(sod) += counts.row(j).cast<double>();
    n(sod) += 1;
  }
  for (Eigen::Index s = 0; s < sums.rows(); ++s) sums.row(s) /= n(s);
  return sums;
}

}  // namespace

HistoricalAverage ha_fit(const DemandMatrix& origins, const DemandMatrix& destinations, const TimeSlotSpec& slots,
                         std::optional<Eigen::Index> rows) {
  const auto r = rows.value_or(origins.slots());
  if (r < slots.slots_per_day)
    throw ValidationError("historical average needs at least one full day of data (" +
                          std::to_string(slots.slots_per_day) + " slots), got " + std::to_string(r));
  if (origins.slots() < r || destinations.slots() < r || origins.counts.cols() != destinations.counts.cols())
    throw ShapeError("origin/destination matrices do not cover the fitting span");
  return HistoricalAverage(slot_of_day_means(origins.counts, slots, r), slot_of_day_means(destinations.counts, slots, r));
}

StgcslProvider::StgcslProvider(LoadedModel origin_model, LoadedModel destination_model,
                               const Eigen::MatrixXi& adjacency, const DemandMatrix& origin_history,
                               const DemandMatrix& destination_history, std::vector<int> labels, Options options)
    : origin_{std::move(origin_model), origin_history.counts},
      destination_{std::move(destination_model), destination_history.counts},
      adjacency_(adjacency),
      propagation_(propagation_matrix<float>(adjacency)),
      labels_(std::move(labels)),
      options_(options) {
  const auto n = adjacency_.rows();
  for (Side* s : {&origin_, &destination_}) {
    if (s->model.weights.regions() != n) throw ShapeError("forecast model region count differs from the graph");
    if (s->counts.cols() != n) throw ShapeError("history region count differs from the graph");
    if (s->model.config.context_clusters < 1) throw ValidationError("model lacks context clusters");
  }
  if (labels_.empty()) throw ValidationError("context labels are required");
  if (options_.max_horizon < 1) throw ValidationError("max_horizon must be >= 1");
  if (!options_.precomputed) {
    for (Side* s : {&origin_, &destination_}) {
      const auto keep = std::clamp<std::int64_t>(options_.live_start, 0, s->counts.rows());
      s->counts.bottomRows(s->counts.rows() - keep).setZero();
    }
  }
}

void StgcslProvider::ensure_rows(Side& s, std::int64_t rows) {
  if (rows <= s.counts.rows()) return;
  Eigen::MatrixXi grown = Eigen::MatrixXi::Zero(rows, s.counts.cols());
  grown.topRows(s.counts.rows()) = s.counts;
  s.counts = std::move(grown);
}

void StgcslProvider::observe(DemandKind kind, std::int64_t slot, RegionId region) {
  if (options_.precomputed || slot < options_.live_start) return;
  auto& s = side(kind);
  if (region < 0 || region >= s.counts.cols()) throw ValidationError("observed region out of range");
  ensure_rows(s, slot + 1);
  s.counts(slot, region) += 1;
  cache_.erase(cache_.lower_bound({slot, 0, 0}), cache_.end());
}

Eigen::MatrixXd StgcslProvider::predict(DemandKind kind, std::int64_t j, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  const auto key = std::make_tuple(j, static_cast<int>(kind), horizon);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  auto& s = side(kind);
  const auto& cfg = s.model.config;
  const auto& w = s.model.weights;
  const auto n = s.counts.cols();
  Eigen::MatrixXd window(cfg.h, n);
  std::vector<int> ctx(cfg.h);
  for (int t = 0; t < cfg.h; ++t) {
    const std::int64_t slot = j - cfg.h + 1 + t;
    if (slot >= 0 && slot < s.counts.rows())
      window.row(t) = s.counts.row(slot).cast<double>();
    else
      window.row(t) = w.mean.transpose();
    const auto li = std::clamp<std::int64_t>(slot, 0, static_cast<std::int64_t>(labels_.size()) - 1);
    ctx[t] = std::min(labels_[static_cast<std::size_t>(li)], cfg.context_clusters - 1);
  }
  const auto steps = predict_multi_step(w, cfg, propagation_, window, ctx, horizon);
  Eigen::MatrixXd out(horizon, n);
  for (int r = 0; r < horizon; ++r) out.row(r) = steps[static_cast<std::size_t>(r)].transpose().cwiseMax(0.0);
  if (!out.allFinite()) throw ValidationError("forecast model produced non-finite output");
  cache_.emplace(key, out);
  return out;
}

}  // namespace fleetcast
