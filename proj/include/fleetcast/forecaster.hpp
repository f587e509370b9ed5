#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <tuple>

#include <Eigen/Dense>

#include "fleetcast/demand_data.hpp"
#include "fleetcast/stgcsl.hpp"

namespace fleetcast {

/// Per-region demand forecasts consumed by planners.
class ForecastProvider {
 public:
  virtual ~ForecastProvider() = default;

  /// Forecasts for slots j+1 .. j+horizon as a [horizon x N] matrix; finite, >= 0.
  virtual Eigen::MatrixXd predict(DemandKind kind, std::int64_t j, int horizon) = 0;
  /// Largest horizon served natively; 0 means unlimited.
  virtual int max_horizon() const { return 0; }
  virtual Eigen::Index regions() const = 0;
  /// One observed request in `slot`, fed by the simulator.
  virtual void observe(DemandKind /*kind*/, std::int64_t /*slot*/, RegionId /*region*/) {}
};

class HistoricalAverage final : public ForecastProvider {
 public:
  HistoricalAverage(Eigen::MatrixXd origin_means, Eigen::MatrixXd destination_means);

  Eigen::MatrixXd predict(DemandKind kind, std::int64_t j, int horizon) override;
  Eigen::Index regions() const override { return origin_means_.cols(); }

  /// [slots_per_day x N] mean counts.
  const Eigen::MatrixXd& means(DemandKind kind) const {
    return kind == DemandKind::origin ? origin_means_ : destination_means_;
  }

 private:
  Eigen::MatrixXd origin_means_;
  Eigen::MatrixXd destination_means_;
};

/// Mean over days per slot-of-day and region, using rows [0, rows) of each
/// matrix (all rows when `rows` is absent). Row j is slot j of `slots`.
HistoricalAverage ha_fit(const DemandMatrix& origins, const DemandMatrix& destinations, const TimeSlotSpec& slots,
                         std::optional<Eigen::Index> rows = {});

/// Adapter over trained origin and destination models.
///
/// Live mode (default) predicts from a window of observed counts: slots before
/// `live_start` come from `history`, later slots are filled by observe().
/// Precomputed mode uses `history` for every slot and ignores observe().
class StgcslProvider final : public ForecastProvider {
 public:
  struct Options {
    std::int64_t live_start = 0;
    bool precomputed = false;
    int max_horizon = 3;
  };

  StgcslProvider(LoadedModel origin_model, LoadedModel destination_model, const Eigen::MatrixXi& adjacency,
                 const DemandMatrix& origin_history, const DemandMatrix& destination_history, std::vector<int> labels,
                 Options options);

  Eigen::MatrixXd predict(DemandKind kind, std::int64_t j, int horizon) override;
  int max_horizon() const override { return options_.max_horizon; }
  Eigen::Index regions() const override { return adjacency_.rows(); }
  void observe(DemandKind kind, std::int64_t slot, RegionId region) override;

 private:
  struct Side {
    LoadedModel model;
    Eigen::MatrixXi counts;  // grows as observations arrive
  };
  Side& side(DemandKind kind) { return kind == DemandKind::origin ? origin_ : destination_; }
  void ensure_rows(Side& s, std::int64_t rows);

  Side origin_;
  Side destination_;
  Eigen::MatrixXi adjacency_;
  ad::RowMatrix<float> propagation_;
  std::vector<int> labels_;
  Options options_;
  std::map<std::tuple<std::int64_t, int, int>, Eigen::MatrixXd> cache_;
};

}  // namespace fleetcast
