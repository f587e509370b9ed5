#include <doctest.h>

#include "fleetcast/forecaster.hpp"
#include "model_fixtures.hpp"
#include "support.hpp"

using namespace fleetcast;

namespace {

DemandMatrix matrix(Eigen::MatrixXi counts, DemandKind kind) { return {std::move(counts), kind}; }

LoadedModel random_model(int regions, std::uint64_t seed) {
  LoadedModel m;
  m.config.h = 9;
  m.config.block1_channels = 4;
  m.config.block2_channels = 4;
  m.config.head_channels = 4;
  m.config.context_clusters = 3;
  Rng init = make_stream(seed, "init");
  m.weights = ModelWeights<float>::init(m.config, regions, init);
  m.weights.mean = Eigen::VectorXd::Constant(regions, 5.0);
  m.weights.stddev = Eigen::VectorXd::Constant(regions, 2.0);
  return m;
}

}  // namespace

TEST_CASE("historical average") {
  const auto slots = TimeSlotSpec::make(21600, 0);  // 4 slots per day
  SUBCASE("one day reproduces that day") {
    Eigen::MatrixXi c(4, 2);
    c << 1, 2, 3, 4, 5, 6, 7, 8;
    auto ha = ha_fit(matrix(c, DemandKind::origin), matrix(c * 2, DemandKind::destination), slots);
    CHECK(ha.means(DemandKind::origin) == c.cast<double>());
    CHECK(ha.means(DemandKind::destination) == (c * 2).cast<double>());
  }
  SUBCASE("two days average") {
    Eigen::MatrixXi c = Eigen::MatrixXi::Zero(8, 1);
    c(1, 0) = 4;
    c(5, 0) = 6;
    auto ha = ha_fit(matrix(c, DemandKind::origin), matrix(c, DemandKind::destination), slots);
    CHECK(ha.means(DemandKind::origin)(1, 0) == 5.0);
    const auto rows = ha.predict(DemandKind::origin, 0, 2);
    CHECK(rows.rows() == 2);
    CHECK(rows(0, 0) == 5.0);  // slot 1
    CHECK(rows(1, 0) == 0.0);  // slot 2
    CHECK(ha.predict(DemandKind::origin, 3, 2)(1, 0) == 5.0);  // wraps to the next day's slot 1
  }
  SUBCASE("random fixture against brute-force averaging") {
    std::mt19937_64 rng(1);
    Eigen::MatrixXi c(4 * 5 + 3, 3);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = static_cast<int>(rng() % 30);
    auto ha = ha_fit(matrix(c, DemandKind::origin), matrix(c, DemandKind::destination), slots, 4 * 5 + 3);
    for (int s = 0; s < 4; ++s)
      for (int r = 0; r < 3; ++r) {
        double sum = 0;
        int n = 0;
        for (int j = s; j < c.rows(); j += 4) {
          sum += c(j, r);
          ++n;
        }
        CHECK(std::abs(ha.means(DemandKind::origin)(s, r) - sum / n) <= 1e-12);
      }
  }
  SUBCASE("fewer than a day is rejected") {
    Eigen::MatrixXi c = Eigen::MatrixXi::Ones(3, 1);
    CHECK_THROWS_AS(ha_fit(matrix(c, DemandKind::origin), matrix(c, DemandKind::destination), slots), ValidationError);
  }
}

TEST_CASE("model-backed provider") {
  const int n = 3;
  const auto o = random_model(n, 1), d = random_model(n, 2);
  const Eigen::MatrixXi adjacency = Eigen::MatrixXi::Ones(n, n) - Eigen::MatrixXi::Identity(n, n);
  std::mt19937_64 rng(3);
  Eigen::MatrixXi hist(40, n);
  for (Eigen::Index i = 0; i < hist.size(); ++i) hist.data()[i] = static_cast<int>(rng() % 12);
  std::vector<int> labels(40);
  for (int j = 0; j < 40; ++j) labels[j] = j % 3;

  SUBCASE("horizon 1 equals the model on the window ending at j") {
    StgcslProvider p(o, d, adjacency, matrix(hist, DemandKind::origin), matrix(hist, DemandKind::destination), labels,
                     {.live_start = 40});
    const Eigen::MatrixXd window = hist.middleRows(30 - 8, 9).cast<double>();
    std::vector<int> ctx(labels.begin() + 22, labels.begin() + 31);
    const auto expect = predict_next(o.weights, o.config, propagation_matrix<float>(adjacency), window, ctx);
    const auto got = p.predict(DemandKind::origin, 30, 1);
    CHECK(got.row(0).transpose() == expect);
    CHECK(p.predict(DemandKind::origin, 30, 3).row(0) == got.row(0));
  }
  SUBCASE("live mode hides slots from live_start until they are observed") {
    StgcslProvider live(o, d, adjacency, matrix(hist, DemandKind::origin), matrix(hist, DemandKind::destination),
                        labels, {.live_start = 30});
    Eigen::MatrixXi masked = hist;
    masked.bottomRows(10).setZero();
    StgcslProvider pre(o, d, adjacency, matrix(masked, DemandKind::origin), matrix(masked, DemandKind::destination),
                       labels, {.live_start = 30, .precomputed = true});
    CHECK(live.predict(DemandKind::origin, 32, 2) == pre.predict(DemandKind::origin, 32, 2));
    const auto before = live.predict(DemandKind::origin, 32, 1);
    live.observe(DemandKind::origin, 31, 1);
    masked(31, 1) += 1;
    StgcslProvider pre2(o, d, adjacency, matrix(masked, DemandKind::origin), matrix(masked, DemandKind::destination),
                        labels, {.live_start = 30, .precomputed = true});
    const auto after = live.predict(DemandKind::origin, 32, 1);
    CHECK(after == pre2.predict(DemandKind::origin, 32, 1));
    CHECK(after != before);
    // Observations before live_start are already in the history.
    live.observe(DemandKind::origin, 5, 0);
    CHECK(live.predict(DemandKind::origin, 32, 1) == after);
  }
  SUBCASE("finite non-negative output on fuzzed inputs") {
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::MatrixXi h(20, n);
      for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = static_cast<int>(rng() % (trial % 2 ? 1000 : 3));
      StgcslProvider p(random_model(n, 10 + trial), random_model(n, 50 + trial), adjacency,
                       matrix(h, DemandKind::origin), matrix(h, DemandKind::destination), labels,
                       {.live_start = static_cast<std::int64_t>(rng() % 25)});
      const auto j = static_cast<std::int64_t>(rng() % 60) - 10;
      for (auto kind : {DemandKind::origin, DemandKind::destination}) {
        const auto f = p.predict(kind, j, 3);
        CHECK(f.allFinite());
        CHECK((f.array() >= 0).all());
      }
      HistoricalAverage ha = ha_fit(matrix(h, DemandKind::origin), matrix(h, DemandKind::destination),
                                    TimeSlotSpec::make(21600, 0));
      const auto g = ha.predict(DemandKind::destination, j, 4);
      CHECK(g.allFinite());
      CHECK((g.array() >= 0).all());
    }
  }
  SUBCASE("region mismatch is rejected") {
    CHECK_THROWS_AS(StgcslProvider(random_model(4, 1), d, adjacency, matrix(hist, DemandKind::origin),
                                   matrix(hist, DemandKind::destination), labels, {}),
                    ShapeError);
  }
}
