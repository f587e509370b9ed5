#include <doctest.h>

#include "fleetcast/stgcsl.hpp"
#include "fleetcast/synth.hpp"
#include "gradcheck.hpp"
#include "model_fixtures.hpp"
#include "support.hpp"

using namespace fleetcast;
using ad::Tape;
using T = ad::Tensor<double>;
using testing::check_gradients;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

StcmParams<double> random_stcm(Eigen::Index k, Eigen::Index c, Eigen::Index cp, std::mt19937_64& rng) {
  StcmParams<double> p{random_tensor({k, 1, c, 2 * cp}, rng, 0.5), random_tensor({cp, cp}, rng, 0.5),
                       random_tensor({cp, cp}, rng, 0.5), {}};
  if (c != cp) p.residual = random_tensor({c, cp}, rng, 0.5);
  return p;
}

ad::RowMatrix<double> random_propagation(Eigen::Index n, std::mt19937_64& rng) {
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = static_cast<int>(rng() % 2);
  return propagation_matrix<double>(a);
}

StGcslConfig shape_config(int h, int k) {
  StGcslConfig c;
  c.h = h;
  c.k = c.m = k;
  c.block1_channels = 2;
  c.block2_channels = 3;
  c.head_channels = 2;
  c.context_clusters = 3;
  return c;
}

}  // namespace

TEST_CASE("graph normalization") {
  CHECK(normalize_graph(Eigen::MatrixXi::Zero(4, 4)).isApprox(Eigen::MatrixXd::Identity(4, 4)));
  Eigen::MatrixXi two(2, 2);
  two << 0, 1, 1, 0;
  CHECK(((normalize_graph(two).array() - 0.5).abs() < 1e-15).all());
  for (const auto& f : testing::fixtures()["normalize"]) {
    const int n = f["n"];
    const auto a = f["adjacency"].get<std::vector<int>>();
    const Eigen::MatrixXi adj = Eigen::Map<const Eigen::Matrix<int, -1, -1, Eigen::RowMajor>>(a.data(), n, n);
    const Eigen::MatrixXd expect = testing::row_matrix(f["normalized"], n, n);
    const Eigen::MatrixXd got = normalize_graph(adj);
    CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((got.rowwise().sum() - expect.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("STCM with identity graph and gate closed halves the doubled residual") {
  // Γ maps the last kernel step to B1 and leaves B2 at zero; W1 = W2 = I, Â = I.
  const int k = 3, n = 2, c = 2;
  std::mt19937_64 rng(1);
  const auto z = random_tensor({1, 5, n, c}, rng, 1.0, false);
  auto temporal = T::zeros({k, 1, c, 2 * c});
  for (int i = 0; i < c; ++i) temporal.value()(((k - 1) * c + i) * 2 * c + i) = 1.0;
  const auto eye = T::from({c, c}, (Eigen::ArrayXd(4) << 1, 0, 0, 1).finished());
  StcmParams<double> p{temporal, eye, eye, {}};
  Tape<double> tape(false);
  const auto out = stcm_forward(tape, z, p, ad::RowMatrix<double>(ad::RowMatrix<double>::Identity(n, n)));
  const auto crop = ad::slice_time(tape, z, k - 1, 3);
  CHECK(out.shape() == crop.shape());
  CHECK(((out.value() - crop.value()).abs() < 1e-15).all());
}

TEST_CASE("STCM output length and transcription oracle") {
  std::mt19937_64 rng(2);
  Tape<double> tape(false);
  const auto p = random_stcm(3, 2, 4, rng);
  CHECK(stcm_forward(tape, random_tensor({1, 8, 3, 2}, rng, 1.0, false), p, random_propagation(3, rng)).dim(1) == 6);

  for (const auto& f : testing::fixtures()["stcm"]) {
    const int q = f["q"], k = f["k"], n = f["n"], c = f["c"], cp = f["c_out"];
    const auto pj = f["params"];
    auto tensor = [](ad::Shape s, const nlohmann::json& j) {
      const auto v = testing::doubles(j);
      return T::from(std::move(s), Eigen::Map<const Eigen::ArrayXd>(v.data(), v.size()));
    };
    StcmParams<double> params{tensor({k, 1, c, 2 * cp}, pj["temporal"]), tensor({cp, cp}, pj["graph1"]),
                              tensor({cp, cp}, pj["graph2"]), {}};
    if (pj.contains("residual")) params.residual = tensor({c, cp}, pj["residual"]);
    const auto out = stcm_forward(tape, tensor({1, q, n, c}, f["z"]), params, testing::row_matrix(f["adj"], n, n));
    const auto expect = testing::doubles(f["out"]);
    REQUIRE(out.size() == static_cast<Eigen::Index>(expect.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(std::abs(out.value()(i) - expect[i]) <= 1e-9);
  }
}

TEST_CASE("STCM gradients") {
  std::mt19937_64 rng(3);
  auto z = random_tensor({2, 5, 3, 2}, rng);
  const auto adj = random_propagation(3, rng);
  for (int cp : {2, 3}) {
    auto p = random_stcm(3, 2, cp, rng);
    std::vector<T> params{z, p.temporal, p.graph1, p.graph2};
    if (p.residual.defined()) params.push_back(p.residual);
    const auto r = check_gradients([&](Tape<double>& t) { return weighted_sum(t, stcm_forward(t, z, p, adj)); }, params);
    CHECK(r.max_rel <= 1e-4);
  }
}

TEST_CASE("multi-slice module") {
  std::mt19937_64 rng(4);
  const auto adj = random_propagation(3, rng);
  const auto p = random_stcm(3, 1, 4, rng);
  Tape<double> tape(false);
  CHECK(mstcm_forward(tape, random_tensor({2, 3, 3, 1}, rng, 1.0, false), p, adj, 3).dim(1) == 1);
  const auto x = random_tensor({2, 10, 3, 1}, rng, 1.0, false);
  const auto batched = mstcm_forward(tape, x, p, adj, 3);
  CHECK(batched.dim(1) == 8);
  const auto sequential = mstcm_forward_sequential(tape, x, p, adj, 3);
  REQUIRE(batched.shape() == sequential.shape());
  CHECK((batched.value() == sequential.value()).all());
}

TEST_CASE("block output lengths and channels") {
  std::mt19937_64 rng(5);
  const auto adj = random_propagation(4, rng);
  StGcslConfig cfg;
  cfg.h = 10;
  Rng init = make_stream(1, "init");
  const auto wf = ModelWeights<float>::init(cfg, 4, init);
  const auto w = wf.cast<double>();
  Tape<double> tape(false);
  auto b1 = st_gated_block(tape, random_tensor({1, 10, 4, 1}, rng, 1.0, false), w, "block1", adj, 3);
  CHECK(b1.dim(1) == 6);
  CHECK(b1.dim(3) == 32);
  auto b2 = st_gated_block(tape, b1, w, "block2", adj, 3);
  CHECK(b2.dim(1) == 2);
  CHECK(b2.dim(3) == 64);
  CHECK(cfg.block_output_length(6) == 2);
}

TEST_CASE("time axis shrinks by 2(k-1) per block for every valid (h, k)") {
  std::mt19937_64 rng(6);
  for (int k = 2; k <= 4; ++k)
    for (int h = 5; h <= 16; ++h) {
      if (h < 4 * (k - 1) + 1) {
        auto c = shape_config(h, k);
        CHECK_THROWS_AS(c.validate(), ValidationError);
        continue;
      }
      const auto cfg = shape_config(h, k);
      CHECK_NOTHROW(cfg.validate());
      Rng init = make_stream(3, "init");
      const auto w = ModelWeights<float>::init(cfg, 3, init).cast<double>();
      const auto adj = random_propagation(3, rng);
      Tape<double> tape(false);
      auto x = random_tensor({1, h, 3, 1}, rng, 1.0, false);
      auto b1 = st_gated_block(tape, x, w, "block1", adj, k);
      auto b2 = st_gated_block(tape, b1, w, "block2", adj, k);
      CHECK(b1.dim(1) == h - 2 * (k - 1));
      CHECK(b2.dim(1) == h - 4 * (k - 1));
      CHECK(cfg.final_length() == h - 4 * (k - 1));
    }
}

TEST_CASE("context channel") {
  StGcslConfig cfg;
  cfg.h = 10;
  CHECK(cfg.context_kernel() == 9);
  Tape<double> tape(false);
  auto labels = context_tensor<double>({std::vector<int>(10, 4)}, 3, 10);
  CHECK(labels.shape() == ad::Shape{1, 10, 3, 1});
  auto sum_kernel = T::from({9, 1, 1, 1}, Eigen::ArrayXd::Ones(9));
  auto out = context_channel(tape, labels, sum_kernel);
  CHECK(out.shape() == ad::Shape{1, 2, 3, 1});
  CHECK(((out.value() - 9.0 * 4.0 / 9.0).abs() < 1e-12).all());

  std::mt19937_64 rng(7);
  auto kern = random_tensor({9, 1, 1, 1}, rng);
  auto ctx = random_tensor({2, 10, 3, 1}, rng);
  const auto r = check_gradients([&](Tape<double>& t) { return weighted_sum(t, context_channel(t, ctx, kern)); }, {ctx, kern});
  CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("full forward matches the transcription oracle") {
  for (const auto& f : testing::fixtures()["forward"]) {
    auto [cfg, w] = testing::fixture_model(f);
    const int n = f["n"];
    const auto win = testing::doubles(f["window"]);
    const auto window = T::from({1, cfg.h, n, 1}, Eigen::Map<const Eigen::ArrayXd>(win.data(), win.size()));
    const auto ctx = context_tensor<double>({f["labels"].get<std::vector<int>>()}, n, cfg.context_clusters);
    Tape<double> tape(false);
    const auto out = forward(tape, w, cfg, window, ctx, testing::row_matrix(f["adj"], n, n));
    CHECK(out.shape() == ad::Shape{1, 1, n, 1});
    const auto expect = testing::doubles(f["out"]);
    for (int i = 0; i < n; ++i) CHECK(std::abs(out.value()(i) - expect[i]) <= 1e-9);
  }
}

TEST_CASE("zero weights predict the training mean") {
  StGcslConfig cfg = shape_config(9, 3);
  auto w = ModelWeights<float>::zeros(cfg, 3);
  w.mean = Eigen::Vector3d(4.0, 0.5, 7.0);
  w.stddev = Eigen::Vector3d(2.0, 1.0, 3.0);
  const auto adj = propagation_matrix<float>(Eigen::MatrixXi::Zero(3, 3));
  Eigen::MatrixXd window = Eigen::MatrixXd::Random(9, 3) * 10;
  const std::vector<int> labels(9, 1);
  const auto pred = predict_next(w, cfg, adj, window, labels);
  CHECK(pred.size() == 3);
  CHECK(pred.isApprox(w.mean));
  w.mean(1) = -2.0;
  CHECK(predict_next(w, cfg, adj, window, labels)(1) == 0.0);
}

TEST_CASE("full model gradients") {
  std::mt19937_64 rng(8);
  for (auto [h, k] : {std::pair{6, 2}, std::pair{9, 3}}) {
    StGcslConfig cfg = shape_config(h, k);
    cfg.block1_channels = cfg.block2_channels = cfg.head_channels = 2;
    Rng init = make_stream(4, "init");
    auto w = ModelWeights<float>::init(cfg, 4, init).cast<double>();
    for (auto& t : w.tensors()) t.value() += random_tensor(t.shape(), rng, 0.1, false).value();
    const auto adj = random_propagation(4, rng);
    auto x = random_tensor({2, h, 4, 1}, rng);
    auto ctx = context_tensor<double>({std::vector<int>(h, 1), std::vector<int>(h, 2)}, 4, 3);
    auto params = w.tensors();
    params.push_back(x);
    const auto r = check_gradients([&](Tape<double>& t) { return weighted_sum(t, forward(t, w, cfg, x, ctx, adj)); }, params);
    INFO("h=" << h << " k=" << k << " max rel " << r.max_rel);
    CHECK(r.max_rel <= 1e-4);
  }
}

TEST_CASE("configuration validation") {
  auto bad = [](auto edit) {
    StGcslConfig c;
    edit(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](auto& c) { c.k = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.m = 2; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.h = 8; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.dropout = 1.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](auto& c) { c.lr = 0.0; }).validate(), ValidationError);
  CHECK_NOTHROW(StGcslConfig{}.validate());
  const StGcslConfig d;
  CHECK(StGcslConfig::from_map(d.to_map()).to_map() == d.to_map());
}

TEST_CASE("forecast metrics") {
  const Eigen::MatrixXd t = Eigen::MatrixXd::Constant(2, 2, 3.0);
  const auto zero = forecast_metrics(t, t);
  CHECK(zero.mape_pct == 0.0);
  CHECK(zero.mae == 0.0);
  CHECK(zero.rmse == 0.0);
  const auto half = forecast_metrics(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Constant(1, 1, 4.0));
  CHECK(half.mape_pct == doctest::Approx(50.0));
  CHECK(half.mae == 2.0);
  CHECK(half.rmse == 2.0);
  for (const auto& f : testing::fixtures()["metrics"]) {
    const int r = f["rows"], c = f["cols"];
    const auto m = forecast_metrics(testing::row_matrix(f["pred"], r, c), testing::row_matrix(f["truth"], r, c));
    CHECK(std::abs(m.mape_pct - f["mape_pct"].get<double>()) <= 1e-9);
    CHECK(std::abs(m.mae - f["mae"].get<double>()) <= 1e-9);
    CHECK(std::abs(m.rmse - f["rmse"].get<double>()) <= 1e-9);
  }
}

TEST_CASE("data split") {
  const auto s = DataSplit::by_days(30 * 24, 24, 5, 5);
  CHECK(s.train_end == 20 * 24);
  CHECK(s.val_end == 25 * 24);
  const auto f = DataSplit::by_days(100, 24, 5, 5, 0.1, 0.2);
  CHECK(f.val_end == 80);
  CHECK(f.train_end == 70);
}

TEST_CASE("training on constant demand drives validation error to zero") {
  const Eigen::MatrixXi counts = Eigen::MatrixXi::Constant(10 * 24, 3, 20);
  const auto in = testing::tiny_task(counts, 24);
  const auto cfg = testing::tiny_config();
  const auto ckpt = train(in, cfg);
  const auto targets = window_targets(cfg, in.split.train_end, in.split.val_end);
  const auto pred = rolling_forecasts(ckpt.best, cfg, in.adjacency, counts, in.labels, targets, 3);
  Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(targets.size()), 3, 20.0);
  for (int s = 0; s < 3; ++s) {
    const auto m = forecast_metrics(pred[s], truth);
    INFO("step " << s + 1 << " MAPE " << m.mape_pct);
    CHECK(m.mape_pct < 1.0);
  }
}

TEST_CASE("training dynamics, determinism and resume") {
  const auto counts = synth::periodic_demand(4, 10, 24, 3);
  const auto in = testing::tiny_task(counts, 24);
  auto cfg = testing::tiny_config();

  const auto full = train(in, cfg);
  REQUIRE(full.log.size() == 30);
  int increases = 0;
  for (int e = 1; e < 5; ++e) increases += full.log[e].train_loss > full.log[e - 1].train_loss;
  CHECK(increases <= 1);
  CHECK(full.log.back().train_loss < full.log.front().train_loss);

  const auto again = train(in, cfg);
  for (std::size_t i = 0; i < full.current.tensors().size(); ++i)
    CHECK((full.current.tensors()[i].value() == again.current.tensors()[i].value()).all());

  testing::TempDir dir("resume");
  auto short_cfg = cfg;
  short_cfg.epochs = 12;
  save_checkpoint(dir / "ckpt.bin", short_cfg, train(in, short_cfg));
  const auto loaded = load_checkpoint(dir / "ckpt.bin", cfg, 4);
  CHECK(loaded.epochs_done == 12);
  const auto resumed = train(in, cfg, &loaded);
  REQUIRE(resumed.log.size() == full.log.size());
  for (std::size_t e = 0; e < full.log.size(); ++e) {
    CHECK(resumed.log[e].train_loss == full.log[e].train_loss);
    CHECK(resumed.log[e].val_loss == full.log[e].val_loss);
  }
  for (std::size_t i = 0; i < full.best.tensors().size(); ++i)
    CHECK((full.best.tensors()[i].value() == resumed.best.tensors()[i].value()).all());
}

TEST_CASE("multi-step forecasts") {
  StGcslConfig cfg = shape_config(9, 3);
  Rng init = make_stream(2, "init");
  auto w = ModelWeights<float>::init(cfg, 3, init);
  w.mean = Eigen::Vector3d(5, 6, 7);
  w.stddev = Eigen::Vector3d(2, 2, 2);
  const auto adj = propagation_matrix<float>(Eigen::MatrixXi::Ones(3, 3));
  Eigen::MatrixXd window = (Eigen::MatrixXd::Random(9, 3).array() + 1.0) * 5.0;
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2};
  const auto steps = predict_multi_step(w, cfg, adj, window, labels, 3);
  REQUIRE(steps.size() == 3);
  CHECK(steps[0] == predict_next(w, cfg, adj, window, labels));

  Eigen::MatrixXd shifted(9, 3);
  shifted.topRows(8) = window.bottomRows(8);
  shifted.row(8) = steps[0].transpose();
  std::vector<int> next_labels(labels.begin() + 1, labels.end());
  next_labels.push_back(labels.back());
  CHECK(steps[1] == predict_next(w, cfg, adj, shifted, next_labels));
  CHECK_THROWS_AS(predict_multi_step(w, cfg, adj, window, labels, 0), ValidationError);
}

TEST_CASE("weights files") {
  testing::TempDir dir("weights");
  StGcslConfig cfg = shape_config(9, 3);
  Rng init = make_stream(9, "init");
  auto w = ModelWeights<float>::init(cfg, 4, init);
  w.mean = Eigen::Vector4d(1.5, 2.25, 0, 8);
  w.stddev = Eigen::Vector4d(1, 0.5, 1, 4);
  save_weights(dir / "a.bin", cfg, w);
  const auto loaded = load_weights(dir / "a.bin");
  save_weights(dir / "b.bin", loaded.config, loaded.weights);
  CHECK(testing::read_text(dir / "a.bin") == testing::read_text(dir / "b.bin"));
  CHECK(loaded.config.to_map() == cfg.to_map());
  for (std::size_t i = 0; i < w.tensors().size(); ++i)
    CHECK((w.tensors()[i].value() == loaded.weights.tensors()[i].value()).all());
  CHECK(loaded.weights.mean == w.mean);

  const auto bytes = testing::read_text(dir / "a.bin");
  auto corrupt = bytes;
  corrupt[8] = 7;
  testing::write_text(dir / "version.bin", corrupt);
  CHECK_THROWS_WITH_AS(load_weights(dir / "version.bin"), doctest::Contains("version"), FormatError);
  corrupt = bytes;
  corrupt[0] = 'X';
  testing::write_text(dir / "magic.bin", corrupt);
  CHECK_THROWS_AS(load_weights(dir / "magic.bin"), FormatError);
  testing::write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_WITH_AS(load_weights(dir / "short.bin"), doctest::Contains("truncated"), FormatError);
  testing::write_text(dir / "long.bin", bytes + "xx");
  CHECK_THROWS_AS(load_weights(dir / "long.bin"), FormatError);
  CHECK_THROWS_WITH_AS(load_weights(dir / "a.bin", 5), doctest::Contains("norm.mean"), ShapeError);
  CHECK_THROWS_AS(load_weights(dir / "missing.bin"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "a.bin", cfg, 4), FormatError);
}
