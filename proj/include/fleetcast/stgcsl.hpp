#pragma once

// Graph-convolutional sequence model for per-region demand.
//
// Layout of every activation: [B, T, N, C] (batch, time, region, channel).
// Two gated blocks shrink T by 2(k-1) each; a scalar context channel is
// convolved down to the same length, concatenated, and a small head maps the
// remaining steps to one value per region.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fleetcast/error.hpp"
#include "fleetcast/rng.hpp"
#include "fleetcast/tensor.hpp"

namespace fleetcast {

struct StGcslConfig {
  int h = 10;  // input window length
  int k = 3;   // temporal kernel size
  int m = 3;   // m-gram length inside the multi-slice module; must equal k
  int block1_channels = 32;
  int block2_channels = 64;
  int head_channels = 32;
  double dropout = 0.2;
  int context_clusters = 10;
  double lr = 0.001;
  double lr_decay = 0.7;
  int lr_decay_every = 5;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 1;

  /// Throws ValidationError naming the first bad field.
  void validate() const;

  int block_output_length(int input_length) const { return input_length - 2 * (k - 1); }
  int final_length() const { return h - 4 * (k - 1); }
  int context_kernel() const { return 4 * (k - 1) + 1; }

  std::map<std::string, std::string> to_map() const;
  static StGcslConfig from_map(const std::map<std::string, std::string>& kv);
};

/// D^{-1/2} (I + A) D^{-1/2} with D the degree matrix of I + A.
Eigen::MatrixXd normalize_graph(const Eigen::MatrixXi& adjacency);

/// Parameter names and shapes for a configuration, in serialization order.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const StGcslConfig& config);

template <typename Scalar>
class ModelWeights {
 public:
  using TensorT = ad::Tensor<Scalar>;

  /// Glorot-uniform kernels, zero biases, identity normalization.
  static ModelWeights init(const StGcslConfig& config, Eigen::Index regions, Rng& rng) {
    ModelWeights w;
    for (const auto& [name, shape] : parameter_layout(config)) {
      auto t = TensorT::zeros(shape, true);
      if (!is_bias(name)) {
        const double fan_in = static_cast<double>(ad::numel(shape) / shape.back());
        const double fan_out = static_cast<double>(shape.back());
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < t.size(); ++i) t.value()(i) = Scalar((2.0 * uniform01(rng) - 1.0) * limit);
      }
      w.add(name, std::move(t));
    }
    w.mean = Eigen::VectorXd::Zero(regions);
    w.stddev = Eigen::VectorXd::Ones(regions);
    return w;
  }

  static ModelWeights zeros(const StGcslConfig& config, Eigen::Index regions) {
    ModelWeights w;
    for (const auto& [name, shape] : parameter_layout(config)) w.add(name, TensorT::zeros(shape, true));
    w.mean = Eigen::VectorXd::Zero(regions);
    w.stddev = Eigen::VectorXd::Ones(regions);
    return w;
  }

  static bool is_bias(const std::string& name) { return name.size() > 5 && name.substr(name.size() - 5) == "_bias"; }

  void add(std::string name, TensorT t) {
    if (index_.count(name)) throw ValidationError("duplicate parameter " + name);
    index_[name] = tensors_.size();
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const TensorT& at(const std::string& name) const { return tensors_.at(lookup(name)); }
  TensorT& at(const std::string& name) { return tensors_.at(lookup(name)); }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<TensorT>& tensors() { return tensors_; }
  const std::vector<TensorT>& tensors() const { return tensors_; }
  Eigen::Index regions() const { return mean.size(); }

  /// Deep copy (fresh tensor storage).
  ModelWeights clone() const { return cast<Scalar>(); }

  template <typename To>
  ModelWeights<To> cast() const {
    ModelWeights<To> out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      out.add(names_[i], ad::Tensor<To>::from(tensors_[i].shape(), tensors_[i].value().template cast<To>(), true));
    out.mean = mean;
    out.stddev = stddev;
    return out;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

  Eigen::VectorXd mean;    // per-region training mean of counts
  Eigen::VectorXd stddev;  // per-region training std (1 where the series is constant)

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("no parameter named " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<TensorT> tensors_;
  std::map<std::string, std::size_t> index_;
};

template <typename Scalar>
struct StcmParams {
  ad::Tensor<Scalar> temporal;  // [k, 1, C, 2C']
  ad::Tensor<Scalar> graph1;    // [C', C']
  ad::Tensor<Scalar> graph2;    // [C', C']
  ad::Tensor<Scalar> residual;  // [C, C'] or undefined when C == C'
};

template <typename Scalar>
StcmParams<Scalar> stcm_params(const ModelWeights<Scalar>& w, const std::string& prefix) {
  StcmParams<Scalar> p{w.at(prefix + ".temporal"), w.at(prefix + ".graph1"), w.at(prefix + ".graph2"), {}};
  if (w.contains(prefix + ".residual")) p.residual = w.at(prefix + ".residual");
  return p;
}

/// One spatial-temporal convolution module:
///   B = Gamma * Z, split into B1 | B2 on channels,
///   B'_mu = A_hat B_mu W_mu,
///   Z' = (B'_1 + P crop(Z)) (.) sigmoid(B'_2)
/// where crop keeps the last q-k+1 steps and P is the optional 1x1 projection.
template <typename Scalar>
ad::Tensor<Scalar> stcm_forward(ad::Tape<Scalar>& tape, const ad::Tensor<Scalar>& z, const StcmParams<Scalar>& p,
                                const ad::RowMatrix<Scalar>& adj) {
  const auto k = p.temporal.dim(0);
  const auto q = z.dim(-3);
  if (q < k) throw ShapeError("STCM input length " + std::to_string(q) + " < kernel " + std::to_string(k));
  const auto cf = p.temporal.dim(3) / 2;
  auto b = ad::temporal_conv(tape, z, p.temporal);
  auto halves = ad::split(tape, b, -1, {cf, cf});
  auto b1 = ad::matmul(tape, ad::propagate(tape, adj, halves[0]), p.graph1);
  auto b2 = ad::matmul(tape, ad::propagate(tape, adj, halves[1]), p.graph2);
  auto res = ad::slice_time(tape, z, k - 1, q - k + 1);
  if (p.residual.defined()) res = ad::matmul(tape, res, p.residual);
  return ad::hadamard(tape, ad::add(tape, b1, res), ad::sigmoid(tape, b2));
}

/// Shared-weight STCM over every m-step window of x, outputs concatenated along
/// time. All windows run as one batch.
template <typename Scalar>
ad::Tensor<Scalar> mstcm_forward(ad::Tape<Scalar>& tape, const ad::Tensor<Scalar>& x, const StcmParams<Scalar>& p,
                                 const ad::RowMatrix<Scalar>& adj, int m) {
  const auto t = x.dim(-3);
  if (t < m) throw ShapeError("multi-slice input length " + std::to_string(t) + " < m=" + std::to_string(m));
  const auto windows = t - m + 1;
  auto y = stcm_forward(tape, ad::time_windows(tape, x, m), p, adj);  // [B*S, m-k+1, N, C']
  ad::Shape shape = x.shape();
  shape[shape.size() - 3] = windows * y.dim(1);
  shape.back() = y.dim(-1);
  return ad::reshape(tape, y, shape);
}

/// Reference evaluation of the same module one window at a time.
template <typename Scalar>
ad::Tensor<Scalar> mstcm_forward_sequential(ad::Tape<Scalar>& tape, const ad::Tensor<Scalar>& x,
                                            const StcmParams<Scalar>& p, const ad::RowMatrix<Scalar>& adj, int m) {
  const auto t = x.dim(-3);
  if (t < m) throw ShapeError("multi-slice input length " + std::to_string(t) + " < m=" + std::to_string(m));
  std::vector<ad::Tensor<Scalar>> parts;
  for (Eigen::Index i = 0; i + m <= t; ++i) parts.push_back(stcm_forward(tape, ad::slice_time(tape, x, i, m), p, adj));
  return ad::concat(tape, parts, x.rank() - 3);
}

/// Multi-slice module then an outer STCM: time length h_l -> h_l - 2(k-1).
template <typename Scalar>
ad::Tensor<Scalar> st_gated_block(ad::Tape<Scalar>& tape, const ad::Tensor<Scalar>& x, const ModelWeights<Scalar>& w,
                                  const std::string& block, const ad::RowMatrix<Scalar>& adj, int m) {
  const auto inner = stcm_params(w, block + ".inter");
  const auto outer = stcm_params(w, block + ".outer");
  const auto k = inner.temporal.dim(0);
  if (x.dim(-3) < 2 * (k - 1) + 1)
    throw ShapeError("block input length " + std::to_string(x.dim(-3)) + " too short for k=" + std::to_string(k));
  return stcm_forward(tape, mstcm_forward(tape, x, inner, adj, m), outer, adj);
}

/// Context channel: scaled labels [B, h, N, 1] convolved to [B, h-4(k-1), N, 1].
template <typename Scalar>
ad::Tensor<Scalar> context_channel(ad::Tape<Scalar>& tape, const ad::Tensor<Scalar>& labels,
                                   const ad::Tensor<Scalar>& kernel) {
  if (labels.dim(-3) < kernel.dim(0))
    throw ShapeError("context window " + std::to_string(labels.dim(-3)) + " shorter than kernel " +
                     std::to_string(kernel.dim(0)));
  return ad::temporal_conv(tape, labels, kernel);
}

/// Dense context labels duplicated over regions: [B, h] label ids -> [B, h, N, 1]
/// holding label / (K - 1).
template <typename Scalar>
ad::Tensor<Scalar> context_tensor(const std::vector<std::vector<int>>& labels, Eigen::Index regions, int clusters) {
  const auto batch = static_cast<Eigen::Index>(labels.size());
  const auto h = batch ? static_cast<Eigen::Index>(labels[0].size()) : 0;
  auto out = ad::Tensor<Scalar>::zeros({batch, h, regions, 1});
  const double denom = clusters > 1 ? clusters - 1 : 1;
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (static_cast<Eigen::Index>(labels[b].size()) != h) throw ShapeError("ragged context label batch");
    for (Eigen::Index t = 0; t < h; ++t)
      out.value().segment((b * h + t) * regions, regions).setConstant(Scalar(labels[b][t] / denom));
  }
  return out;
}

struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Normalized window [B, h, N, 1] and context [B, h, N, 1] -> normalized prediction [B, 1, N, 1].
template <typename Scalar>
ad::Tensor<Scalar> forward(ad::Tape<Scalar>& tape, const ModelWeights<Scalar>& w, const StGcslConfig& cfg,
                           const ad::Tensor<Scalar>& window, const ad::Tensor<Scalar>& context,
                           const ad::RowMatrix<Scalar>& adj, const ForwardOptions& opt = {}) {
  if (window.rank() != 4 || window.dim(1) != cfg.h || window.dim(3) != 1)
    throw ShapeError("model input must be [B, " + std::to_string(cfg.h) + ", N, 1], got " +
                     ad::to_string(window.shape()));
  if (window.dim(2) != adj.rows())
    throw ShapeError("model input has N=" + std::to_string(window.dim(2)) + " but graph has " +
                     std::to_string(adj.rows()) + " regions");
  if (context.shape() != window.shape()) throw ShapeError("context tensor must match the window shape");
  const bool drop = opt.training && opt.dropout > 0.0;
  if (drop && !opt.rng) throw ValidationError("dropout needs a random stream");

  auto x = st_gated_block(tape, window, w, "block1", adj, cfg.m);
  if (drop) x = ad::dropout(tape, x, opt.dropout, true, *opt.rng);
  x = st_gated_block(tape, x, w, "block2", adj, cfg.m);
  if (drop) x = ad::dropout(tape, x, opt.dropout, true, *opt.rng);
  auto ctx = context_channel(tape, context, w.at("context.temporal"));
  auto joined = ad::concat(tape, {x, ctx}, -1);
  auto hidden = ad::add_bias(tape, ad::temporal_conv(tape, joined, w.at("head.temporal")), w.at("head.temporal_bias"));
  return ad::add_bias(tape, ad::matmul(tape, hidden, w.at("head.output")), w.at("head.output_bias"));
}

/// Propagation matrix in the model's scalar type.
template <typename Scalar>
ad::RowMatrix<Scalar> propagation_matrix(const Eigen::MatrixXi& adjacency) {
  return normalize_graph(adjacency).cast<Scalar>();
}

/// One-step forecast from raw counts: window [h x N], labels [h] -> counts [N],
/// de-normalized and clamped at zero.
template <typename Scalar>
Eigen::VectorXd predict_next(const ModelWeights<Scalar>& w, const StGcslConfig& cfg, const ad::RowMatrix<Scalar>& adj,
                             const Eigen::MatrixXd& window, std::span<const int> labels) {
  const auto n = w.regions();
  if (window.rows() != cfg.h || window.cols() != n)
    throw ShapeError("window must be " + std::to_string(cfg.h) + "x" + std::to_string(n));
  if (static_cast<int>(labels.size()) != cfg.h) throw ShapeError("need one context label per window step");
  auto x = ad::Tensor<Scalar>::zeros({1, cfg.h, n, 1});
  for (int t = 0; t < cfg.h; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      x.value()(t * n + i) = Scalar((window(t, i) - w.mean(i)) / w.stddev(i));
  auto ctx = context_tensor<Scalar>({std::vector<int>(labels.begin(), labels.end())}, n, cfg.context_clusters);
  ad::Tape<Scalar> tape(false);
  const auto out = forward(tape, w, cfg, x, ctx, adj);
  Eigen::VectorXd pred(n);
  for (Eigen::Index i = 0; i < n; ++i)
    pred(i) = std::max(0.0, static_cast<double>(out.value()(i)) * w.stddev(i) + w.mean(i));
  return pred;
}

/// Iterated forecasts: each step appends the previous prediction to the window
/// and repeats the last context label.
template <typename Scalar>
std::vector<Eigen::VectorXd> predict_multi_step(const ModelWeights<Scalar>& w, const StGcslConfig& cfg,
                                                const ad::RowMatrix<Scalar>& adj, Eigen::MatrixXd window,
                                                std::vector<int> labels, int steps) {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  std::vector<Eigen::VectorXd> out;
  for (int s = 0; s < steps; ++s) {
    out.push_back(predict_next(w, cfg, adj, window, labels));
    if (s + 1 == steps) break;
    const Eigen::MatrixXd shifted = window.bottomRows(window.rows() - 1);
    window.topRows(window.rows() - 1) = shifted;
    window.row(window.rows() - 1) = out.back().transpose();
    labels.erase(labels.begin());
    labels.push_back(labels.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ForecastMetrics {
  double mape_pct = 0.0;  // over truth entries >= floor
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
  std::size_t mape_count = 0;
};

ForecastMetrics forecast_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double mape_floor = 1.0);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Slot ranges: train [0, train_end), validation [train_end, val_end), test [val_end, total).
struct DataSplit {
  Eigen::Index train_end = 0;
  Eigen::Index val_end = 0;
  Eigen::Index total = 0;

  /// Last `val_days` + `test_days` whole days held out when at least one
  /// training day remains; otherwise the given fractions of the slots.
  static DataSplit by_days(Eigen::Index total_slots, int slots_per_day, int val_days = 5, int test_days = 5,
                           double val_fraction = 0.15, double test_fraction = 0.15);
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

/// Complete optimizer state; resuming from it reproduces an uninterrupted run.
struct TrainCheckpoint {
  ModelWeights<float> current;
  ModelWeights<float> best;
  ad::AdamState<float> adam;
  int epochs_done = 0;
  double best_val = 0.0;
  std::vector<EpochLog> log;
};

struct TrainInputs {
  Eigen::MatrixXi counts;    // [slots x N]
  std::vector<int> labels;   // context label per slot
  Eigen::MatrixXi adjacency; // region correlation graph
  DataSplit split;
};

/// Minibatch Adam on the squared error of normalized next-slot counts. Runs
/// `config.epochs` total epochs (continuing from `resume` when given) and keeps
/// the weights with the lowest validation loss in `best`.
TrainCheckpoint train(const TrainInputs& data, const StGcslConfig& config, const TrainCheckpoint* resume = nullptr);

/// Windows whose target slot lies in [first, last): returns target slot indices.
std::vector<Eigen::Index> window_targets(const StGcslConfig& config, Eigen::Index first, Eigen::Index last);

/// Rolling one-step (or multi-step) forecasts over target slots, for evaluation.
/// Row r of each matrix is the forecast made `step` slots ahead for targets[r].
std::vector<Eigen::MatrixXd> rolling_forecasts(const ModelWeights<float>& w, const StGcslConfig& cfg,
                                               const Eigen::MatrixXi& adjacency, const Eigen::MatrixXi& counts,
                                               const std::vector<int>& labels, const std::vector<Eigen::Index>& targets,
                                               int steps);

// ---------------------------------------------------------------------------
// Weights file
// ---------------------------------------------------------------------------

/// Container: magic, version, a key=value header echoing the configuration,
/// then named float32 little-endian arrays.
struct WeightsFile {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, ad::Tensor<float>>> arrays;
};

void write_weights_file(const std::filesystem::path& path, const WeightsFile& file);
WeightsFile read_weights_file(const std::filesystem::path& path);

struct LoadedModel {
  StGcslConfig config;
  ModelWeights<float> weights;
};

void save_weights(const std::filesystem::path& path, const StGcslConfig& config, const ModelWeights<float>& w);

/// Reads and validates every array against the layout implied by the stored
/// configuration. When `expected_regions` is given, N must match.
LoadedModel load_weights(const std::filesystem::path& path, std::optional<Eigen::Index> expected_regions = {});

void save_checkpoint(const std::filesystem::path& path, const StGcslConfig& config, const TrainCheckpoint& ckpt);
TrainCheckpoint load_checkpoint(const std::filesystem::path& path, const StGcslConfig& config, Eigen::Index regions);

}  // namespace fleetcast
