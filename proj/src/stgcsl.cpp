#include "fleetcast/stgcsl.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fleetcast/csv.hpp"

namespace fleetcast {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void StGcslConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("invalid model config: " + what); };
  if (k < 1) fail("k must be >= 1, got " + std::to_string(k));
  if (m != k) fail("m must equal k (m=" + std::to_string(m) + ", k=" + std::to_string(k) + ")");
  if (h < 1) fail("h must be >= 1");
  if (final_length() < 1)
    fail("h - 4(k-1) must be >= 1 (h=" + std::to_string(h) + ", k=" + std::to_string(k) + ")");
  if (block1_channels < 1 || block2_channels < 1 || head_channels < 1) fail("channel counts must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (context_clusters < 1) fail("context_clusters must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (lr_decay_every < 1) fail("lr_decay_every must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
}

std::map<std::string, std::string> StGcslConfig::to_map() const {
  return {{"h", std::to_string(h)},
          {"k", std::to_string(k)},
          {"m", std::to_string(m)},
          {"block1_channels", std::to_string(block1_channels)},
          {"block2_channels", std::to_string(block2_channels)},
          {"head_channels", std::to_string(head_channels)},
          {"dropout", csv::format_double(dropout)},
          {"context_clusters", std::to_string(context_clusters)},
          {"lr", csv::format_double(lr)},
          {"lr_decay", csv::format_double(lr_decay)},
          {"lr_decay_every", std::to_string(lr_decay_every)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"seed", std::to_string(seed)}};
}

StGcslConfig StGcslConfig::from_map(const std::map<std::string, std::string>& kv) {
  StGcslConfig c;
  auto get_int = [&](const char* key, int& field) {
    if (auto it = kv.find(key); it != kv.end()) field = static_cast<int>(csv::to_int(it->second, 0));
  };
  auto get_double = [&](const char* key, double& field) {
    if (auto it = kv.find(key); it != kv.end()) field = csv::to_double(it->second, 0);
  };
  get_int("h", c.h);
  get_int("k", c.k);
  get_int("m", c.m);
  get_int("block1_channels", c.block1_channels);
  get_int("block2_channels", c.block2_channels);
  get_int("head_channels", c.head_channels);
  get_double("dropout", c.dropout);
  get_int("context_clusters", c.context_clusters);
  get_double("lr", c.lr);
  get_double("lr_decay", c.lr_decay);
  get_int("lr_decay_every", c.lr_decay_every);
  get_int("batch_size", c.batch_size);
  get_int("epochs", c.epochs);
  if (auto it = kv.find("seed"); it != kv.end()) c.seed = static_cast<std::uint64_t>(csv::to_int(it->second, 0));
  return c;
}

Eigen::MatrixXd normalize_graph(const Eigen::MatrixXi& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ShapeError("adjacency must be square");
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(adjacency.rows(), adjacency.cols()) + adjacency.cast<double>();
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const StGcslConfig& c) {
  std::vector<std::pair<std::string, ad::Shape>> out;
  const ad::Index k = c.k;
  auto block = [&](const std::string& name, ad::Index cin, ad::Index cout) {
    out.push_back({name + ".inter.temporal", {k, 1, cin, 2 * cout}});
    out.push_back({name + ".inter.graph1", {cout, cout}});
    out.push_back({name + ".inter.graph2", {cout, cout}});
    if (cin != cout) out.push_back({name + ".inter.residual", {cin, cout}});
    out.push_back({name + ".outer.temporal", {k, 1, cout, 2 * cout}});
    out.push_back({name + ".outer.graph1", {cout, cout}});
    out.push_back({name + ".outer.graph2", {cout, cout}});
  };
  block("block1", 1, c.block1_channels);
  block("block2", c.block1_channels, c.block2_channels);
  out.push_back({"context.temporal", {c.context_kernel(), 1, 1, 1}});
  out.push_back({"head.temporal", {c.final_length(), 1, c.block2_channels + 1, c.head_channels}});
  out.push_back({"head.temporal_bias", {c.head_channels}});
  out.push_back({"head.output", {c.head_channels, 1}});
  out.push_back({"head.output_bias", {1}});
  return out;
}

// ---------------------------------------------------------------------------
// Metrics and splits
// ---------------------------------------------------------------------------

ForecastMetrics forecast_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double mape_floor) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("metrics: shape mismatch");
  if (pred.size() == 0) throw ValidationError("metrics: empty input");
  ForecastMetrics m;
  const Eigen::ArrayXXd err = (pred - truth).array();
  m.count = static_cast<std::size_t>(pred.size());
  m.mae = err.abs().mean();
  m.rmse = std::sqrt(err.square().mean());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j)
    for (Eigen::Index i = 0; i < truth.rows(); ++i)
      if (truth(i, j) >= mape_floor) {
        acc += std::abs(err(i, j)) / truth(i, j);
        ++m.mape_count;
      }
  m.mape_pct = m.mape_count ? 100.0 * acc / static_cast<double>(m.mape_count) : 0.0;
  return m;
}

DataSplit DataSplit::by_days(Eigen::Index total, int spd, int val_days, int test_days, double val_fraction,
                             double test_fraction) {
  DataSplit s;
  s.total = total;
  const Eigen::Index days = spd > 0 ? total / spd : 0;
  if (days >= val_days + test_days + 1) {
    s.val_end = total - static_cast<Eigen::Index>(test_days) * spd;
    s.train_end = s.val_end - static_cast<Eigen::Index>(val_days) * spd;
  } else {
    const auto test = static_cast<Eigen::Index>(std::llround(total * test_fraction));
    const auto val = static_cast<Eigen::Index>(std::llround(total * val_fraction));
    s.val_end = total - test;
    s.train_end = s.val_end - val;
  }
  return s;
}

std::vector<Eigen::Index> window_targets(const StGcslConfig& config, Eigen::Index first, Eigen::Index last) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index t = std::max<Eigen::Index>(first, config.h); t < last; ++t) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct Batch {
  ad::Tensor<float> window;
  ad::Tensor<float> context;
  ad::Tensor<float> target;
};

Batch make_batch(const Eigen::MatrixXf& normalized, const std::vector<int>& labels, const StGcslConfig& cfg,
                 std::span<const Eigen::Index> targets) {
  const auto n = normalized.cols();
  const auto b = static_cast<Eigen::Index>(targets.size());
  Batch out{ad::Tensor<float>::zeros({b, cfg.h, n, 1}), {}, ad::Tensor<float>::zeros({b, 1, n, 1})};
  std::vector<std::vector<int>> ctx;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto t = targets[i];
    for (int s = 0; s < cfg.h; ++s)
      out.window.value().segment((i * cfg.h + s) * n, n) = normalized.row(t - cfg.h + s).transpose();
    out.target.value().segment(i * n, n) = normalized.row(t).transpose();
    ctx.emplace_back(labels.begin() + (t - cfg.h), labels.begin() + t);
  }
  out.context = context_tensor<float>(ctx, n, cfg.context_clusters);
  return out;
}

// Mean per-window squared error on normalized counts.
double evaluate_loss(const ModelWeights<float>& w, const StGcslConfig& cfg, const ad::RowMatrix<float>& adj,
                     const Eigen::MatrixXf& normalized, const std::vector<int>& labels,
                     const std::vector<Eigen::Index>& targets) {
  if (targets.empty()) return 0.0;
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < targets.size(); start += kChunk) {
    const auto len = std::min(kChunk, targets.size() - start);
    auto batch = make_batch(normalized, labels, cfg, std::span(targets).subspan(start, len));
    ad::Tape<float> tape(false);
    auto pred = forward(tape, w, cfg, batch.window, batch.context, adj);
    total += static_cast<double>((pred.value() - batch.target.value()).square().sum());
  }
  return total / static_cast<double>(targets.size());
}

}  // namespace

TrainCheckpoint train(const TrainInputs& data, const StGcslConfig& cfg, const TrainCheckpoint* resume) {
  cfg.validate();
  const auto slots = data.counts.rows();
  const auto n = data.counts.cols();
  if (static_cast<Eigen::Index>(data.labels.size()) != slots)
    throw ShapeError("need one context label per slot (" + std::to_string(slots) + "), got " +
                     std::to_string(data.labels.size()));
  if (data.adjacency.rows() != n || data.adjacency.cols() != n) throw ShapeError("adjacency does not match regions");
  const auto& split = data.split;
  if (!(split.train_end <= split.val_end && split.val_end <= slots))
    throw ValidationError("invalid data split");

  const auto train_targets = window_targets(cfg, 0, split.train_end);
  const auto val_targets = window_targets(cfg, split.train_end, split.val_end);
  if (train_targets.empty())
    throw ValidationError("insufficient data: need more than h=" + std::to_string(cfg.h) + " training slots");

  TrainCheckpoint ckpt;
  if (resume) {
    ckpt = *resume;
    ckpt.current = resume->current.clone();
    ckpt.best = resume->best.clone();
  } else {
    Rng init = make_stream(cfg.seed, "init");
    ckpt.current = ModelWeights<float>::init(cfg, n, init);
    // Normalization from the training span, rounded to float so saved weights reload exactly.
    const Eigen::MatrixXd train = data.counts.topRows(split.train_end).cast<double>();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = train.col(i).mean();
      const double var = (train.col(i).array() - mean).square().mean();
      const double sd = std::sqrt(var);
      ckpt.current.mean(i) = static_cast<float>(mean);
      ckpt.current.stddev(i) = sd < 1e-6 ? 1.0 : static_cast<double>(static_cast<float>(sd));
    }
  }
  if (ckpt.current.regions() != n) throw ShapeError("checkpoint region count differs from data");

  const auto adj = propagation_matrix<float>(data.adjacency);
  Eigen::MatrixXf normalized(slots, n);
  for (Eigen::Index i = 0; i < n; ++i)
    normalized.col(i) = ((data.counts.col(i).cast<double>().array() - ckpt.current.mean(i)) / ckpt.current.stddev(i))
                            .cast<float>()
                            .matrix();

  auto& params = ckpt.current.tensors();
  for (int epoch = ckpt.epochs_done; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
    std::vector<Eigen::Index> order = train_targets;
    Rng shuffle = make_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    Rng drop = make_stream(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch));

    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      auto batch = make_batch(normalized, data.labels, cfg, std::span(order).subspan(start, len));
      ad::Tape<float> tape;
      auto pred = forward(tape, ckpt.current, cfg, batch.window, batch.context, adj, {true, cfg.dropout, &drop});
      auto loss = ad::scale(tape, ad::sum_squares(tape, ad::sub(tape, pred, batch.target)), 1.0f / len);
      tape.backward(loss);
      ad::adam_step(params, ckpt.adam, {lr});
      ckpt.current.zero_grad();
      train_total += static_cast<double>(loss.item()) * static_cast<double>(len);
    }
    EpochLog entry{epoch + 1, train_total / static_cast<double>(order.size()), 0.0, lr};
    entry.val_loss = val_targets.empty() ? entry.train_loss
                                         : evaluate_loss(ckpt.current, cfg, adj, normalized, data.labels, val_targets);
    if (ckpt.log.empty() || entry.val_loss < ckpt.best_val) {
      ckpt.best_val = entry.val_loss;
      ckpt.best = ckpt.current.clone();
    }
    ckpt.log.push_back(entry);
    ckpt.epochs_done = epoch + 1;
  }
  if (ckpt.log.empty()) ckpt.best = ckpt.current.clone();
  return ckpt;
}

std::vector<Eigen::MatrixXd> rolling_forecasts(const ModelWeights<float>& w, const StGcslConfig& cfg,
                                               const Eigen::MatrixXi& adjacency, const Eigen::MatrixXi& counts,
                                               const std::vector<int>& labels, const std::vector<Eigen::Index>& targets,
                                               int steps) {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  const auto adj = propagation_matrix<float>(adjacency);
  const auto n = counts.cols();
  std::vector<Eigen::MatrixXd> out(steps, Eigen::MatrixXd(static_cast<Eigen::Index>(targets.size()), n));
  std::map<Eigen::Index, std::vector<Eigen::VectorXd>> by_origin;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    for (int s = 1; s <= steps; ++s) {
      const auto origin = targets[r] - s;
      if (origin - cfg.h + 1 < 0)
        throw ValidationError("target slot " + std::to_string(targets[r]) + " lacks history for " +
                              std::to_string(s) + "-step forecast");
      auto it = by_origin.find(origin);
      if (it == by_origin.end()) {
        const Eigen::MatrixXd window = counts.middleRows(origin - cfg.h + 1, cfg.h).cast<double>();
        std::vector<int> ctx(labels.begin() + (origin - cfg.h + 1), labels.begin() + origin + 1);
        it = by_origin.emplace(origin, predict_multi_step(w, cfg, adj, window, ctx, steps)).first;
      }
      out[s - 1].row(static_cast<Eigen::Index>(r)) = it->second[s - 1].transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights file
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'C', 'W', 'E', 'I', 'G', 'H', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated while reading " + what);
  }
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_weights_file(const std::filesystem::path& path, const WeightsFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  std::string header;
  for (const auto& [k, v] : file.header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ValidationError("weights header entries may not contain '=' or newlines: " + k);
    header += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(file.arrays.size()));
  for (const auto& [name, t] : file.arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.value()(i)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

WeightsFile read_weights_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader in(std::move(bytes), path.string());
  if (in.take(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
    throw FormatError(path.string() + ": bad magic/version header, not a weights file");
  if (const auto v = in.u32("version"); v != kVersion)
    throw FormatError(path.string() + ": unsupported weights format version " + std::to_string(v));
  WeightsFile file;
  const auto header = in.take(in.u32("header length"), "header");
  for (auto line : csv::split(header, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(path.string() + ": malformed header line");
    file.header[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  const auto count = in.u32("array count");
  for (std::uint32_t a = 0; a < count; ++a) {
    auto name = in.take(in.u32("array name length"), "array name");
    const auto rank = in.u32("array rank");
    if (rank > 8) throw FormatError(path.string() + ": array '" + name + "' has implausible rank");
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32("array dims"));
    const auto n = ad::numel(shape);
    Eigen::ArrayXf values(n);
    for (Eigen::Index i = 0; i < n; ++i) values(i) = std::bit_cast<float>(in.u32(("data of " + name).c_str()));
    file.arrays.emplace_back(std::move(name), ad::Tensor<float>::from(shape, std::move(values), true));
  }
  if (!in.done()) throw FormatError(path.string() + ": trailing bytes after last array");
  return file;
}

namespace {

ad::Tensor<float> vector_tensor(const Eigen::VectorXd& v) {
  return ad::Tensor<float>::from({v.size()}, v.cast<float>().array());
}

const ad::Tensor<float>& find_array(const WeightsFile& file, const std::string& name, const ad::Shape& expected,
                                    const std::string& source) {
  for (const auto& [n, t] : file.arrays)
    if (n == name) {
      if (t.shape() != expected)
        throw ShapeError(source + ": array '" + name + "' has shape " + ad::to_string(t.shape()) + ", expected " +
                         ad::to_string(expected));
      return t;
    }
  throw FormatError(source + ": missing array '" + name + "'");
}

ModelWeights<float> extract_weights(const WeightsFile& file, const StGcslConfig& cfg, Eigen::Index regions,
                                    const std::string& prefix, const std::string& source) {
  ModelWeights<float> w;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    const auto& t = find_array(file, prefix + name, shape, source);
    w.add(name, ad::Tensor<float>::from(shape, t.value(), true));
  }
  w.mean = find_array(file, "norm.mean", {regions}, source).value().cast<double>().matrix();
  w.stddev = find_array(file, "norm.std", {regions}, source).value().cast<double>().matrix();
  return w;
}

Eigen::Index header_regions(const WeightsFile& file, const std::string& source) {
  auto it = file.header.find("regions");
  if (it == file.header.end()) throw FormatError(source + ": header lacks 'regions'");
  return static_cast<Eigen::Index>(csv::to_int(it->second, 0));
}

}  // namespace

void save_weights(const std::filesystem::path& path, const StGcslConfig& config, const ModelWeights<float>& w) {
  WeightsFile file;
  file.header = config.to_map();
  file.header["kind"] = "weights";
  file.header["regions"] = std::to_string(w.regions());
  for (std::size_t i = 0; i < w.names().size(); ++i) file.arrays.emplace_back(w.names()[i], w.tensors()[i]);
  file.arrays.emplace_back("norm.mean", vector_tensor(w.mean));
  file.arrays.emplace_back("norm.std", vector_tensor(w.stddev));
  write_weights_file(path, file);
}

LoadedModel load_weights(const std::filesystem::path& path, std::optional<Eigen::Index> expected_regions) {
  const auto file = read_weights_file(path);
  LoadedModel out;
  try {
    out.config = StGcslConfig::from_map(file.header);
    out.config.validate();
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": bad configuration header: " + e.what());
  }
  const auto regions = expected_regions.value_or(header_regions(file, path.string()));
  out.weights = extract_weights(file, out.config, regions, "", path.string());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const StGcslConfig& config, const TrainCheckpoint& ckpt) {
  WeightsFile file;
  file.header = config.to_map();
  file.header["kind"] = "checkpoint";
  file.header["regions"] = std::to_string(ckpt.current.regions());
  file.header["epochs_done"] = std::to_string(ckpt.epochs_done);
  file.header["adam_step"] = std::to_string(ckpt.adam.step);
  file.header["best_val"] = csv::format_double(ckpt.best_val);
  for (std::size_t i = 0; i < ckpt.log.size(); ++i) {
    const auto& e = ckpt.log[i];
    file.header["log." + std::to_string(1000000 + i)] = std::to_string(e.epoch) + "," +
                                                        csv::format_double(e.train_loss) + "," +
                                                        csv::format_double(e.val_loss) + "," + csv::format_double(e.lr);
  }
  const auto& names = ckpt.current.names();
  for (std::size_t i = 0; i < names.size(); ++i) file.arrays.emplace_back(names[i], ckpt.current.tensors()[i]);
  for (std::size_t i = 0; i < names.size(); ++i) file.arrays.emplace_back("best." + names[i], ckpt.best.tensors()[i]);
  if (!ckpt.adam.m.empty()) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      file.arrays.emplace_back("adam.m." + names[i],
                               ad::Tensor<float>::from(ckpt.current.tensors()[i].shape(), ckpt.adam.m[i]));
      file.arrays.emplace_back("adam.v." + names[i],
                               ad::Tensor<float>::from(ckpt.current.tensors()[i].shape(), ckpt.adam.v[i]));
    }
  }
  file.arrays.emplace_back("norm.mean", vector_tensor(ckpt.current.mean));
  file.arrays.emplace_back("norm.std", vector_tensor(ckpt.current.stddev));
  write_weights_file(path, file);
}

TrainCheckpoint load_checkpoint(const std::filesystem::path& path, const StGcslConfig& config, Eigen::Index regions) {
  const auto file = read_weights_file(path);
  const auto source = path.string();
  if (auto it = file.header.find("kind"); it == file.header.end() || it->second != "checkpoint")
    throw FormatError(source + ": not a training checkpoint");
  const auto stored = StGcslConfig::from_map(file.header);
  if (parameter_layout(stored) != parameter_layout(config))
    throw ValidationError(source + ": checkpoint architecture differs from the requested configuration");

  TrainCheckpoint ckpt;
  ckpt.current = extract_weights(file, config, regions, "", source);
  ckpt.best = extract_weights(file, config, regions, "best.", source);
  ckpt.epochs_done = static_cast<int>(csv::to_int(file.header.at("epochs_done"), 0));
  ckpt.adam.step = static_cast<long>(csv::to_int(file.header.at("adam_step"), 0));
  ckpt.best_val = csv::to_double(file.header.at("best_val"), 0);
  if (ckpt.adam.step > 0) {
    for (const auto& [name, shape] : parameter_layout(config)) {
      ckpt.adam.m.push_back(find_array(file, "adam.m." + name, shape, source).value());
      ckpt.adam.v.push_back(find_array(file, "adam.v." + name, shape, source).value());
    }
  }
  for (const auto& [key, value] : file.header) {
    if (key.rfind("log.", 0) != 0) continue;
    const auto f = csv::split(value);
    if (f.size() != 4) throw FormatError(source + ": malformed log entry");
    ckpt.log.push_back({static_cast<int>(csv::to_int(f[0], 0)), csv::to_double(f[1], 0), csv::to_double(f[2], 0),
                        csv::to_double(f[3], 0)});
  }
  return ckpt;
}

}  // namespace fleetcast
