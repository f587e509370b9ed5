#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// The operator set is the one the demand model needs: batched matmul against a
// weight matrix, graph propagation by a fixed N x N matrix, valid temporal
// convolution over [.., T, N, C] inputs, elementwise ops, concat/split/slice,
// m-gram windowing, dropout and scalar reductions. There is no broadcasting.
//
// Every op that touches the time/region layout works slice by slice on
// [N, C] blocks, so a slice's result never depends on how many other slices
// share the batch.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "fleetcast/error.hpp"
#include "fleetcast/rng.hpp"

namespace fleetcast::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.data_ = std::make_shared<Data>();
    t.data_->value = Array::Zero(numel(shape));
    t.data_->shape = std::move(shape);
    t.data_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, Array values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                       ad::to_string(shape));
    Tensor t;
    t.data_ = std::make_shared<Data>();
    t.data_->value = std::move(values);
    t.data_->shape = std::move(shape);
    t.data_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  int rank() const { return static_cast<int>(data_->shape.size()); }
  /// Dimension i; negative i counts from the back.
  Index dim(int i) const { return data_->shape[i < 0 ? data_->shape.size() + i : i]; }
  Index size() const { return data_->value.size(); }

  // Handle semantics: constness does not propagate to the shared storage.
  Array& value() const { return data_->value; }
  Scalar* ptr() const { return data_->value.data(); }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  bool has_grad() const { return data_->grad.size() == data_->value.size(); }
  /// Gradient buffer, allocated as zeros on first access.
  Array& grad() const {
    if (!has_grad()) data_->grad = Array::Zero(data_->value.size());
    return data_->grad;
  }
  void zero_grad() const { data_->grad.resize(0); }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + ad::to_string(shape()));
    return data_->value(0);
  }

  bool same_node(const Tensor& o) const { return data_ == o.data_; }

 private:
  struct Data {
    Shape shape;
    Array value;
    Array grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> data_;
};

/// Ordered record of backward rules. Ops append in execution order, which is a
/// topological order, so backward() replays the records once each in reverse.
template <typename Scalar>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return records_.size(); }

  /// Whether an op over these inputs must be recorded.
  template <typename... Ts>
  bool tracks(const Ts&... inputs) const {
    return recording_ && (inputs.requires_grad() || ...);
  }

  void record(std::function<void()> rule) { records_.push_back(std::move(rule)); }

  void backward(Tensor<Scalar>& loss) {
    if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + to_string(loss.shape()));
    loss.grad().setConstant(Scalar(1));
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

  void clear() { records_.clear(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> records_;
};

namespace detail {

template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename Scalar>
Tensor<Scalar> result(Shape shape, bool requires_grad) {
  return Tensor<Scalar>::zeros(std::move(shape), requires_grad);
}

// Splits a shape around `axis` into (outer, axis extent, inner).
inline void around(const Shape& s, int axis, Index& outer, Index& mid, Index& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline int norm_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  require(a >= 0 && a < rank, "axis out of range");
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// [.., p, q] x [q, r] -> [.., p, r], one [p, q] block at a time.
template <typename Scalar>
Tensor<Scalar> matmul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using namespace detail;
  require(a.rank() >= 2 && b.rank() == 2, "matmul expects [.., p, q] x [q, r]");
  const Index p = a.dim(-2), q = a.dim(-1), r = b.dim(1);
  require(b.dim(0) == q, "matmul inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Shape os = a.shape();
  os.back() = r;
  auto out = result<Scalar>(os, tape.tracks(a, b));
  const Index blocks = a.size() / (p * q);
  ConstMatMap<Scalar> bm(b.ptr(), q, r);
  for (Index s = 0; s < blocks; ++s)
    MatMap<Scalar>(out.ptr() + s * p * r, p, r).noalias() = ConstMatMap<Scalar>(a.ptr() + s * p * q, p, q) * bm;
  if (out.requires_grad()) {
    tape.record([a, b, out, p, q, r, blocks]() mutable {
      if (!out.has_grad()) return;
      ConstMatMap<Scalar> bm(b.ptr(), q, r);
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (Index s = 0; s < blocks; ++s)
          MatMap<Scalar>(ga.data() + s * p * q, p, q).noalias() +=
              ConstMatMap<Scalar>(out.grad().data() + s * p * r, p, r) * bm.transpose();
      }
      if (b.requires_grad()) {
        // All blocks stacked form one [blocks*p, q] matrix.
        MatMap<Scalar>(b.grad().data(), q, r).noalias() +=
            ConstMatMap<Scalar>(a.ptr(), blocks * p, q).transpose() *
            ConstMatMap<Scalar>(out.grad().data(), blocks * p, r);
      }
    });
  }
  return out;
}

/// Left-multiplies every [N, C] block of x by a fixed N x N matrix (graph propagation).
template <typename Scalar>
Tensor<Scalar> propagate(Tape<Scalar>& tape, const RowMatrix<Scalar>& adj, const Tensor<Scalar>& x) {
  using namespace detail;
  require(x.rank() >= 2, "propagate expects [.., N, C]");
  const Index n = x.dim(-2), c = x.dim(-1);
  require(adj.rows() == n && adj.cols() == n, "propagation matrix is " + std::to_string(adj.rows()) + "x" +
                                                  std::to_string(adj.cols()) + " but input has N=" + std::to_string(n));
  auto out = result<Scalar>(x.shape(), tape.tracks(x));
  const Index blocks = x.size() / (n * c);
  for (Index s = 0; s < blocks; ++s)
    MatMap<Scalar>(out.ptr() + s * n * c, n, c).noalias() = adj * ConstMatMap<Scalar>(x.ptr() + s * n * c, n, c);
  if (out.requires_grad()) {
    tape.record([adj, x, out, n, c, blocks]() mutable {
      if (!out.has_grad()) return;
      auto& gx = x.grad();
      for (Index s = 0; s < blocks; ++s)
        MatMap<Scalar>(gx.data() + s * n * c, n, c).noalias() +=
            adj.transpose() * ConstMatMap<Scalar>(out.grad().data() + s * n * c, n, c);
    });
  }
  return out;
}

/// Valid (no padding, stride 1) convolution along the time axis.
/// x: [.., T, N, C_in], kernel: [k, 1, C_in, C_out] -> [.., T-k+1, N, C_out].
template <typename Scalar>
Tensor<Scalar> temporal_conv(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& kernel) {
  using namespace detail;
  require(x.rank() >= 3, "temporal_conv expects [.., T, N, C]");
  require(kernel.rank() == 4 && kernel.dim(1) == 1, "temporal kernel must be [k, 1, C_in, C_out]");
  const Index t = x.dim(-3), n = x.dim(-2), ci = x.dim(-1);
  const Index k = kernel.dim(0), co = kernel.dim(3);
  require(kernel.dim(2) == ci, "temporal kernel expects " + std::to_string(kernel.dim(2)) +
                                   " input channels, input has " + std::to_string(ci));
  require(t >= k, "time length " + std::to_string(t) + " shorter than kernel " + std::to_string(k));
  const Index to = t - k + 1;
  const Index batch = x.size() / (t * n * ci);
  Shape os = x.shape();
  os[os.size() - 3] = to;
  os.back() = co;
  auto out = result<Scalar>(os, tape.tracks(x, kernel));
  for (Index b = 0; b < batch; ++b)
    for (Index s = 0; s < to; ++s) {
      MatMap<Scalar> o(out.ptr() + (b * to + s) * n * co, n, co);
      for (Index tau = 0; tau < k; ++tau)
        o.noalias() += ConstMatMap<Scalar>(x.ptr() + (b * t + s + tau) * n * ci, n, ci) *
                       ConstMatMap<Scalar>(kernel.ptr() + tau * ci * co, ci, co);
    }
  if (out.requires_grad()) {
    tape.record([x, kernel, out, t, n, ci, k, co, to, batch]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (Index b = 0; b < batch; ++b)
          for (Index s = 0; s < to; ++s)
            for (Index tau = 0; tau < k; ++tau)
              MatMap<Scalar>(gx.data() + (b * t + s + tau) * n * ci, n, ci).noalias() +=
                  ConstMatMap<Scalar>(g.data() + (b * to + s) * n * co, n, co) *
                  ConstMatMap<Scalar>(kernel.ptr() + tau * ci * co, ci, co).transpose();
      }
      if (kernel.requires_grad()) {
        auto& gk = kernel.grad();
        for (Index b = 0; b < batch; ++b)
          for (Index tau = 0; tau < k; ++tau)
            // Output steps s and input steps s+tau are contiguous runs of [N, C] blocks.
            MatMap<Scalar>(gk.data() + tau * ci * co, ci, co).noalias() +=
                ConstMatMap<Scalar>(x.ptr() + (b * t + tau) * n * ci, to * n, ci).transpose() *
                ConstMatMap<Scalar>(g.data() + b * to * n * co, to * n, co);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sigmoid(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
  auto out = detail::result<Scalar>(x.shape(), tape.tracks(x));
  out.value() = Scalar(1) / (Scalar(1) + (-x.value()).exp());
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      x.grad() += out.grad() * out.value() * (Scalar(1) - out.value());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> hadamard(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "hadamard shape mismatch: " + to_string(a.shape()) + " vs " +
                                              to_string(b.shape()));
  auto out = detail::result<Scalar>(a.shape(), tape.tracks(a, b));
  out.value() = a.value() * b.value();
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) a.grad() += out.grad() * b.value();
      if (b.requires_grad()) b.grad() += out.grad() * a.value();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "add shape mismatch: " + to_string(a.shape()) + " vs " +
                                              to_string(b.shape()));
  auto out = detail::result<Scalar>(a.shape(), tape.tracks(a, b));
  out.value() = a.value() + b.value();
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require(a.shape() == b.shape(), "sub shape mismatch: " + to_string(a.shape()) + " vs " +
                                              to_string(b.shape()));
  auto out = detail::result<Scalar>(a.shape(), tape.tracks(a, b));
  out.value() = a.value() - b.value();
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() -= out.grad();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(Tape<Scalar>& tape, const Tensor<Scalar>& x, Scalar factor) {
  auto out = detail::result<Scalar>(x.shape(), tape.tracks(x));
  out.value() = x.value() * factor;
  if (out.requires_grad()) {
    tape.record([x, out, factor]() mutable {
      if (!out.has_grad()) return;
      x.grad() += out.grad() * factor;
    });
  }
  return out;
}

/// x: [.., C] plus bias: [C] on every row.
template <typename Scalar>
Tensor<Scalar> add_bias(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  using namespace detail;
  require(bias.rank() == 1 && bias.dim(0) == x.dim(-1), "bias must be [C] matching the last axis");
  const Index c = x.dim(-1), rows = x.size() / c;
  auto out = result<Scalar>(x.shape(), tape.tracks(x, bias));
  MatMap<Scalar>(out.ptr(), rows, c) =
      ConstMatMap<Scalar>(x.ptr(), rows, c).rowwise() + ConstMatMap<Scalar>(bias.ptr(), 1, c).row(0);
  if (out.requires_grad()) {
    tape.record([x, bias, out, rows, c]() mutable {
      if (!out.has_grad()) return;
      if (x.requires_grad()) x.grad() += out.grad();
      if (bias.requires_grad())
        MatMap<Scalar>(bias.grad().data(), 1, c) += ConstMatMap<Scalar>(out.grad().data(), rows, c).colwise().sum();
    });
  }
  return out;
}

/// Inverted dropout: kept units scaled by 1/(1-rate) while training, identity otherwise.
template <typename Scalar>
Tensor<Scalar> dropout(Tape<Scalar>& tape, const Tensor<Scalar>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  typename Tensor<Scalar>::Array mask(x.size());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  for (Index i = 0; i < mask.size(); ++i) mask(i) = uniform01(rng) < rate ? Scalar(0) : keep_scale;
  auto out = detail::result<Scalar>(x.shape(), tape.tracks(x));
  out.value() = x.value() * mask;
  if (out.requires_grad()) {
    tape.record([x, out, mask]() mutable {
      if (!out.has_grad()) return;
      x.grad() += out.grad() * mask;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> reshape(Tape<Scalar>& tape, const Tensor<Scalar>& x, Shape shape) {
  detail::require(numel(shape) == x.size(), "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  auto out = Tensor<Scalar>::from(std::move(shape), x.value(), tape.tracks(x));
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      x.grad() += out.grad();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat(Tape<Scalar>& tape, const std::vector<Tensor<Scalar>>& parts, int axis) {
  using namespace detail;
  require(!parts.empty(), "concat of nothing");
  const int ax = norm_axis(axis, parts[0].rank());
  Shape os = parts[0].shape();
  os[ax] = 0;
  bool grad = false;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    require(p.rank() == parts[0].rank(), "concat rank mismatch");
    a[ax] = b[ax] = 0;
    require(a == b, "concat shapes differ off the concat axis");
    os[ax] += p.dim(ax);
    grad = grad || tape.tracks(p);
  }
  Index outer, mid, inner;
  around(os, ax, outer, mid, inner);
  auto out = result<Scalar>(os, grad);
  Index offset = 0;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    const Index w = p.dim(ax) * inner;
    offsets.push_back(offset);
    for (Index o = 0; o < outer; ++o)
      out.value().segment(o * mid * inner + offset, w) = p.value().segment(o * w, w);
    offset += w;
  }
  if (out.requires_grad()) {
    tape.record([parts, out, offsets, outer, mid, inner, ax]() mutable {
      if (!out.has_grad()) return;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        const Index w = parts[i].dim(ax) * inner;
        auto& g = parts[i].grad();
        for (Index o = 0; o < outer; ++o) g.segment(o * w, w) += out.grad().segment(o * mid * inner + offsets[i], w);
      }
    });
  }
  return out;
}

/// Contiguous sub-range [from, from+len) along an axis.
template <typename Scalar>
Tensor<Scalar> slice(Tape<Scalar>& tape, const Tensor<Scalar>& x, int axis, Index from, Index len) {
  using namespace detail;
  const int ax = norm_axis(axis, x.rank());
  require(from >= 0 && len >= 0 && from + len <= x.dim(ax), "slice out of range");
  Index outer, mid, inner;
  around(x.shape(), ax, outer, mid, inner);
  Shape os = x.shape();
  os[ax] = len;
  auto out = result<Scalar>(os, tape.tracks(x));
  for (Index o = 0; o < outer; ++o)
    out.value().segment(o * len * inner, len * inner) = x.value().segment((o * mid + from) * inner, len * inner);
  if (out.requires_grad()) {
    tape.record([x, out, outer, mid, inner, from, len]() mutable {
      if (!out.has_grad()) return;
      auto& g = x.grad();
      for (Index o = 0; o < outer; ++o)
        g.segment((o * mid + from) * inner, len * inner) += out.grad().segment(o * len * inner, len * inner);
    });
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> split(Tape<Scalar>& tape, const Tensor<Scalar>& x, int axis,
                                  const std::vector<Index>& sizes) {
  const int ax = detail::norm_axis(axis, x.rank());
  detail::require(std::accumulate(sizes.begin(), sizes.end(), Index{0}) == x.dim(ax),
                  "split sizes do not cover the axis");
  std::vector<Tensor<Scalar>> out;
  Index from = 0;
  for (Index s : sizes) {
    out.push_back(slice(tape, x, ax, from, s));
    from += s;
  }
  return out;
}

/// Time steps [from, from+len) of a [.., T, N, C] tensor.
template <typename Scalar>
Tensor<Scalar> slice_time(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index from, Index len) {
  detail::require(x.rank() >= 3, "slice_time expects [.., T, N, C]");
  return slice(tape, x, x.rank() - 3, from, len);
}

/// Overlapping m-step windows: [B, T, N, C] -> [B*(T-m+1), m, N, C], window i of
/// batch b at position b*(T-m+1)+i. Rank 3 input is treated as B = 1.
template <typename Scalar>
Tensor<Scalar> time_windows(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index m) {
  using namespace detail;
  require(x.rank() == 3 || x.rank() == 4, "time_windows expects [B, T, N, C] or [T, N, C]");
  const Index t = x.dim(-3), n = x.dim(-2), c = x.dim(-1);
  require(m >= 1 && t >= m, "window length " + std::to_string(m) + " exceeds time length " + std::to_string(t));
  const Index batch = x.rank() == 4 ? x.dim(0) : 1;
  const Index windows = t - m + 1, block = n * c;
  auto out = result<Scalar>({batch * windows, m, n, c}, tape.tracks(x));
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < windows; ++i)
      out.value().segment((b * windows + i) * m * block, m * block) =
          x.value().segment((b * t + i) * block, m * block);
  if (out.requires_grad()) {
    tape.record([x, out, batch, windows, t, m, block]() mutable {
      if (!out.has_grad()) return;
      auto& g = x.grad();
      for (Index b = 0; b < batch; ++b)
        for (Index i = 0; i < windows; ++i)
          g.segment((b * t + i) * block, m * block) += out.grad().segment((b * windows + i) * m * block, m * block);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
  auto out = detail::result<Scalar>({1}, tape.tracks(x));
  out.value()(0) = x.value().sum();
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      x.grad() += out.grad()(0);
    });
  }
  return out;
}

/// Sum of squared entries.
template <typename Scalar>
Tensor<Scalar> sum_squares(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
  auto out = detail::result<Scalar>({1}, tape.tracks(x));
  out.value()(0) = x.value().square().sum();
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      if (!out.has_grad()) return;
      x.grad() += Scalar(2) * out.grad()(0) * x.value();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename Scalar>
struct AdamState {
  std::vector<typename Tensor<Scalar>::Array> m;
  std::vector<typename Tensor<Scalar>::Array> v;
  long step = 0;
};

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over `params` using their current grads.
/// Parameters without a gradient buffer are treated as having zero gradient.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>>& params, AdamState<Scalar>& state, const AdamOptions& opt) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor<Scalar>::Array::Zero(p.size()));
      state.v.push_back(Tensor<Scalar>::Array::Zero(p.size()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("Adam state does not match parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.size()) throw ShapeError("Adam state size mismatch for parameter " + std::to_string(i));
    if (!p.has_grad()) {
      state.m[i] *= Scalar(opt.beta1);
      state.v[i] *= Scalar(opt.beta2);
    } else {
      const auto& g = p.grad();
      state.m[i] = Scalar(opt.beta1) * state.m[i] + Scalar(1 - opt.beta1) * g;
      state.v[i] = Scalar(opt.beta2) * state.v[i] + Scalar(1 - opt.beta2) * g.square();
    }
    p.value() -= Scalar(opt.lr) * (state.m[i] / Scalar(c1)) / ((state.v[i] / Scalar(c2)).sqrt() + Scalar(opt.eps));
  }
}

}  // namespace fleetcast::ad
