#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fleetcast/tensor.hpp"

namespace testing {

using fleetcast::ad::Tape;
using fleetcast::ad::Tensor;

struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t entries = 0;
};

/// Compares tape gradients of a scalar loss against central differences for
/// every entry of every parameter. Relative error per entry is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const std::function<Tensor<double>(Tape<double>&)>& loss,
                                 std::vector<Tensor<double>> params, double step = 1e-6, double floor = 1e-7) {
  for (auto& p : params) p.zero_grad();
  Tape<double> tape;
  auto l = loss(tape);
  tape.backward(l);
  std::vector<Eigen::ArrayXd> analytic;
  for (auto& p : params) analytic.push_back(p.has_grad() ? Eigen::ArrayXd(p.grad()) : Eigen::ArrayXd::Zero(p.size()));

  GradCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i].value();
    for (Eigen::Index e = 0; e < v.size(); ++e) {
      const double keep = v(e);
      v(e) = keep + step;
      Tape<double> t1(false);
      const double up = loss(t1).item();
      v(e) = keep - step;
      Tape<double> t2(false);
      const double down = loss(t2).item();
      v(e) = keep;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[i](e);
      const double diff = std::abs(a - numeric);
      out.max_abs = std::max(out.max_abs, diff);
      out.max_rel = std::max(out.max_rel, diff / std::max({std::abs(a), std::abs(numeric), floor}));
      ++out.entries;
    }
  }
  return out;
}

/// Fixed random weighting of an output so every entry gets a distinct gradient.
inline Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::ArrayXd w(y.size());
  for (auto& x : w) x = n(rng);
  return fleetcast::ad::sum(tape, fleetcast::ad::hadamard(tape, y, Tensor<double>::from(y.shape(), w)));
}

inline Tensor<double> random_tensor(fleetcast::ad::Shape shape, std::mt19937_64& rng, double scale = 1.0,
                                    bool requires_grad = true) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::ArrayXd v(fleetcast::ad::numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor<double>::from(std::move(shape), v, requires_grad);
}

}  // namespace testing
