#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace fleetcast {

using Rng = std::mt19937_64;

/// Independent generator for a named component (init, planner, kmeans, dropout, ...).
/// Every stream is a pure function of (seed, name).
Rng make_stream(std::uint64_t seed, std::string_view name);

/// As above, with an extra index (epoch, run number) folded in.
Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index);

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace fleetcast
