#pragma once

#include <cstdint>
#include <random>

#include "latprobe/matrix.hpp"

namespace latprobe {

using Rng = std::mt19937_64;

/// Per-stage seed offsets. Every random draw in a run derives from the single
/// `--seed` value plus one of these, plus a task index where work is split.
namespace seed_offset {
inline constexpr std::uint64_t split = 0;
inline constexpr std::uint64_t bootstrap = 1000;
inline constexpr std::uint64_t permutation = 2000;
inline constexpr std::uint64_t rotation = 3000;
inline constexpr std::uint64_t null_directions = 4000;
inline constexpr std::uint64_t mlp = 5000;
inline constexpr std::uint64_t traversal = 6000;
inline constexpr std::uint64_t interpolation = 7000;
inline constexpr std::uint64_t world = 8000;
}  // namespace seed_offset

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Vector normal_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

}  // namespace latprobe
