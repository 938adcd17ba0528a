#pragma once

// Synthetic latent world with planted directions. It stands in for an
// encoder/decoder pair: latents are standard normal, a fixed rule maps a
// latent to a SELFIES string, and targets are analytic functions of the
// latent.
//
// Decoder rule for a latent z:
//   atoms  L = clamp(round(10 + 3 * <length_dir, z>), 1, 60), all [C]
//   rings  R = min(round(max(0, 0.5 * <length_dir, z>)), 3); ring r closes a
//          6-ring ending at atom 5 + 6r (only when that atom exists)
//   hetero H = min(round(max(0, <hetero_dir, z>)), 5); carbons at positions
//          1, 3, 7, 9, 13 (those that exist) are replaced by [N], first H used
//
// Targets: y_linear = <linear_dir, z> + noise, y_indep = <indep_dir, z> + noise,
// y_quad = ||z_S||^2 + noise, plus the descriptors of the decoded molecule.
// Confounds: c_planted = <length_dir, z> + confounding * y_linear + noise,
// plus the four token statistics of the decoded sequence.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/panel.hpp"
#include "latprobe/selfies.hpp"

namespace latprobe::synth {

struct WorldSpec {
  std::size_t dim = 16;
  double noise = 0.05;        // relative to the signal std
  double confounding = 2.0;   // weight of y_linear in c_planted
  std::vector<std::size_t> nonlinear = {12, 13, 14, 15};
  std::uint64_t seed = 42;
};

inline constexpr int kBaseAtoms = 10;
inline constexpr int kAtomsPerUnit = 3;
inline constexpr int kMinAtoms = 1;
inline constexpr int kMaxAtoms = 60;
inline constexpr int kMaxRings = 3;
inline constexpr int kMaxHetero = 5;
inline constexpr double kRingScale = 0.5;
inline constexpr std::array<int, 5> kHeteroPositions = {1, 3, 7, 9, 13};

class World {
 public:
  /// Planted directions are orthonormal, drawn from the seed, and supported
  /// on the coordinates outside `nonlinear`. Throws InvalidArgument when
  /// fewer than four such coordinates remain.
  explicit World(WorldSpec spec);

  const WorldSpec& spec() const noexcept { return spec_; }
  const Vector& linear_dir() const noexcept { return linear_; }
  const Vector& length_dir() const noexcept { return length_; }
  const Vector& hetero_dir() const noexcept { return hetero_; }
  const Vector& indep_dir() const noexcept { return indep_; }

  int atom_count(std::span<const double> z) const;
  int ring_count(std::span<const double> z) const;
  int hetero_count(std::span<const double> z) const;

  /// Deterministic latent -> token sequence.
  selfies::TokenSequence decode(std::span<const double> z) const;

  /// N standard-normal latents with targets, confounds and an 80/10/10 split.
  /// Row i draws from its own generator seeded by (seed, i).
  PanelSet sample(std::size_t n) const;

 private:
  WorldSpec spec_;
  Vector linear_, length_, hetero_, indep_;
};

inline constexpr std::array<std::string_view, 3> kTargetNames = {"y_linear", "y_indep", "y_quad"};
inline constexpr std::string_view kPlantedConfound = "c_planted";

}  // namespace latprobe::synth
