#pragma once

// Latent navigation: straight-line traversals, the trust-region step,
// interpolation paths and the structural metrics computed on their decodes.

#include <array>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/selfies.hpp"
#include "latprobe/stats.hpp"

namespace latprobe::nav {

/// Maps a raw latent to a graph. A graph that is not a valid molecule, or a
/// thrown latprobe::Error, counts as a failed decode.
using Decoder = std::function<selfies::MolGraph(std::span<const double>)>;
/// Property of a decoded graph; non-finite results count as gaps.
using Evaluator = std::function<double(const selfies::MolGraph&)>;

struct TraversalResult {
  Vector alphas;
  Matrix values;  // seeds x alphas, NaN where the decode failed
  Vector median, q25, q75;
  std::vector<std::size_t> n_valid;
  double spearman = 0.0;       // alpha vs median, gaps skipped
  std::size_t violations = 0;  // adjacent median steps against the trend sign
  double slope = 0.0;          // least-squares slope of median on alpha
};

/// Single-origin sweep over linspace(lo, hi, n). Throws InvalidArgument for a
/// non-unit direction, AllDecodesFailed when nothing decodes.
TraversalResult traverse_dense(std::span<const double> direction, std::span<const double> origin, double lo,
                               double hi, std::size_t n, const Decoder& decode, const Evaluator& evaluate);

/// One row of `seeds` per start point. Alphas must be strictly increasing.
TraversalResult traverse_multiseed(std::span<const double> direction, const Matrix& seeds, std::span<const double> alphas,
                                   const Decoder& decode, const Evaluator& evaluate);

/// `count` distinct rows drawn from the split's test rows.
std::vector<std::size_t> pick_seed_rows(const stats::SplitAssignment& split, std::size_t count, std::uint64_t seed);

/// Counts adjacent steps of `curve` that move against `trend` (ties and gaps
/// are not violations).
std::size_t count_violations(std::span<const double> curve, double trend);

/// z0 + rho * w / ||w||. Throws ZeroDirection, InvalidArgument for rho < 0.
Vector trust_region_step(std::span<const double> z0, std::span<const double> w, double rho);

/// K evenly spaced points from z1 to z2, endpoints exact.
std::vector<Vector> interpolate(std::span<const double> z1, std::span<const double> z2, std::size_t k = 11);

// ---------------------------------------------------------------------------
// structural similarity

/// Radius-1 atom environments: element, then sorted (neighbor element, bond
/// order) pairs.
std::set<std::string> neighborhood_features(const selfies::MolGraph& g);
/// |a & b| / |a | b|; 1 when both are empty.
double tanimoto(const std::set<std::string>& a, const std::set<std::string>& b);

enum class Family {
  Alcohol,
  Phenol,
  Ether,
  Amine,
  Amide,
  CarboxylicAcid,
  Ester,
  Aldehyde,
  Ketone,
  Nitrile,
  Sulfonamide,
};

inline constexpr std::array<Family, 11> kFamilies = {
    Family::Alcohol, Family::Phenol,   Family::Ether,  Family::Amine,   Family::Amide,       Family::CarboxylicAcid,
    Family::Ester,   Family::Aldehyde, Family::Ketone, Family::Nitrile, Family::Sulfonamide,
};

std::string_view family_name(Family f);
bool in_family(const selfies::MolGraph& g, Family f);

/// Fraction of the path's steps whose decode is valid and in the family.
double family_retention(const std::vector<selfies::MolGraph>& path, Family f);

struct InterpResult {
  std::size_t steps = 0;
  Vector valid_fraction;           // per step
  Matrix similarity;               // pairs x (steps - 1), NaN when a side failed
  Vector midpoints;                // t of each adjacent pair
  Vector median_similarity;        // per midpoint
  std::vector<std::vector<selfies::MolGraph>> decodes;  // pairs x steps
  std::vector<std::vector<bool>> valid;
};

InterpResult interp_metrics(const std::vector<std::pair<Vector, Vector>>& endpoints, std::size_t k,
                            const Decoder& decode);

struct GenerationMetrics {
  std::size_t n = 0;
  double validity = 0.0;
  double uniqueness = 0.0;
  double novelty = 0.0;
};

/// Validity over all decodes; uniqueness and novelty over canonical digests of
/// the valid ones. Empty denominators give NaN.
GenerationMetrics generation_metrics(const std::vector<selfies::MolGraph>& decoded,
                                     const std::unordered_set<std::uint64_t>& training_hashes);

}  // namespace latprobe::nav
