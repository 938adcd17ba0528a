#pragma once

// Linear probes as global latent directions, confound residualization, and
// the robustness controls run on top of them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/stats.hpp"

namespace latprobe::probe {

enum class Method { Ols, Ridge };

std::string_view to_string(Method m);

struct ProbeOptions {
  Method method = Method::Ols;
  double lambda = 1e-2;  // ridge only
};

/// R^2 on each partition; NaN where a partition has fewer than 2 usable rows.
struct SplitScores {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

struct ProbeModel {
  std::string target;
  Method method = Method::Ols;
  stats::LinearModel model;  // carries the latent standardizer
  Vector direction_raw;      // unit norm, raw latent coordinates
  SplitScores r2;
  std::uint64_t split_fingerprint = 0;
  std::size_t n_train = 0;
};

/// R^2 of a fitted model on each partition of `split`.
SplitScores scores(const stats::LinearModel& m, const Matrix& x, std::span<const double> y,
                   const stats::SplitAssignment& split);

/// Unit vector along w / s_Z (elementwise). Throws ZeroNormVector.
Vector raw_direction(const stats::LinearModel& model);

/// Fits on train rows with a finite target; throws ZeroVarianceTarget when the
/// target is constant over those rows.
ProbeModel fit_probe(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                     std::string target, ProbeOptions opts = {});

/// Prediction change for a step of size epsilon along w in standardized
/// latent coordinates: epsilon * ||w||^2.
double predicted_delta(const ProbeModel& probe, double epsilon);

// ---------------------------------------------------------------------------
// residualization

struct ResidualTarget {
  std::string base_target;
  Vector values;  // y - confound prediction; NaN where y is missing
  stats::LinearModel confound_model;
  SplitScores confound_r2;
};

/// Ridge C -> y per property column on train rows, predicted on every row.
/// Rows where any confound is non-finite yield NaN residuals.
std::vector<ResidualTarget> residualize(const Matrix& confounds, const Matrix& properties,
                                        const std::vector<std::string>& names,
                                        const stats::SplitAssignment& split, double lambda = 10.0);

// ---------------------------------------------------------------------------
// controls

struct BootstrapResult {
  Vector cosines;  // sign-aligned
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t redraws = 0;  // degenerate resamples drawn again
};

/// B resamples of the train rows with replacement; each refit is compared to
/// the full-train reference direction after flipping to a nonnegative inner
/// product. Resample b uses seed + b.
BootstrapResult bootstrap_stability(const Matrix& z, std::span<const double> y,
                                    const stats::SplitAssignment& split, std::size_t resamples,
                                    std::uint64_t seed, ProbeOptions opts = {});

struct PermutationResult {
  double val_r2 = 0.0;
  double test_r2 = 0.0;
};

/// Shuffles target values among train rows only, refits, scores untouched
/// val/test rows.
PermutationResult permutation_control(const Matrix& z, std::span<const double> y,
                                      const stats::SplitAssignment& split, std::uint64_t seed,
                                      ProbeOptions opts = {});
/// Same with an explicit permutation of split.train positions.
PermutationResult permutation_control(const Matrix& z, std::span<const double> y,
                                      const stats::SplitAssignment& split,
                                      std::span<const std::size_t> train_permutation, ProbeOptions opts = {});
/// Runs with seeds seed, seed+1, ..., seed+runs-1.
std::vector<PermutationResult> permutation_runs(const Matrix& z, std::span<const double> y,
                                                const stats::SplitAssignment& split, std::size_t runs,
                                                std::uint64_t seed, ProbeOptions opts = {});

/// Haar-ish random orthogonal matrix: Gram-Schmidt on a seeded Gaussian matrix.
Matrix random_orthogonal(std::size_t d, std::uint64_t seed);

/// Max |prediction difference| on val+test rows between a probe on Z and a
/// probe refit on rows Q z.
double rotation_invariance(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                           const Matrix& rotation, ProbeOptions opts = {});
double rotation_invariance(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                           std::uint64_t seed, ProbeOptions opts = {});

// ---------------------------------------------------------------------------
// alignment

struct NamedDirection {
  std::string name;
  Vector direction;
};

struct AlignmentResult {
  std::vector<std::string> properties;
  std::vector<std::string> confounds;
  Matrix cosine;          // properties x confounds
  Vector observed_max;    // per property, max_k |cos|
  Vector null_max;        // per random direction, max_k |cos|
  double null_q50 = 0.0;
  double null_q95 = 0.0;
  double null_q99 = 0.0;
};

/// Throws ZeroDirection on a zero vector and DimensionMismatch on ragged input.
/// With n_random == 0 the null quantiles are NaN.
AlignmentResult alignment_analysis(const std::vector<NamedDirection>& properties,
                                   const std::vector<NamedDirection>& confounds, std::size_t n_random,
                                   std::uint64_t seed);

/// Pairwise cosine between directions (symmetric, unit diagonal).
Matrix direction_similarity(const std::vector<NamedDirection>& dirs);

/// One ridge probe per confound column.
std::vector<ProbeModel> confound_directions(const Matrix& z, const Matrix& confounds,
                                            const std::vector<std::string>& names,
                                            const stats::SplitAssignment& split, double lambda = 1.0);

struct CorrelationMatrices {
  Matrix pearson;   // K x M, NaN where undefined
  Matrix spearman;  // K x M
};

/// Pairwise-complete correlations between property and confound columns.
CorrelationMatrices correlation_matrices(const Matrix& properties, const Matrix& confounds);

}  // namespace latprobe::probe
