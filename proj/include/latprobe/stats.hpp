#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latprobe/matrix.hpp"

namespace latprobe::stats {

// ---------------------------------------------------------------------------
// splits

struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 42;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;

  std::size_t size() const noexcept { return train.size() + val.size() + test.size(); }
  /// Digest of the three index lists; equal splits share a fingerprint.
  std::uint64_t fingerprint() const;
};

/// Two-stage shuffled 80/10/10 split of `rows` (held-out sizes rounded up at
/// each stage). Throws TooFewRows when fewer than 3 rows are given.
SplitAssignment make_split(std::span<const std::size_t> rows, std::uint64_t seed);
SplitAssignment make_split(std::size_t n, std::uint64_t seed);

/// Single-stage train/test split (val left empty); test size rounded up.
SplitAssignment make_holdout_split(std::span<const std::size_t> rows, double test_fraction,
                                   std::uint64_t seed);

/// Keeps only indices whose `keep` flag is set, in each of the three lists.
SplitAssignment restrict_split(const SplitAssignment& split, const std::vector<bool>& keep);

// ---------------------------------------------------------------------------
// standardization

inline constexpr double kMinStd = 1e-8;

/// Column means and population standard deviations, replaced by 1.0 when
/// below kMinStd.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x, std::span<const std::size_t> rows);
  static Standardizer fit(const Matrix& x);

  Matrix transform(const Matrix& x) const;
  Matrix transform_rows(const Matrix& x, std::span<const std::size_t> rows) const;
  Vector transform_point(std::span<const double> z) const;
  Matrix inverse(const Matrix& xs) const;
  Vector inverse_point(std::span<const double> zs) const;
};

struct ScalarStandardizer {
  double mean = 0.0;
  double scale = 1.0;

  static ScalarStandardizer fit(std::span<const double> y, std::span<const std::size_t> rows);
};

// ---------------------------------------------------------------------------
// linear models

/// Affine model fitted in standardized coordinates:
///   (y - y.mean)/y.scale = w . ((x - x.mean)/x.scale) + b
struct LinearModel {
  Standardizer x_scaler;
  ScalarStandardizer y_scaler;
  Vector w;
  double b = 0.0;
  double lambda = 0.0;
  /// Diagonal jitter that was needed for the factorization (0 if none).
  double jitter = 0.0;

  std::size_t dim() const noexcept { return w.size(); }
  double predict(std::span<const double> x) const;
  Vector predict(const Matrix& x) const;
  Vector predict_rows(const Matrix& x, std::span<const std::size_t> rows) const;
  /// Coefficients in raw input / raw target units.
  Vector raw_coefficients() const;
  double raw_intercept() const;
};

/// Solves the SPD system a x = rhs by Cholesky, retrying with diagonal
/// jitter 1e-10, 1e-9, ..., 1e-6 (scaled by the mean diagonal) on failure.
/// Returns the jitter used through `jitter_used`. Throws SingularSystem.
Vector solve_spd(const Matrix& a, std::span<const double> rhs, double* jitter_used = nullptr);
/// Cholesky factor L (lower) with a = L L^T, or empty when not positive definite.
Matrix cholesky(const Matrix& a);

/// Ordinary least squares on `train_rows`, inputs and target standardized
/// by train statistics. Throws TooFewRows, NonFiniteInput, SingularSystem.
LinearModel fit_ols(const Matrix& x, std::span<const double> y, std::span<const std::size_t> train_rows);

/// Closed-form ridge (X^T X + lambda I) w = X^T y at one fixed lambda.
LinearModel fit_ridge_fixed(const Matrix& x, std::span<const double> y,
                            std::span<const std::size_t> train_rows, double lambda);

/// np.logspace(-3, 3, 13)
std::vector<double> default_lambda_grid();

struct RidgeSelection {
  LinearModel model;
  std::vector<double> grid;
  std::vector<double> val_r2;
  std::size_t selected = 0;
};

/// Fits every lambda of the grid on train rows and keeps the one with the best
/// validation R^2 (first one wins ties).
RidgeSelection fit_ridge(const Matrix& x, std::span<const double> y, std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> val_rows,
                         const std::vector<double>& grid = default_lambda_grid());

// ---------------------------------------------------------------------------
// scores

/// 1 - SS_res/SS_tot. Throws DimensionMismatch, TooFewRows, ZeroVarianceTarget.
double r2(std::span<const double> y_true, std::span<const double> y_pred);
double r2_rows(std::span<const double> y_true, std::span<const double> y_pred,
               std::span<const std::size_t> rows);

double mean(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);
/// Average ranks (1-based) with ties sharing their mean rank.
Vector average_ranks(std::span<const double> x);
double cosine(std::span<const double> u, std::span<const double> v);

/// Linear-interpolation quantile (numpy default) of the finite values.
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

/// Least-squares slope of y on x.
double slope(std::span<const double> x, std::span<const double> y);

Vector linspace(double lo, double hi, std::size_t n);

}  // namespace latprobe::stats
