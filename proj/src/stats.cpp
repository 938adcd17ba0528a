#include "latprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latprobe/errors.hpp"
#include "latprobe/kernels.hpp"
#include "latprobe/rng.hpp"

namespace latprobe::stats {

namespace {

std::uint64_t fold(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::size_t ceil_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Standardized training design shared by OLS and every ridge lambda.
struct Design {
  Standardizer x_scaler;
  ScalarStandardizer y_scaler;
  Matrix gram;
  Vector rhs;
  Vector col_mean;  // of standardized train columns
  double y_mean_std = 0.0;
};

Design prepare(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows) {
  if (x.rows() != y.size()) throw Error(ErrorKind::DimensionMismatch, "X and y row counts differ");
  const std::size_t d = x.cols();
  if (rows.size() < d + 1)
    throw Error(ErrorKind::TooFewRows, "need at least d+1 = " + std::to_string(d + 1) + " train rows, got " +
                                           std::to_string(rows.size()));
  for (auto r : rows) {
    if (r >= x.rows()) throw Error(ErrorKind::DimensionMismatch, "row index out of range");
    if (!std::isfinite(y[r])) throw Error(ErrorKind::NonFiniteInput, "non-finite target in train rows");
    for (double v : x.row(r))
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite input in train rows");
  }
  Design des;
  des.x_scaler = Standardizer::fit(x, rows);
  des.y_scaler = ScalarStandardizer::fit(y, rows);
  const Matrix xs = des.x_scaler.transform_rows(x, rows);
  Vector ys(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ys[i] = (y[rows[i]] - des.y_scaler.mean) / des.y_scaler.scale;
  des.gram = kernels::par::gram(xs);
  des.rhs = kernels::par::gemv_t(xs, ys);
  des.col_mean.assign(d, 0.0);
  for (std::size_t i = 0; i < xs.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) des.col_mean[j] += xs(i, j);
  for (double& m : des.col_mean) m /= static_cast<double>(xs.rows());
  des.y_mean_std = mean(ys);
  return des;
}

LinearModel solve_design(const Design& des, double lambda) {
  Matrix a = des.gram;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  LinearModel m;
  m.x_scaler = des.x_scaler;
  m.y_scaler = des.y_scaler;
  m.lambda = lambda;
  m.w = solve_spd(a, des.rhs, &m.jitter);
  m.b = des.y_mean_std - dot(m.w, des.col_mean);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// splits

std::uint64_t SplitAssignment::fingerprint() const {
  std::uint64_t h = 0xc0ffee;
  for (const auto* part : {&train, &val, &test}) {
    h = fold(h, part->size());
    for (auto i : *part) h = fold(h, i);
  }
  return h;
}

SplitAssignment make_split(std::span<const std::size_t> rows, std::uint64_t seed) {
  const std::size_t n = rows.size();
  if (n < 3) throw Error(ErrorKind::TooFewRows, "a three-way split needs at least 3 rows");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> perm(rows.begin(), rows.end());
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_hold = ceil_count(0.2, n);
  SplitAssignment s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> hold(perm.end() - static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::shuffle(hold.begin(), hold.end(), rng);
  const std::size_t n_test = ceil_count(0.5, hold.size());
  s.val.assign(hold.begin(), hold.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(hold.end() - static_cast<std::ptrdiff_t>(n_test), hold.end());
  return s;
}

SplitAssignment make_split(std::size_t n, std::uint64_t seed) {
  const auto rows = iota_rows(n);
  return make_split(rows, seed);
}

SplitAssignment make_holdout_split(std::span<const std::size_t> rows, double test_fraction,
                                   std::uint64_t seed) {
  if (rows.size() < 2) throw Error(ErrorKind::TooFewRows, "a holdout split needs at least 2 rows");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "test fraction must lie in (0, 1)");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> perm(rows.begin(), rows.end());
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_test = ceil_count(test_fraction, perm.size());
  SplitAssignment s;
  s.seed = seed;
  s.train_ratio = 1.0 - test_fraction;
  s.val_ratio = 0.0;
  s.test_ratio = test_fraction;
  s.train.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(perm.end() - static_cast<std::ptrdiff_t>(n_test), perm.end());
  return s;
}

SplitAssignment restrict_split(const SplitAssignment& split, const std::vector<bool>& keep) {
  SplitAssignment s = split;
  auto filter = [&](std::vector<std::size_t>& v) {
    std::erase_if(v, [&](std::size_t i) { return i >= keep.size() || !keep[i]; });
  };
  filter(s.train);
  filter(s.val);
  filter(s.test);
  return s;
}

// ---------------------------------------------------------------------------
// standardization

Standardizer Standardizer::fit(const Matrix& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (rows.empty()) return s;
  for (auto r : rows)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(r, j);
  const double n = static_cast<double>(rows.size());
  for (double& m : s.mean) m /= n;
  Vector var(d, 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(r, j) - s.mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd < kMinStd ? 1.0 : sd;
  }
  return s;
}

Standardizer Standardizer::fit(const Matrix& x) {
  const auto rows = iota_rows(x.rows());
  return fit(x, rows);
}

Matrix Standardizer::transform(const Matrix& x) const {
  const auto rows = iota_rows(x.rows());
  return transform_rows(x, rows);
}

Matrix Standardizer::transform_rows(const Matrix& x, std::span<const std::size_t> rows) const {
  if (x.cols() != mean.size()) throw Error(ErrorKind::DimensionMismatch, "standardizer width mismatch");
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(rows[i], j) - mean[j]) / scale[j];
  return out;
}

Vector Standardizer::transform_point(std::span<const double> z) const {
  if (z.size() != mean.size()) throw Error(ErrorKind::DimensionMismatch, "standardizer width mismatch");
  Vector out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = (z[j] - mean[j]) / scale[j];
  return out;
}

Matrix Standardizer::inverse(const Matrix& xs) const {
  if (xs.cols() != mean.size()) throw Error(ErrorKind::DimensionMismatch, "standardizer width mismatch");
  Matrix out(xs.rows(), xs.cols());
  for (std::size_t i = 0; i < xs.rows(); ++i)
    for (std::size_t j = 0; j < xs.cols(); ++j) out(i, j) = mean[j] + scale[j] * xs(i, j);
  return out;
}

Vector Standardizer::inverse_point(std::span<const double> zs) const {
  if (zs.size() != mean.size()) throw Error(ErrorKind::DimensionMismatch, "standardizer width mismatch");
  Vector out(zs.size());
  for (std::size_t j = 0; j < zs.size(); ++j) out[j] = mean[j] + scale[j] * zs[j];
  return out;
}

ScalarStandardizer ScalarStandardizer::fit(std::span<const double> y, std::span<const std::size_t> rows) {
  ScalarStandardizer s;
  if (rows.empty()) return s;
  double m = 0.0;
  for (auto r : rows) m += y[r];
  m /= static_cast<double>(rows.size());
  double v = 0.0;
  for (auto r : rows) v += (y[r] - m) * (y[r] - m);
  const double sd = std::sqrt(v / static_cast<double>(rows.size()));
  s.mean = m;
  s.scale = sd < kMinStd ? 1.0 : sd;
  return s;
}

// ---------------------------------------------------------------------------
// linear models

double LinearModel::predict(std::span<const double> x) const {
  if (x.size() != w.size()) throw Error(ErrorKind::DimensionMismatch, "model width mismatch");
  double s = b;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * (x[j] - x_scaler.mean[j]) / x_scaler.scale[j];
  return y_scaler.mean + y_scaler.scale * s;
}

Vector LinearModel::predict(const Matrix& x) const {
  Vector out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

Vector LinearModel::predict_rows(const Matrix& x, std::span<const std::size_t> rows) const {
  Vector out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = predict(x.row(rows[i]));
  return out;
}

Vector LinearModel::raw_coefficients() const {
  Vector out(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out[j] = w[j] * y_scaler.scale / x_scaler.scale[j];
  return out;
}

double LinearModel::raw_intercept() const {
  double s = b;
  for (std::size_t j = 0; j < w.size(); ++j) s -= w[j] * x_scaler.mean[j] / x_scaler.scale[j];
  return y_scaler.mean + y_scaler.scale * s;
}

Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double tol = 1e-14 * std::max(max_diag, 1e-300);
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > tol) || !std::isfinite(s)) return {};
    const double ljj = std::sqrt(s);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / ljj;
    }
  }
  return l;
}

Vector solve_spd(const Matrix& a, std::span<const double> rhs, double* jitter_used) {
  const std::size_t n = a.rows();
  if (a.cols() != n || rhs.size() != n) throw Error(ErrorKind::DimensionMismatch, "solve_spd: shape mismatch");
  if (n == 0) return {};
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += a(i, i);
  mean_diag = std::max(mean_diag / static_cast<double>(n), 1.0);

  Matrix l = cholesky(a);
  double jitter = 0.0;
  for (double step = 1e-10; l.empty() && step <= 1e-6 * 1.0000001; step *= 10.0) {
    Matrix aj = a;
    jitter = step * mean_diag;
    for (std::size_t i = 0; i < n; ++i) aj(i, i) += jitter;
    l = cholesky(aj);
  }
  if (l.empty()) throw Error(ErrorKind::SingularSystem, "normal equations not positive definite after max jitter");
  if (jitter_used) *jitter_used = jitter;

  Vector y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

LinearModel fit_ols(const Matrix& x, std::span<const double> y, std::span<const std::size_t> train_rows) {
  return solve_design(prepare(x, y, train_rows), 0.0);
}

LinearModel fit_ridge_fixed(const Matrix& x, std::span<const double> y, std::span<const std::size_t> train_rows,
                            double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge lambda must be >= 0");
  return solve_design(prepare(x, y, train_rows), lambda);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i < 13; ++i) g.push_back(std::pow(10.0, -3.0 + 0.5 * i));
  return g;
}

RidgeSelection fit_ridge(const Matrix& x, std::span<const double> y, std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> val_rows, const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty lambda grid");
  const Design des = prepare(x, y, train_rows);
  Vector y_val(val_rows.size());
  for (std::size_t i = 0; i < val_rows.size(); ++i) y_val[i] = y[val_rows[i]];
  RidgeSelection sel;
  sel.grid = grid;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    LinearModel m = solve_design(des, grid[k]);
    const double score = r2(y_val, m.predict_rows(x, val_rows));
    sel.val_r2.push_back(score);
    if (score > best) {
      best = score;
      sel.selected = k;
      sel.model = std::move(m);
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// scores

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double r2(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorKind::DimensionMismatch, "r2: length mismatch");
  if (y_true.size() < 2) throw Error(ErrorKind::TooFewRows, "r2 needs at least 2 values");
  const double m = mean(y_true);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_tot += (y_true[i] - m) * (y_true[i] - m);
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  if (!(ss_tot > 0.0)) throw Error(ErrorKind::ZeroVarianceTarget, "r2 undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

double r2_rows(std::span<const double> y_true, std::span<const double> y_pred, std::span<const std::size_t> rows) {
  Vector t(rows.size()), p(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[i] = y_true[rows[i]];
    p[i] = y_pred[rows[i]];
  }
  return r2(t, p);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "pearson: length mismatch");
  if (x.size() < 2) throw Error(ErrorKind::TooFewRows, "pearson needs at least 2 values");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorKind::ZeroVariance, "correlation of a constant series");
  return sxy / std::sqrt(sxx * syy);
}

Vector average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Vector ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "spearman: length mismatch");
  return pearson(average_ranks(x), average_ranks(y));
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorKind::DimensionMismatch, "cosine: length mismatch");
  const double nu = norm2(u), nv = norm2(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorKind::ZeroNormVector, "cosine with a zero vector");
  return dot(u, v) / (nu * nv);
}

double quantile(std::vector<double> values, double q) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "slope: length mismatch");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return sxy / sxx;
}

Vector linspace(double lo, double hi, std::size_t n) {
  Vector out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  if (n > 1) out[n - 1] = hi;
  return out;
}

}  // namespace latprobe::stats
