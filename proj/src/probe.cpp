#include "latprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "latprobe/errors.hpp"
#include "latprobe/kernels.hpp"
#include "latprobe/rng.hpp"

namespace latprobe::probe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool finite_row(const Matrix& m, std::size_t r) {
  for (double v : m.row(r))
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::size_t> usable_rows(const Matrix& x, std::span<const double> y,
                                     std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows)
    if (std::isfinite(y[r]) && finite_row(x, r)) out.push_back(r);
  return out;
}

double score(const stats::LinearModel& m, const Matrix& x, std::span<const double> y,
             std::span<const std::size_t> rows) {
  const auto use = usable_rows(x, y, rows);
  if (use.size() < 2) return kNaN;
  Vector truth(use.size());
  for (std::size_t i = 0; i < use.size(); ++i) truth[i] = y[use[i]];
  try {
    return stats::r2(truth, m.predict_rows(x, use));
  } catch (const Error&) {
    return kNaN;
  }
}

void require_variance(std::span<const double> y, std::span<const std::size_t> rows, const std::string& target) {
  if (rows.empty()) throw Error(ErrorKind::TooFewRows, "no usable train rows for " + target);
  const double first = y[rows.front()];
  for (auto r : rows)
    if (y[r] != first) return;
  throw Error(ErrorKind::ZeroVarianceTarget, "target " + target + " is constant on train rows");
}

stats::LinearModel fit_rows(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                            const ProbeOptions& opts) {
  return opts.method == Method::Ols ? stats::fit_ols(x, y, rows) : stats::fit_ridge_fixed(x, y, rows, opts.lambda);
}

Vector unit_or_throw(std::span<const double> v, const std::string& name) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorKind::ZeroDirection, "direction " + name + " has zero norm");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::Ols ? "ols" : "ridge"; }

SplitScores scores(const stats::LinearModel& m, const Matrix& x, std::span<const double> y,
                   const stats::SplitAssignment& split) {
  return {score(m, x, y, split.train), score(m, x, y, split.val), score(m, x, y, split.test)};
}

Vector raw_direction(const stats::LinearModel& model) {
  Vector v(model.w.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = model.w[j] / model.x_scaler.scale[j];
  return normalized(v);
}

ProbeModel fit_probe(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                     std::string target, ProbeOptions opts) {
  if (z.rows() != y.size()) throw Error(ErrorKind::RowCountMismatch, "latent and target row counts differ");
  const auto train = usable_rows(z, y, split.train);
  require_variance(y, train, target);
  ProbeModel p;
  p.target = std::move(target);
  p.method = opts.method;
  p.model = fit_rows(z, y, train, opts);
  p.direction_raw = raw_direction(p.model);
  p.r2 = scores(p.model, z, y, split);
  p.split_fingerprint = split.fingerprint();
  p.n_train = train.size();
  return p;
}

double predicted_delta(const ProbeModel& probe, double epsilon) {
  return epsilon * dot(probe.model.w, probe.model.w);
}

// ---------------------------------------------------------------------------
// residualization

std::vector<ResidualTarget> residualize(const Matrix& confounds, const Matrix& properties,
                                        const std::vector<std::string>& names,
                                        const stats::SplitAssignment& split, double lambda) {
  if (confounds.rows() != properties.rows())
    throw Error(ErrorKind::RowCountMismatch, "confound and property row counts differ");
  if (names.size() != properties.cols())
    throw Error(ErrorKind::DimensionMismatch, "property names do not match columns");
  std::vector<ResidualTarget> out(properties.cols());
  for (std::size_t k = 0; k < properties.cols(); ++k) {
    const Vector y = properties.column(k);
    const auto train = usable_rows(confounds, y, split.train);
    if (train.size() < confounds.cols() + 1)
      throw Error(ErrorKind::TooFewRows, "residualizing " + names[k] + " needs at least M+1 train rows");
    ResidualTarget& rt = out[k];
    rt.base_target = names[k];
    rt.confound_model = stats::fit_ridge_fixed(confounds, y, train, lambda);
    rt.values.assign(y.size(), kNaN);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (std::isfinite(y[i]) && finite_row(confounds, i))
        rt.values[i] = y[i] - rt.confound_model.predict(confounds.row(i));
    rt.confound_r2 = scores(rt.confound_model, confounds, y, split);
  }
  return out;
}

// ---------------------------------------------------------------------------
// controls

BootstrapResult bootstrap_stability(const Matrix& z, std::span<const double> y,
                                    const stats::SplitAssignment& split, std::size_t resamples,
                                    std::uint64_t seed, ProbeOptions opts) {
  const auto train = usable_rows(z, y, split.train);
  require_variance(y, train, "bootstrap target");
  const Vector reference = raw_direction(fit_rows(z, y, train, opts));
  const std::size_t d = z.cols();

  BootstrapResult res;
  res.cosines.assign(resamples, kNaN);
  std::vector<std::size_t> redraws(resamples, 0);
  const auto count = static_cast<std::ptrdiff_t>(resamples);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < count; ++b) {
    Rng rng = make_rng(seed + static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    std::vector<std::size_t> rows(train.size());
    for (;;) {
      for (auto& r : rows) r = train[pick(rng)];
      std::set<std::size_t> distinct(rows.begin(), rows.end());
      bool varied = false;
      for (auto r : rows) varied = varied || y[r] != y[rows.front()];
      if (distinct.size() > d && varied) break;
      ++redraws[static_cast<std::size_t>(b)];
    }
    const Vector dir = raw_direction(fit_rows(z, y, rows, opts));
    res.cosines[static_cast<std::size_t>(b)] = std::abs(dot(dir, reference));
  }
  res.redraws = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  res.median = stats::median(res.cosines);
  res.q25 = stats::quantile(res.cosines, 0.25);
  res.q75 = stats::quantile(res.cosines, 0.75);
  return res;
}

PermutationResult permutation_control(const Matrix& z, std::span<const double> y,
                                      const stats::SplitAssignment& split,
                                      std::span<const std::size_t> train_permutation, ProbeOptions opts) {
  const auto train = usable_rows(z, y, split.train);
  if (train_permutation.size() != train.size())
    throw Error(ErrorKind::DimensionMismatch, "permutation length differs from usable train rows");
  Vector shuffled(y.begin(), y.end());
  for (std::size_t i = 0; i < train.size(); ++i) shuffled[train[i]] = y[train[train_permutation[i]]];
  require_variance(shuffled, train, "permuted target");
  const auto model = fit_rows(z, shuffled, train, opts);
  return {score(model, z, y, split.val), score(model, z, y, split.test)};
}

PermutationResult permutation_control(const Matrix& z, std::span<const double> y,
                                      const stats::SplitAssignment& split, std::uint64_t seed,
                                      ProbeOptions opts) {
  const auto train = usable_rows(z, y, split.train);
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return permutation_control(z, y, split, perm, opts);
}

std::vector<PermutationResult> permutation_runs(const Matrix& z, std::span<const double> y,
                                                const stats::SplitAssignment& split, std::size_t runs,
                                                std::uint64_t seed, ProbeOptions opts) {
  std::vector<PermutationResult> out(runs);
  const auto count = static_cast<std::ptrdiff_t>(runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = permutation_control(z, y, split, seed + static_cast<std::uint64_t>(i), opts);
  return out;
}

Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Matrix q(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    for (;;) {
      Vector v = normal_vector(rng, d);
      // modified Gram-Schmidt, twice for stability
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t p = 0; p < c; ++p) {
          double s = 0.0;
          for (std::size_t i = 0; i < d; ++i) s += q(i, p) * v[i];
          for (std::size_t i = 0; i < d; ++i) v[i] -= s * q(i, p);
        }
      const double n = norm2(v);
      if (n < 1e-8) continue;
      for (std::size_t i = 0; i < d; ++i) q(i, c) = v[i] / n;
      break;
    }
  }
  return q;
}

double rotation_invariance(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                           const Matrix& rotation, ProbeOptions opts) {
  if (rotation.rows() != z.cols() || rotation.cols() != z.cols())
    throw Error(ErrorKind::DimensionMismatch, "rotation must be d x d");
  const Matrix rotated = kernels::par::matmul(z, rotation.transposed());
  const auto train = usable_rows(z, y, split.train);
  require_variance(y, train, "rotation target");
  const auto before = fit_rows(z, y, train, opts);
  const auto after = fit_rows(rotated, y, train, opts);
  double worst = 0.0;
  for (const auto* part : {&split.val, &split.test})
    for (auto r : *part)
      worst = std::max(worst, std::abs(before.predict(z.row(r)) - after.predict(rotated.row(r))));
  return worst;
}

double rotation_invariance(const Matrix& z, std::span<const double> y, const stats::SplitAssignment& split,
                           std::uint64_t seed, ProbeOptions opts) {
  return rotation_invariance(z, y, split, random_orthogonal(z.cols(), seed), opts);
}

// ---------------------------------------------------------------------------
// alignment

AlignmentResult alignment_analysis(const std::vector<NamedDirection>& properties,
                                   const std::vector<NamedDirection>& confounds, std::size_t n_random,
                                   std::uint64_t seed) {
  if (confounds.empty()) throw Error(ErrorKind::InvalidArgument, "alignment needs at least one confound direction");
  const std::size_t d = confounds.front().direction.size();
  auto unit_all = [&](const std::vector<NamedDirection>& dirs, std::vector<std::string>& names) {
    std::vector<Vector> out;
    for (const auto& nd : dirs) {
      if (nd.direction.size() != d) throw Error(ErrorKind::DimensionMismatch, "direction " + nd.name + " has wrong length");
      out.push_back(unit_or_throw(nd.direction, nd.name));
      names.push_back(nd.name);
    }
    return out;
  };
  AlignmentResult res;
  const auto props = unit_all(properties, res.properties);
  const auto confs = unit_all(confounds, res.confounds);

  res.cosine = Matrix(props.size(), confs.size());
  res.observed_max.assign(props.size(), 0.0);
  for (std::size_t k = 0; k < props.size(); ++k)
    for (std::size_t m = 0; m < confs.size(); ++m) {
      res.cosine(k, m) = dot(props[k], confs[m]);
      res.observed_max[k] = std::max(res.observed_max[k], std::abs(res.cosine(k, m)));
    }

  Rng rng = make_rng(seed);
  res.null_max.assign(n_random, 0.0);
  for (std::size_t r = 0; r < n_random; ++r) {
    Vector v;
    double n = 0.0;
    do {
      v = normal_vector(rng, d);
      n = norm2(v);
    } while (n == 0.0);
    for (double& x : v) x /= n;
    for (const auto& c : confs) res.null_max[r] = std::max(res.null_max[r], std::abs(dot(v, c)));
  }
  if (n_random == 0) {
    res.null_q50 = res.null_q95 = res.null_q99 = kNaN;
    return res;
  }
  res.null_q50 = stats::quantile(res.null_max, 0.5);
  res.null_q95 = stats::quantile(res.null_max, 0.95);
  res.null_q99 = stats::quantile(res.null_max, 0.99);
  return res;
}

Matrix direction_similarity(const std::vector<NamedDirection>& dirs) {
  std::vector<Vector> units;
  for (const auto& nd : dirs) {
    if (!units.empty() && nd.direction.size() != units.front().size())
      throw Error(ErrorKind::DimensionMismatch, "direction " + nd.name + " has wrong length");
    units.push_back(unit_or_throw(nd.direction, nd.name));
  }
  Matrix out(units.size(), units.size());
  for (std::size_t i = 0; i < units.size(); ++i)
    for (std::size_t j = 0; j < units.size(); ++j) out(i, j) = i == j ? 1.0 : dot(units[i], units[j]);
  return out;
}

std::vector<ProbeModel> confound_directions(const Matrix& z, const Matrix& confounds,
                                            const std::vector<std::string>& names,
                                            const stats::SplitAssignment& split, double lambda) {
  if (names.size() != confounds.cols())
    throw Error(ErrorKind::DimensionMismatch, "confound names do not match columns");
  std::vector<ProbeModel> out;
  for (std::size_t m = 0; m < confounds.cols(); ++m)
    out.push_back(fit_probe(z, confounds.column(m), split, names[m], {Method::Ridge, lambda}));
  return out;
}

CorrelationMatrices correlation_matrices(const Matrix& properties, const Matrix& confounds) {
  if (properties.rows() != confounds.rows())
    throw Error(ErrorKind::RowCountMismatch, "property and confound row counts differ");
  CorrelationMatrices out{Matrix(properties.cols(), confounds.cols(), kNaN),
                          Matrix(properties.cols(), confounds.cols(), kNaN)};
  for (std::size_t k = 0; k < properties.cols(); ++k)
    for (std::size_t m = 0; m < confounds.cols(); ++m) {
      Vector a, b;
      for (std::size_t i = 0; i < properties.rows(); ++i)
        if (std::isfinite(properties(i, k)) && std::isfinite(confounds(i, m))) {
          a.push_back(properties(i, k));
          b.push_back(confounds(i, m));
        }
      try {
        out.pearson(k, m) = stats::pearson(a, b);
        out.spearman(k, m) = stats::spearman(a, b);
      } catch (const Error&) {
        // left NaN
      }
    }
  return out;
}

}  // namespace latprobe::probe
