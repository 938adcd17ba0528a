#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "latprobe/errors.hpp"
#include "latprobe/probe.hpp"
#include "latprobe/stats.hpp"
#include "latprobe/synth.hpp"

using namespace latprobe;
using namespace latprobe::probe;

namespace {

const PanelSet& world_panel() {
  static const PanelSet ps = synth::World({}).sample(4000);
  return ps;
}

// 2000 test rows, the size at which the permutation envelope is stated
const PanelSet& large_world_panel() {
  static const PanelSet ps = synth::World({}).sample(20000);
  return ps;
}

Vector column(const PanelSet& ps, const char* name) { return ps.properties.column(ps.property_index(name)); }

stats::LinearModel model_with(Vector w, Vector scale) {
  stats::LinearModel m;
  m.w = std::move(w);
  m.x_scaler.scale = std::move(scale);
  m.x_scaler.mean.assign(m.w.size(), 0.0);
  return m;
}

}  // namespace

TEST(Probe, RawDirectionRescaling) {
  auto d = raw_direction(model_with({3, 4}, {1, 1}));
  EXPECT_NEAR(d[0], 0.6, 1e-15);
  EXPECT_NEAR(d[1], 0.8, 1e-15);
  d = raw_direction(model_with({1, 1}, {1, 2}));
  // (1, 0.5) / sqrt(1.25)
  EXPECT_NEAR(d[0], 1.0 / std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(d[1], 0.5 / std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(d[0], 0.8944, 1e-4);
}

TEST(Probe, PredictedDelta) {
  ProbeModel p;
  p.model.w = {3, 4};
  EXPECT_DOUBLE_EQ(predicted_delta(p, 0.1), 2.5);
  EXPECT_EQ(predicted_delta(p, 0.0), 0.0);
  EXPECT_LT(predicted_delta(p, -0.3), 0.0);
}

TEST(Probe, RecoversPlantedDirection) {
  synth::World w({.noise = 0.01});
  const auto ps = w.sample(3000);
  const auto p = fit_probe(ps.z, column(ps, "y_linear"), ps.split, "y_linear");
  EXPECT_NEAR(norm2(p.direction_raw), 1.0, 1e-10);
  EXPECT_GE(dot(p.direction_raw, w.linear_dir()), 0.99);
  EXPECT_GT(p.r2.test, 0.99);
  EXPECT_EQ(p.split_fingerprint, ps.split.fingerprint());
}

TEST(Probe, DirectionInvariantUnderTargetRescaling) {
  const auto& ps = world_panel();
  Vector y = column(ps, "y_indep");
  const auto a = fit_probe(ps.z, y, ps.split, "y");
  for (double& v : y) v *= 37.5;
  const auto b = fit_probe(ps.z, y, ps.split, "y");
  for (std::size_t j = 0; j < a.direction_raw.size(); ++j) EXPECT_NEAR(a.direction_raw[j], b.direction_raw[j], 1e-8);
}

TEST(Probe, NoiselessTargetFitsExactly) {
  synth::World w({.noise = 0.0});
  const auto ps = w.sample(500);
  const auto p = fit_probe(ps.z, column(ps, "y_linear"), ps.split, "y_linear");
  EXPECT_GE(p.r2.test, 1.0 - 1e-6);
}

TEST(Probe, ConstantTargetThrows) {
  const auto& ps = world_panel();
  try {
    fit_probe(ps.z, Vector(ps.rows(), 2.0), ps.split, "const");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVarianceTarget);
  }
}

TEST(Probe, MissingTargetRowsAreSkipped) {
  const auto& ps = world_panel();
  Vector y = column(ps, "y_linear");
  for (std::size_t i = 0; i < y.size(); i += 7) y[i] = std::nan("");
  const auto p = fit_probe(ps.z, y, ps.split, "y_linear");
  EXPECT_LT(p.n_train, ps.split.train.size());
  EXPECT_GT(p.r2.test, 0.98);
}

// ---------------------------------------------------------------------------
// residualization

TEST(Residualize, FullyConfoundedTargetCollapses) {
  const auto& ps = world_panel();
  Matrix y(ps.rows(), 1);
  for (std::size_t i = 0; i < ps.rows(); ++i) y(i, 0) = 1.5 * ps.confounds(i, 0) - 0.5 * ps.confounds(i, 1) + 3.0;
  const auto res = residualize(ps.confounds, y, {"lin_c"}, ps.split, 10.0);
  double rms = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < ps.rows(); ++i) {
    rms += res[0].values[i] * res[0].values[i];
    scale += y(i, 0) * y(i, 0);
  }
  EXPECT_LT(std::sqrt(rms / scale), 1e-2);
  EXPECT_GT(res[0].confound_r2.test, 0.999);
  // ridge shrinkage leaves a remainder linear in C, so only its size is checked
  const auto p = fit_probe(ps.z, res[0].values, ps.split, "resid");
  EXPECT_LT(p.r2.test * rms / scale, 1e-4);
}

TEST(Residualize, IndependentTargetKeepsSignal) {
  const auto& ps = world_panel();
  const auto k = ps.property_index("y_indep");
  Matrix y(ps.rows(), 1);
  for (std::size_t i = 0; i < ps.rows(); ++i) y(i, 0) = ps.properties(i, k);
  const auto res = residualize(ps.confounds, y, {"y_indep"}, ps.split);
  const auto raw = fit_probe(ps.z, y.column(0), ps.split, "raw");
  const auto resid = fit_probe(ps.z, res[0].values, ps.split, "resid");
  EXPECT_LT(res[0].confound_r2.test, 0.05);
  EXPECT_LT(raw.r2.test - resid.r2.test, 0.05);
}

TEST(Residualize, PlantedConfoundingCollapsesResidual) {
  const auto& ps = world_panel();
  const auto res = residualize(ps.confounds, ps.properties, ps.property_names, ps.split);
  const auto k = ps.property_index("y_linear");
  const auto raw = fit_probe(ps.z, column(ps, "y_linear"), ps.split, "raw");
  const auto resid = fit_probe(ps.z, res[k].values, ps.split, "resid");
  EXPECT_LT(resid.r2.test, 0.1);
  EXPECT_GE(raw.r2.test - resid.r2.test, 0.5);
}

TEST(Residualize, OlsResidualIsIdempotent) {
  const auto& ps = world_panel();
  Matrix y(ps.rows(), 1);
  const auto k = ps.property_index("MolWt");
  for (std::size_t i = 0; i < ps.rows(); ++i) y(i, 0) = ps.properties(i, k);
  const auto once = residualize(ps.confounds, y, {"MolWt"}, ps.split, 0.0);
  Matrix y1(ps.rows(), 1);
  for (std::size_t i = 0; i < ps.rows(); ++i) y1(i, 0) = once[0].values[i];
  const auto twice = residualize(ps.confounds, y1, {"MolWt"}, ps.split, 0.0);
  double rms = 0.0;
  for (std::size_t i = 0; i < ps.rows(); ++i) {
    const double diff = twice[0].values[i] - once[0].values[i];
    rms += diff * diff / ps.rows();
  }
  EXPECT_LT(std::sqrt(rms), 1e-6);
}

TEST(Residualize, RidgeResidualMovesByShrinkageOnly) {
  // At lambda > 0 a second pass removes lambda (G + lambda I)^-1 of what is
  // left, so the change shrinks with lambda / N.
  const auto& ps = world_panel();
  const auto k = ps.property_index("MolWt");
  Matrix y(ps.rows(), 1);
  for (std::size_t i = 0; i < ps.rows(); ++i) y(i, 0) = ps.properties(i, k);
  const auto once = residualize(ps.confounds, y, {"MolWt"}, ps.split, 10.0);
  Matrix y1(ps.rows(), 1);
  for (std::size_t i = 0; i < ps.rows(); ++i) y1(i, 0) = once[0].values[i];
  const auto twice = residualize(ps.confounds, y1, {"MolWt"}, ps.split, 10.0);
  double change = 0.0, base = 0.0;
  for (std::size_t i = 0; i < ps.rows(); ++i) {
    change += std::pow(twice[0].values[i] - once[0].values[i], 2);
    base += std::pow(y(i, 0) - once[0].values[i], 2);
  }
  const double lambda_over_n = 10.0 / static_cast<double>(ps.split.train.size());
  EXPECT_LT(std::sqrt(change / base), 2.0 * lambda_over_n);
}

// ---------------------------------------------------------------------------
// controls

TEST(Controls, BootstrapStrongTarget) {
  const auto& ps = world_panel();
  const auto b = bootstrap_stability(ps.z, column(ps, "y_linear"), ps.split, 30, 1000);
  EXPECT_EQ(b.cosines.size(), 30u);
  EXPECT_GE(b.median, 0.95);
  for (double c : b.cosines) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0 + 1e-12);
  }
  const auto again = bootstrap_stability(ps.z, column(ps, "y_linear"), ps.split, 30, 1000);
  EXPECT_EQ(again.cosines, b.cosines);
}

TEST(Controls, PermutationIdentityEqualsUnpermuted) {
  const auto& ps = world_panel();
  const Vector y = column(ps, "y_linear");
  std::vector<std::size_t> identity(ps.split.train.size());
  std::iota(identity.begin(), identity.end(), 0);
  const auto r = permutation_control(ps.z, y, ps.split, identity);
  const auto p = fit_probe(ps.z, y, ps.split, "y");
  EXPECT_DOUBLE_EQ(r.test_r2, p.r2.test);
  EXPECT_DOUBLE_EQ(r.val_r2, p.r2.val);
}

TEST(Controls, PermutationCollapses) {
  const auto& ps = large_world_panel();
  const auto runs = permutation_runs(ps.z, column(ps, "y_linear"), ps.split, 20, 2000);
  double mean = 0.0;
  for (const auto& r : runs) {
    EXPECT_LT(std::abs(r.test_r2), 0.05);
    mean += r.test_r2 / runs.size();
  }
  EXPECT_LT(std::abs(mean), 0.02);
}

TEST(Controls, RotationInvariance) {
  const auto& ps = world_panel();
  const Vector y = column(ps, "y_linear");
  EXPECT_EQ(rotation_invariance(ps.z, y, ps.split, Matrix::identity(16)), 0.0);
  const Matrix q = random_orthogonal(16, 3000);
  const Matrix qtq = q.transposed();
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 16; ++k) s += qtq(i, k) * q(k, j);
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
    }
  EXPECT_LT(rotation_invariance(ps.z, y, ps.split, q), 1e-6);
  Matrix perm(16, 16);
  for (std::size_t i = 0; i < 16; ++i) perm(i, (i * 5 + 3) % 16) = 1.0;
  EXPECT_LT(rotation_invariance(ps.z, y, ps.split, perm), 1e-8);
}

// ---------------------------------------------------------------------------
// alignment

TEST(Alignment, Basics) {
  const std::vector<NamedDirection> props = {{"a", {1, 0, 0}}, {"b", {0, 1, 0}}};
  const std::vector<NamedDirection> confs = {{"c", {2, 0, 0}}};
  const auto res = alignment_analysis(props, confs, 100, 4000);
  EXPECT_DOUBLE_EQ(res.cosine(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(res.cosine(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(res.observed_max[0], 1.0);
  EXPECT_EQ(res.null_max.size(), 100u);
  for (double v : res.null_max) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  try {
    alignment_analysis({{"z", {0, 0, 0}}}, confs, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroDirection);
  }
  EXPECT_THROW(alignment_analysis({{"short", {1, 0}}}, confs, 10, 1), Error);
}

TEST(Alignment, NullMedianMatchesMonteCarlo) {
  // Independent numpy Monte-Carlo (1e5 draws, d = 256, 4 orthonormal
  // confound directions) puts the median of max |cos| at 0.0885.
  std::vector<NamedDirection> confs;
  for (std::size_t k = 0; k < 4; ++k) {
    Vector e(256, 0.0);
    e[k * 7] = 1.0;
    confs.push_back({"c" + std::to_string(k), e});
  }
  const auto res = alignment_analysis({}, confs, 100000, 4000);
  EXPECT_NEAR(res.null_q50, 0.0885, 0.002);
}

TEST(Alignment, ConfoundDrivenPropertyExceedsNull) {
  const auto& ps = world_panel();
  const auto confs = confound_directions(ps.z, ps.confounds, ps.confound_names, ps.split);
  std::vector<NamedDirection> cdirs;
  for (const auto& c : confs)
    if (c.target == "length" || c.target == "c_planted") cdirs.push_back({c.target, c.direction_raw});
  const auto hac = fit_probe(ps.z, column(ps, "HeavyAtomCount"), ps.split, "HeavyAtomCount");
  const auto ind = fit_probe(ps.z, column(ps, "y_indep"), ps.split, "y_indep");
  const auto res = alignment_analysis({{"HeavyAtomCount", hac.direction_raw}, {"y_indep", ind.direction_raw}}, cdirs,
                                      1000, 4000);
  EXPECT_GT(res.observed_max[0], res.null_q99);
  EXPECT_LE(res.observed_max[1], res.null_q95);
}

TEST(Alignment, AxisAlignedAndConstantConfound) {
  const auto& ps = world_panel();
  Matrix axis(ps.rows(), 1), constant(ps.rows(), 1, 5.0);
  for (std::size_t i = 0; i < ps.rows(); ++i) axis(i, 0) = ps.z(i, 0);
  const auto dirs = confound_directions(ps.z, axis, {"axis"}, ps.split);
  EXPECT_GE(dirs[0].direction_raw[0], 0.999);
  try {
    confound_directions(ps.z, constant, {"const"}, ps.split);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVarianceTarget);
  }
  const auto length = confound_directions(ps.z, ps.confounds, ps.confound_names, ps.split);
  EXPECT_GE(std::abs(dot(length[1].direction_raw, synth::World({}).length_dir())), 0.95);
}

TEST(Alignment, CorrelationMatrices) {
  Matrix y(5, 2), c(5, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    c(i, 0) = static_cast<double>(i * i);
    y(i, 0) = c(i, 0);
    y(i, 1) = -c(i, 0);
  }
  auto cm = correlation_matrices(y, c);
  EXPECT_DOUBLE_EQ(cm.pearson(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(cm.spearman(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(cm.pearson(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(cm.spearman(1, 0), -1.0);
  Matrix flat(5, 1, 3.0);
  cm = correlation_matrices(y, flat);
  EXPECT_TRUE(std::isnan(cm.pearson(0, 0)));
}

TEST(Alignment, DirectionSimilarity) {
  const auto s = direction_similarity({{"a", {1, 0}}, {"b", {1, 1}}, {"c", {0, -3}}});
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_NEAR(s(0, 1), std::sqrt(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(s(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(s(2, 1), s(1, 2));
}
