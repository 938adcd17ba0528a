#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "latprobe/descriptors.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/nav.hpp"
#include "latprobe/rng.hpp"
#include "latprobe/synth.hpp"

using namespace latprobe;
using namespace latprobe::nav;
using selfies::MolGraph;

namespace {

const synth::World& world() {
  static const synth::World w({});
  return w;
}

Decoder world_decoder() {
  return [](std::span<const double> z) { return selfies::decode(world().decode(z)); };
}

double heavy_atoms(const MolGraph& g) { return descriptors::compute_descriptors(g).heavy_atom_count; }

MolGraph mol(const char* s) { return selfies::decode(selfies::tokenize(s)); }

}  // namespace

// ---------------------------------------------------------------------------
// traversal

TEST(Traverse, DenseHeavyAtomsFollowLengthDirection) {
  const Vector origin(16, 0.0);
  const auto r = traverse_dense(world().length_dir(), origin, -3.0, 3.0, 5000, world_decoder(), heavy_atoms);
  EXPECT_EQ(r.alphas.size(), 5000u);
  EXPECT_GE(r.spearman, 0.99);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GT(r.slope, 0.0);
  for (auto n : r.n_valid) EXPECT_EQ(n, 1u);
}

TEST(Traverse, OrthogonalDirectionIsFlat) {
  const Vector origin(16, 0.0);
  const auto r = traverse_dense(world().indep_dir(), origin, -3.0, 3.0, 200, world_decoder(), heavy_atoms);
  EXPECT_EQ(r.slope, 0.0);
  EXPECT_EQ(r.violations, 0u);
  for (double m : r.median) EXPECT_EQ(m, 10.0);
}

TEST(Traverse, SinglePointGrid) {
  const Vector origin(16, 0.0);
  const auto r = traverse_dense(world().length_dir(), origin, -200.0, 200.0, 1, world_decoder(), heavy_atoms);
  ASSERT_EQ(r.alphas.size(), 1u);
  EXPECT_EQ(r.alphas[0], -200.0);
  EXPECT_EQ(r.median[0], 1.0);
}

TEST(Traverse, RejectsBadInput) {
  const Vector origin(16, 0.0);
  Vector notunit = world().length_dir();
  notunit[0] += 0.1;
  EXPECT_THROW(traverse_dense(notunit, origin, -1, 1, 10, world_decoder(), heavy_atoms), Error);
  const Decoder broken = [](std::span<const double>) -> MolGraph { throw Error(ErrorKind::InsaneGraph, "x"); };
  EXPECT_THROW(
      try { traverse_dense(world().length_dir(), origin, -1, 1, 10, broken, heavy_atoms); } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AllDecodesFailed);
        throw;
      },
      Error);
  Matrix seeds(1, 16);
  const Vector backwards = {1.0, 0.0};
  EXPECT_THROW(traverse_multiseed(world().length_dir(), seeds, backwards, world_decoder(), heavy_atoms), Error);
}

TEST(Traverse, FailedDecodesAreGaps) {
  const Vector origin(16, 0.0);
  // empty graphs are not valid molecules
  const Decoder partial = [](std::span<const double> z) {
    return dot(world().length_dir(), z) > 0 ? MolGraph{} : selfies::decode(world().decode(z));
  };
  const auto r = traverse_dense(world().length_dir(), origin, -2.0, 2.0, 41, partial, heavy_atoms);
  for (std::size_t a = 0; a < 41; ++a) {
    if (r.alphas[a] > 0) {
      EXPECT_TRUE(std::isnan(r.median[a]));
      EXPECT_EQ(r.n_valid[a], 0u);
    } else {
      EXPECT_FALSE(std::isnan(r.median[a]));
    }
  }
}

TEST(Traverse, MultiseedIdenticalSeedsHaveNoSpread) {
  Matrix seeds(5, 16, 0.3);
  const auto alphas = stats::linspace(-3, 3, 20);
  const auto r = traverse_multiseed(world().length_dir(), seeds, alphas, world_decoder(), heavy_atoms);
  for (std::size_t a = 0; a < alphas.size(); ++a) EXPECT_EQ(r.q75[a] - r.q25[a], 0.0);
}

TEST(Traverse, MultiseedMonotoneAndSymmetric) {
  const auto ps = world().sample(2000);
  const auto rows = pick_seed_rows(ps.split, 50, 42 + seed_offset::traversal);
  for (auto r : rows) EXPECT_TRUE(std::find(ps.split.test.begin(), ps.split.test.end(), r) != ps.split.test.end());
  const Matrix seeds = ps.z.select_rows(rows);
  const auto alphas = stats::linspace(-3, 3, 100);
  const auto fwd = traverse_multiseed(world().length_dir(), seeds, alphas, world_decoder(), heavy_atoms);
  EXPECT_GE(fwd.spearman, 0.95);
  EXPECT_LE(fwd.violations, 5u);

  Vector neg = world().length_dir();
  for (double& v : neg) v = -v;
  const auto rev = traverse_multiseed(neg, seeds, alphas, world_decoder(), heavy_atoms);
  EXPECT_LE(rev.spearman, -0.95);
  for (std::size_t a = 0; a < alphas.size(); ++a) EXPECT_EQ(rev.median[a], fwd.median[alphas.size() - 1 - a]);
}

TEST(Traverse, AlphaZeroReproducesSeed) {
  const auto ps = world().sample(100);
  const Matrix seeds = ps.z.select_rows(std::vector<std::size_t>{3});
  const Vector alphas = {-1.0, 0.0, 1.0};
  const auto r = traverse_multiseed(world().indep_dir(), seeds, alphas, world_decoder(), heavy_atoms);
  EXPECT_EQ(r.values(0, 1), ps.properties(3, ps.property_index("HeavyAtomCount")));
}

TEST(Traverse, ViolationCounting) {
  EXPECT_EQ(count_violations(Vector{1, 2, 2, 1, 3}, 0.5), 1u);
  EXPECT_EQ(count_violations(Vector{1, std::nan(""), 0, 3}, 0.5), 1u);
  EXPECT_EQ(count_violations(Vector{3, 2, 2, 1}, -1.0), 0u);
  EXPECT_EQ(count_violations(Vector{3, 2, 2, 1}, std::nan("")), 0u);
}

// ---------------------------------------------------------------------------
// trust region and interpolation

TEST(TrustRegion, ClosedForm) {
  EXPECT_EQ(trust_region_step(Vector{0, 0}, Vector{0, 2}, 5.0), (Vector{0, 5}));
  EXPECT_EQ(trust_region_step(Vector{1, -1}, Vector{3, 4}, 0.0), (Vector{1, -1}));
  EXPECT_THROW(
      try { trust_region_step(Vector{0, 0}, Vector{0, 0}, 1.0); } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroDirection);
        throw;
      },
      Error);
  EXPECT_THROW(trust_region_step(Vector{0, 0}, Vector{1, 0}, -1.0), Error);
}

TEST(TrustRegion, GridOracleNeverWins) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector z0 = {3 * u(rng), 3 * u(rng)}, w = {u(rng), u(rng)};
    const double rho = 0.5 + std::abs(u(rng));
    const auto best = trust_region_step(z0, w, rho);
    EXPECT_NEAR(std::hypot(best[0] - z0[0], best[1] - z0[1]), rho, 1e-12);
    const double top = dot(w, best);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        const Vector p = {z0[0] + rho * (2.0 * i / 99 - 1), z0[1] + rho * (2.0 * j / 99 - 1)};
        if (std::hypot(p[0] - z0[0], p[1] - z0[1]) > rho) continue;
        ASSERT_LE(dot(w, p), top + 1e-12);
      }
  }
}

TEST(TrustRegion, LargerRadiusScoresHigher) {
  const Vector z0 = {0.5, 1.0, -2.0}, w = {1.0, -3.0, 0.5};
  double prev = -1e300;
  for (double rho : {0.0, 0.1, 1.0, 2.5, 10.0}) {
    const double s = dot(w, trust_region_step(z0, w, rho));
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(Interpolate, EndpointsAndMidpoint) {
  const auto p = interpolate(Vector{0, 0}, Vector{2, 4}, 11);
  ASSERT_EQ(p.size(), 11u);
  EXPECT_EQ(p.front(), (Vector{0, 0}));
  EXPECT_EQ(p.back(), (Vector{2, 4}));
  EXPECT_EQ(p[5], (Vector{1, 2}));
  const Vector a = {0.3, -1.7, 2.2}, b = {1.9, 0.1, -4.4};
  const auto q = interpolate(a, b, 7);
  EXPECT_EQ(q.front(), a);
  EXPECT_EQ(q.back(), b);
  for (const auto& z : interpolate(a, a, 5)) EXPECT_EQ(z, a);
  EXPECT_THROW(interpolate(Vector{0}, Vector{0, 1}), Error);
  EXPECT_THROW(interpolate(a, b, 1), Error);
}

// ---------------------------------------------------------------------------
// similarity, families, generation metrics

TEST(Similarity, TanimotoArithmetic) {
  EXPECT_EQ(tanimoto({"a", "b", "c"}, {"b", "c", "d"}), 0.5);
  EXPECT_EQ(tanimoto({"a"}, {"b"}), 0.0);
  EXPECT_EQ(tanimoto({"a", "b"}, {"a", "b"}), 1.0);
  EXPECT_EQ(tanimoto({}, {}), 1.0);
}

TEST(Similarity, NeighborhoodFeatures) {
  const auto ethanol = neighborhood_features(mol("[C][C][O]"));
  const std::set<std::string> expected = {"C|C:1", "C|C:1|O:1", "O|C:1"};
  EXPECT_EQ(ethanol, expected);
  // benzene: every carbon has one single and one double ring bond
  const auto benzene = neighborhood_features(mol("[C][=C][C][=C][C][=C][Ring1][=Branch1]"));
  EXPECT_EQ(benzene, (std::set<std::string>{"C|C:1|C:2"}));
  EXPECT_EQ(neighborhood_features(mol("[C][C][O]")), neighborhood_features(mol("[O][C][C]")));
}

TEST(Interp, SynthDecoderStaysValid) {
  Rng rng(7);
  std::vector<std::pair<Vector, Vector>> ends;
  for (int p = 0; p < 40; ++p) ends.emplace_back(normal_vector(rng, 16), normal_vector(rng, 16));
  const auto r = interp_metrics(ends, 11, world_decoder());
  ASSERT_EQ(r.valid_fraction.size(), 11u);
  for (double v : r.valid_fraction) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.similarity.rows(), 40u);
  EXPECT_EQ(r.similarity.cols(), 10u);
  EXPECT_EQ(r.midpoints.size(), 10u);
  EXPECT_DOUBLE_EQ(r.midpoints[0], 0.05);
  for (double s : r.similarity.data()) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  // identical endpoints decode identically at every step
  const auto same = interp_metrics({{ends[0].first, ends[0].first}}, 5, world_decoder());
  for (double s : same.similarity.data()) EXPECT_EQ(s, 1.0);
}

TEST(Family, Retention) {
  const auto acid = mol("[C][C][=Branch1][C][=O][O]");
  const auto alkane = mol("[C][C][C]");
  std::vector<MolGraph> path;
  for (int i = 0; i < 11; ++i) path.push_back(i < 6 ? acid : alkane);
  EXPECT_NEAR(family_retention(path, Family::CarboxylicAcid), 6.0 / 11.0, 1e-12);
  EXPECT_NEAR(family_retention(path, Family::CarboxylicAcid), 0.5455, 1e-4);
  EXPECT_EQ(family_retention(std::vector<MolGraph>(3, acid), Family::CarboxylicAcid), 1.0);
  EXPECT_EQ(family_retention(std::vector<MolGraph>(3, alkane), Family::CarboxylicAcid), 0.0);
  // invalid steps never count as members
  EXPECT_EQ(family_retention({MolGraph{}, acid}, Family::CarboxylicAcid), 0.5);
}

// Membership labels come from SMARTS matching of each molecule's SMILES.
TEST(Family, FixtureLabels) {
  struct Case {
    const char* selfies;
    const char* smiles;
    std::vector<Family> families;
  };
  const std::vector<Case> cases = {
      {"[C][C][O]", "CCO", {Family::Alcohol}},
      {"[O][C][=C][C][=C][C][=C][Ring1][=Branch1]", "Oc1ccccc1", {Family::Phenol}},
      {"[C][C][O][C][C]", "CCOCC", {Family::Ether}},
      {"[C][C][N]", "CCN", {Family::Amine}},
      {"[C][C][Branch1][C][N][=O]", "CC(=O)N", {Family::Amide}},
      {"[C][C][=Branch1][C][=O][O]", "CC(=O)O", {Family::CarboxylicAcid}},
      {"[C][O][C][Branch1][C][C][=O]", "CC(=O)OC", {Family::Ester}},
      {"[C][C][=O]", "CC=O", {Family::Aldehyde}},
      {"[C][C][Branch1][C][C][=O]", "CC(=O)C", {Family::Ketone}},
      {"[C][C][#N]", "CC#N", {Family::Nitrile}},
      {"[C][S][Branch1][C][N][=Branch1][C][=O][=O]", "CS(=O)(=O)N", {Family::Sulfonamide}},
      {"[C][C][C][C][C][C][Ring1][=Branch1]", "C1CCCCC1", {}},
      {"[C][=C][C][=C][C][=C][Ring1][=Branch1]", "c1ccccc1", {}},
      {"[C][C][C][N][Branch1][C][C][C]", "CCCN(C)C", {Family::Amine}},
      {"[N][C][=Branch1][C][=O][C][=C][C][=C][C][=C][Ring1][=Branch1]", "NC(=O)c1ccccc1", {Family::Amide}},
      {"[O][=C][Branch1][C][O][C][=C][C][=C][C][=C][Ring1][=Branch1][O]",
       "OC(=O)c1ccccc1O",
       {Family::Phenol, Family::CarboxylicAcid}},
      {"[C][O][C][=C][C][=C][C][=C][Ring1][=Branch1]", "COc1ccccc1", {Family::Ether}},
      {"[C][C][Branch1][C][O][C][C][=O]", "CC(O)CC=O", {Family::Alcohol, Family::Aldehyde}},
      {"[C][C][O][C][=Branch1][C][=O][C][C][#N]", "N#CCC(=O)OCC", {Family::Ester, Family::Nitrile}},
      {"[C][N][Branch1][C][C][S][=Branch1][C][=O][=Branch1][C][=O][C][=C][C][=C][C][=C][Ring1][=Branch1]",
       "CN(C)S(=O)(=O)c1ccccc1",
       {Family::Sulfonamide}},
      {"[N][C][C][O]", "OCCN", {Family::Alcohol, Family::Amine}},
      {"[C][C][Branch1][C][C][Branch1][C][C][O]", "CC(C)(C)O", {Family::Alcohol}},
      {"[O][=C][C][C][C][C][C][Ring1][=Branch1]", "O=C1CCCCC1", {Family::Ketone}},
      {"[C][C][C][O][C][Ring1][Branch1]", "C1CCOC1", {Family::Ether}},
      {"[C][N][C][Branch1][C][C][=O]", "CC(=O)NC", {Family::Amide}},
      {"[N][C][C][=Branch1][C][=O][O]", "NCC(=O)O", {Family::Amine, Family::CarboxylicAcid}},
      {"[C][C][=C][O]", "OC=CC", {}},
      {"[C][C][S][C]", "CCSC", {}},
      {"[C][C][=Branch1][C][=O][O][C][Branch1][C][C][=O]", "CC(=O)OC(C)=O", {Family::Ester}},
      {"[Cl][C][C][Br]", "ClCCBr", {}},
      {"[C][=C][C][#N]", "C=CC#N", {Family::Nitrile}},
      {"[C][N][C][=Branch1][C][=O][O][C]", "CNC(=O)OC", {Family::Amide, Family::Ester}},
  };
  std::set<Family> covered;
  for (const auto& c : cases) {
    const auto g = mol(c.selfies);
    ASSERT_TRUE(selfies::is_valid_molecule(g)) << c.smiles;
    for (auto f : kFamilies) {
      const bool expected = std::find(c.families.begin(), c.families.end(), f) != c.families.end();
      EXPECT_EQ(in_family(g, f), expected) << c.smiles << " " << family_name(f);
      if (expected) covered.insert(f);
    }
  }
  EXPECT_EQ(covered.size(), kFamilies.size());
}

TEST(Generation, Metrics) {
  const auto a = mol("[C][C][O]"), b = mol("[O][C][C]"), c = mol("[C][C][N]");
  auto m = generation_metrics({a, a, a, a}, {});
  EXPECT_EQ(m.validity, 1.0);
  EXPECT_EQ(m.uniqueness, 0.25);
  EXPECT_EQ(m.novelty, 1.0);
  const std::unordered_set<std::uint64_t> train = {selfies::canonical_hash(a), selfies::canonical_hash(c)};
  m = generation_metrics({a, b, c}, train);
  EXPECT_DOUBLE_EQ(m.uniqueness, 2.0 / 3.0);  // a and b are the same molecule
  EXPECT_EQ(m.novelty, 0.0);
  m = generation_metrics({a, MolGraph{}, c, MolGraph{}}, {selfies::canonical_hash(a)});
  EXPECT_EQ(m.validity, 0.5);
  EXPECT_EQ(m.uniqueness, 1.0);
  EXPECT_EQ(m.novelty, 0.5);
  m = generation_metrics({}, {});
  EXPECT_TRUE(std::isnan(m.validity));
}
