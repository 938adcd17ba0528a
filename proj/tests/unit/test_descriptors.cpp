#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "latprobe/descriptors.hpp"
#include "latprobe/errors.hpp"

using namespace latprobe;
using namespace latprobe::selfies;
using namespace latprobe::descriptors;

namespace {

DescriptorRow of(std::string_view s) { return compute_descriptors(decode(tokenize(s))); }

}  // namespace

TEST(Descriptors, Water) {
  const auto r = of("[O]");
  EXPECT_NEAR(r.mol_wt, 15.999 + 2 * 1.008, 1e-12);
  EXPECT_EQ(r.hbd, 1);
  EXPECT_EQ(r.hba, 1);
  EXPECT_EQ(r.ring_count, 0);
  EXPECT_EQ(r.fraction_csp3, 0.0);
}

TEST(Descriptors, Methane) {
  const auto r = of("[C]");
  EXPECT_NEAR(r.mol_wt, 12.011 + 4 * 1.008, 1e-12);
  EXPECT_EQ(r.fraction_csp3, 1.0);
  EXPECT_EQ(r.hbd, 0);
  EXPECT_EQ(r.hba, 0);
}

TEST(Descriptors, Cyclohexane) {
  const auto r = of("[C][C][C][C][C][C][Ring1][=Branch1]");
  EXPECT_EQ(r.heavy_atom_count, 6);
  EXPECT_EQ(r.ring_count, 1);
  EXPECT_EQ(r.rotatable_bonds, 0);
  EXPECT_NEAR(r.mol_wt, 6 * 12.011 + 12 * 1.008, 1e-12);
}

TEST(Descriptors, ChainRulesAndSp3) {
  const auto butane = of("[C][C][C][C]");
  EXPECT_EQ(butane.rotatable_bonds, 1);
  const auto ethanol = of("[C][C][O]");
  EXPECT_EQ(ethanol.hbd, 1);
  EXPECT_EQ(ethanol.rotatable_bonds, 0);
  const auto propene = of("[C][C][=C]");
  EXPECT_NEAR(propene.fraction_csp3, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(of("[N][O]").fraction_csp3, 0.0);
}

TEST(Descriptors, InsaneGraphThrows) {
  MolGraph g;
  g.atoms.push_back({Element::C, 5, 0});
  try {
    compute_descriptors(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsaneGraph);
  }
}

TEST(Descriptors, AppendingCarbonAddsOneAtom) {
  std::mt19937_64 rng(21);
  const char* pool[] = {"[C]", "[N]", "[O]", "[=C]", "[Branch1]", "[C]", "[C]"};
  std::uniform_int_distribution<int> pick(0, 6), len(1, 12);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    std::string s = "[C]";
    for (int k = len(rng); k > 0; --k) s += pool[pick(rng)];
    const auto g0 = decode(tokenize(s));
    // Only chains whose last atom still has capacity accept a new [C].
    const auto g1 = decode(tokenize(s + "[C]"));
    if (g1.atoms.size() != g0.atoms.size() + 1) continue;
    ++checked;
    const auto r0 = compute_descriptors(g0), r1 = compute_descriptors(g1);
    EXPECT_EQ(r1.heavy_atom_count, r0.heavy_atom_count + 1);
    int h0 = 0, h1 = 0;
    for (const auto& a : g0.atoms) h0 += a.implicit_h;
    for (const auto& a : g1.atoms) h1 += a.implicit_h;
    EXPECT_NEAR(r1.mol_wt - r0.mol_wt, 12.011 + (h1 - h0) * 1.008, 1e-9);
  }
  EXPECT_GT(checked, 100);
}

TEST(Descriptors, EachResolvedRingAddsOne) {
  std::string chain;
  for (int i = 0; i < 12; ++i) chain += "[C]";
  EXPECT_EQ(of(chain).ring_count, 0);
  // a ring token after atom p closes back 5 atoms; two disjoint closures.
  std::string one = "[C][C][C][C][C][C][Ring1][=Branch1][C][C][C][C][C][C]";
  std::string two = one + "[Ring1][=Branch1]";
  EXPECT_EQ(of(one).ring_count, 1);
  EXPECT_EQ(of(two).ring_count, 2);
}

TEST(Descriptors, PanelMatchesPerMoleculeRecompute) {
  std::mt19937_64 rng(22);
  const auto& syms = Vocabulary::standard().symbols();
  std::uniform_int_distribution<std::size_t> pick(0, syms.size() - 1), len(0, 25);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (auto k = len(rng); k > 0; --k) s += syms[pick(rng)];
    corpus.push_back(tokenize(s));
  }
  corpus.push_back(tokenize("[C][Xe]"));
  const auto panel = panel_from_corpus(corpus);
  ASSERT_EQ(panel.values.rows(), corpus.size());
  ASSERT_EQ(panel.values.cols(), 7u);
  EXPECT_FALSE(panel.valid.back());
  for (std::size_t i = 0; i + 1 < corpus.size(); ++i) {
    const auto g = decode(corpus[i]);
    ASSERT_EQ(panel.valid[i], is_valid_molecule(g));
    if (!panel.valid[i]) {
      EXPECT_TRUE(std::isnan(panel.values(i, 0)));
      continue;
    }
    const auto v = compute_descriptors(g).values();
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(panel.values(i, j), v[j]);
    EXPECT_GE(v[0], v[1] * 1.008);
    EXPECT_GE(v[2], 0.0);
  }
}

TEST(Descriptors, ThreeValidStrings) {
  const auto panel = panel_from_corpus({tokenize("[C]"), tokenize("[C][O]"), tokenize("[N][=C]")});
  EXPECT_EQ(panel.values.rows(), 3u);
  for (bool v : panel.valid) EXPECT_TRUE(v);
}
