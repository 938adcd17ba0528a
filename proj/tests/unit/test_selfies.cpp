#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include "latprobe/errors.hpp"
#include "latprobe/selfies.hpp"
#include "oracles.hpp"

using namespace latprobe;
using namespace latprobe::selfies;

namespace {

TokenSequence seq(std::vector<std::string> toks) {
  TokenSequence s;
  s.tokens = std::move(toks);
  s.source = s.joined();
  return s;
}

TokenSequence random_sequence(std::mt19937_64& rng, std::size_t max_len, bool with_special) {
  const auto& syms = Vocabulary::standard().symbols();
  std::vector<std::string> pool;
  for (const auto& s : syms)
    if (with_special || !is_special(s)) pool.push_back(s);
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, pool.size() - 1);
  std::vector<std::string> toks(len(rng));
  for (auto& t : toks) t = pool[pick(rng)];
  return seq(std::move(toks));
}

// Independent bracket scanner: splits on ']' boundaries.
std::vector<std::string> scan_brackets(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    cur += c;
    if (c == ']') {
      out.push_back(cur);
      cur.clear();
    }
  }
  return out;
}

MolGraph build(std::vector<Element> elems, std::vector<Bond> bonds) {
  MolGraph g;
  for (auto e : elems) g.atoms.push_back({e, 0, 0});
  g.bonds = std::move(bonds);
  for (std::size_t i = 0; i < g.atoms.size(); ++i)
    g.atoms[i].implicit_h = implicit_hydrogens(g.atoms[i].element, g.bond_order_sum(i));
  return g;
}

MolGraph permuted(const MolGraph& g, const std::vector<std::size_t>& perm) {
  MolGraph out;
  out.atoms.resize(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const auto& b : g.bonds) out.bonds.push_back({perm[b.b], perm[b.a], b.order});
  std::reverse(out.bonds.begin(), out.bonds.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// tokenize

TEST(Tokenize, SplitsBrackets) {
  EXPECT_EQ(tokenize("[C][C][O]").tokens, (std::vector<std::string>{"[C]", "[C]", "[O]"}));
  EXPECT_TRUE(tokenize("").tokens.empty());
  const auto t = tokenize("[C][Branch1][C][F][N]");
  EXPECT_EQ(t.tokens, scan_brackets("[C][Branch1][C][F][N]"));
  EXPECT_EQ(t.size(), 5u);
}

TEST(Tokenize, ReportsErrorsWithPosition) {
  try {
    tokenize("[C][C");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnbalancedBracket);
    EXPECT_NE(std::string(e.what()).find("position 3"), std::string::npos);
  }
  EXPECT_THROW(tokenize("[C]x[C]"), Error);
  EXPECT_THROW(tokenize("[C[O]]"), Error);
  try {
    tokenize("[C][]");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyToken);
  }
}

TEST(Tokenize, RoundTripsRandomStrings) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_sequence(rng, 30, true);
    const auto t = tokenize(s.source);
    EXPECT_EQ(t.joined(), s.source);
    EXPECT_EQ(t.tokens, s.tokens);
  }
}

// ---------------------------------------------------------------------------
// confounds

TEST(Confounds, Examples) {
  auto r = confound_panel(seq({"[C]", "[C]", "[C]"}));
  EXPECT_EQ(r.length, 3u);
  EXPECT_EQ(r.branch_count, 0u);
  EXPECT_EQ(r.ring_count, 0u);
  EXPECT_EQ(r.entropy, 0.0);
  EXPECT_DOUBLE_EQ(confound_panel(seq({"[C]", "[O]"})).entropy, 1.0);
  r = confound_panel(seq({"[C]", "[Ring1]", "[Branch1]", "[C]"}));
  EXPECT_EQ(r.length, 4u);
  EXPECT_EQ(r.branch_count, 1u);
  EXPECT_EQ(r.ring_count, 1u);
  // -(1/2 log2 1/2 + 2 * 1/4 log2 1/4)
  EXPECT_NEAR(r.entropy, 1.5, 1e-15);
  r = confound_panel(seq({}));
  EXPECT_EQ(r.length, 0u);
  EXPECT_EQ(r.entropy, 0.0);
}

TEST(Confounds, AgreeWithCountingOracle) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10000; ++i) {
    const auto s = random_sequence(rng, 40, false);
    std::size_t branches = 0, rings = 0;
    for (const auto& t : s.tokens) {
      branches += t.find("Branch") != std::string::npos;
      rings += t.find("Ring") != std::string::npos;
    }
    const auto r = confound_panel(s);
    ASSERT_EQ(r.length, s.tokens.size());
    ASSERT_EQ(r.branch_count, branches);
    ASSERT_EQ(r.ring_count, rings);
    ASSERT_LE(r.branch_count + r.ring_count, r.length);
    const double h = s.tokens.size() > 1 ? oracle::entropy_bits(s.tokens) : 0.0;
    ASSERT_NEAR(r.entropy, std::max(h, 0.0), 1e-12);
    if (r.length > 1) {
      ASSERT_LE(r.entropy, std::log2(static_cast<double>(r.length)) + 1e-12);
    }
  }
}

TEST(Confounds, SpecialTokensStrippedFirst) {
  const auto s = strip_special(tokenize("[SOS][C][O][EOS][PAD][PAD]"));
  EXPECT_EQ(s.tokens, (std::vector<std::string>{"[C]", "[O]"}));
  EXPECT_DOUBLE_EQ(confound_panel(s).entropy, 1.0);
}

// ---------------------------------------------------------------------------
// decode

TEST(Decode, SmallMolecules) {
  auto g = decode(seq({"[C]"}));
  ASSERT_EQ(g.atoms.size(), 1u);
  EXPECT_EQ(g.atoms[0].implicit_h, 4);

  g = decode(seq({"[C]", "[C]"}));
  ASSERT_EQ(g.bonds.size(), 1u);
  EXPECT_EQ(g.bonds[0].order, 1);
  EXPECT_EQ(g.atoms[0].implicit_h, 3);
  EXPECT_EQ(g.atoms[1].implicit_h, 3);

  g = decode(seq({"[C]", "[=C]"}));
  ASSERT_EQ(g.bonds.size(), 1u);
  EXPECT_EQ(g.bonds[0].order, 2);
  EXPECT_EQ(g.atoms[0].implicit_h, 2);
  EXPECT_EQ(g.atoms[1].implicit_h, 2);
}

TEST(Decode, BranchReadsIndexToken) {
  // [Branch1] reads [C] as index 0, so the branch holds one token: [F].
  const auto g = decode(tokenize("[C][Branch1][C][F][N]"));
  ASSERT_EQ(g.atoms.size(), 3u);
  EXPECT_EQ(g.atoms[1].element, Element::F);
  EXPECT_EQ(g.atoms[2].element, Element::N);
  EXPECT_EQ(g.bond_between(0, 1), 1);
  EXPECT_EQ(g.bond_between(0, 2), 1);
  EXPECT_EQ(g.atoms[0].implicit_h, 2);
}

TEST(Decode, KekuleBenzeneRing) {
  const auto g = decode(tokenize("[C][=C][C][=C][C][=C][Ring1][=Branch1]"));
  ASSERT_EQ(g.atoms.size(), 6u);
  ASSERT_EQ(g.bonds.size(), 6u);
  EXPECT_EQ(g.bond_between(5, 0), 1);
  for (const auto& a : g.atoms) EXPECT_EQ(a.implicit_h, 1);
  EXPECT_TRUE(is_valid_molecule(g));
}

TEST(Decode, ClampsAndSkips) {
  // F has capacity 1: the double bond request is clamped.
  auto g = decode(seq({"[F]", "[=C]"}));
  EXPECT_EQ(g.bonds[0].order, 1);
  EXPECT_FALSE(g.derivation_log.empty());
  // ring token with no previous atom is skipped.
  g = decode(seq({"[Ring1]", "[C]"}));
  EXPECT_EQ(g.atoms.size(), 1u);
  EXPECT_FALSE(g.derivation_log.empty());
  // a filled atom terminates the chain.
  g = decode(seq({"[C]", "[F]", "[C]"}));
  EXPECT_EQ(g.atoms.size(), 2u);
}

TEST(Decode, UnknownTokenThrows) {
  try {
    decode(seq({"[C]", "[Xe]"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownToken);
  }
}

TEST(Decode, RandomSequencesAreSane) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_sequence(rng, 40, true);
    const auto g = decode(s);
    ASSERT_TRUE(is_sane(g)) << s.source << "\n" << describe(g);
    std::size_t atom_tokens = 0;
    for (const auto& t : s.tokens) atom_tokens += parse_token(t)->kind == TokenKind::Atom;
    ASSERT_LE(g.atoms.size(), atom_tokens);
  }
}

TEST(Vocabulary, LoadsFileAndRejectsForeignTokens) {
  const auto path = std::filesystem::temp_directory_path() / "latprobe_vocab_test.txt";
  {
    std::ofstream out(path);
    out << "[C]\n[=O]\n\n[Ring1]\n";
  }
  const auto v = Vocabulary::load(path);
  EXPECT_EQ(v.symbols().size(), 3u);
  EXPECT_TRUE(v.contains("[=O]"));
  EXPECT_THROW(decode(seq({"[C]", "[N]"}), v), Error);
  EXPECT_THROW(Vocabulary::from_symbols({"[Xx]"}), Error);
  std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------
// sanity

TEST(Sanity, ValenceViolations) {
  EXPECT_TRUE(is_sane(decode(seq({"[C]"}))));
  MolGraph g = build({Element::C, Element::C, Element::C, Element::C, Element::C, Element::C},
                     {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}, {0, 5, 1}});
  g.atoms[0].implicit_h = 0;
  EXPECT_FALSE(is_sane(g));
  MolGraph two = build({Element::C, Element::C}, {});
  EXPECT_FALSE(is_sane(two));
  EXPECT_TRUE(is_sane(two, {.allow_multi_fragment = true}));
  EXPECT_TRUE(is_sane(MolGraph{}));
  EXPECT_FALSE(is_valid_molecule(MolGraph{}));
  MolGraph dup = build({Element::C, Element::C}, {{0, 1, 1}, {1, 0, 1}});
  EXPECT_FALSE(is_sane(dup));
}

// ---------------------------------------------------------------------------
// canonical hash

TEST(CanonicalHash, RelabelingInvariance) {
  const auto ethane = decode(seq({"[C]", "[C]"}));
  EXPECT_EQ(canonical_hash(ethane), canonical_hash(permuted(ethane, {1, 0})));
  EXPECT_NE(canonical_hash(ethane), canonical_hash(decode(seq({"[C]"}))));
}

TEST(CanonicalHash, RingPermutations) {
  std::vector<Element> elems = {Element::C, Element::N, Element::C, Element::C, Element::O,
                                Element::C, Element::C, Element::S, Element::C, Element::C};
  std::vector<Bond> bonds;
  for (std::size_t i = 0; i < 10; ++i) bonds.push_back({i, (i + 1) % 10, 1});
  const MolGraph ring = build(elems, bonds);
  ASSERT_TRUE(is_sane(ring));
  std::mt19937_64 rng(14);
  std::set<std::uint64_t> digests;
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < 50; ++i) {
    std::shuffle(perm.begin(), perm.end(), rng);
    digests.insert(canonical_hash(permuted(ring, perm)));
  }
  EXPECT_EQ(digests.size(), 1u);
  EXPECT_EQ(*digests.begin(), canonical_hash(ring));
}

namespace {

// Brute-force canonical form: lexicographically smallest (elements, adjacency)
// encoding over all vertex permutations.
std::vector<int> brute_canonical(const std::vector<int>& elems, const std::vector<std::pair<int, int>>& edges) {
  const int n = static_cast<int>(elems.size());
  std::vector<int> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::vector<int> code(n + n * n, 0);
    for (int i = 0; i < n; ++i) code[perm[i]] = elems[i];
    for (auto [a, b] : edges) {
      code[n + perm[a] * n + perm[b]] = 1;
      code[n + perm[b] * n + perm[a]] = 1;
    }
    if (best.empty() || code < best) best = code;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool connected(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  int comps = n;
  for (auto [a, b] : edges)
    if (find(a) != find(b)) parent[find(a)] = find(b), --comps;
  return comps == 1;
}

}  // namespace

TEST(CanonicalHash, DistinctSmallGraphsGetDistinctDigests) {
  // All connected single-bonded graphs on <= 6 atoms over {C, N, O} with at
  // most one ring, deduplicated by brute-force isomorphism.
  const Element pal[3] = {Element::C, Element::N, Element::O};
  std::set<std::vector<int>> classes;
  std::set<std::uint64_t> digests;
  for (int n = 1; n <= 6; ++n) {
    std::vector<std::pair<int, int>> all;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) all.emplace_back(a, b);
    // unlabeled shapes first
    std::set<std::vector<int>> shape_codes;
    std::vector<std::vector<std::pair<int, int>>> shapes;
    const std::vector<int> blank(n, 0);
    for (std::uint32_t mask = 0; mask < (1u << all.size()); ++mask) {
      const int m = std::popcount(mask);
      if (m < n - 1 || m > n) continue;
      std::vector<std::pair<int, int>> edges;
      for (std::size_t k = 0; k < all.size(); ++k)
        if (mask & (1u << k)) edges.push_back(all[k]);
      if (!connected(n, edges)) continue;
      if (shape_codes.insert(brute_canonical(blank, edges)).second) shapes.push_back(edges);
    }
    int labelings = 1;
    for (int i = 0; i < n; ++i) labelings *= 3;
    for (const auto& edges : shapes) {
      std::vector<int> deg(n, 0);
      for (auto [a, b] : edges) ++deg[a], ++deg[b];
      for (int code = 0; code < labelings; ++code) {
        std::vector<int> elems(n);
        bool ok = true;
        for (int i = 0, c = code; i < n; ++i, c /= 3) {
          elems[i] = c % 3;
          ok = ok && deg[i] <= bonding_capacity(pal[elems[i]]);
        }
        if (!ok || !classes.insert(brute_canonical(elems, edges)).second) continue;
        std::vector<Element> es;
        for (int e : elems) es.push_back(pal[e]);
        std::vector<Bond> bonds;
        for (auto [a, b] : edges) bonds.push_back({std::size_t(a), std::size_t(b), 1});
        const MolGraph g = build(es, bonds);
        ASSERT_TRUE(is_sane(g));
        digests.insert(canonical_hash(g));
      }
    }
  }
  EXPECT_GT(classes.size(), 1000u);
  EXPECT_EQ(digests.size(), classes.size());
}
