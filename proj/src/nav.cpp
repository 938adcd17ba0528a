#include "latprobe/nav.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latprobe/errors.hpp"
#include "latprobe/rng.hpp"

namespace latprobe::nav {

using selfies::Element;
using selfies::MolGraph;

namespace {

bool decode_ok(const Decoder& decode, std::span<const double> z, MolGraph& out) {
  try {
    out = decode(z);
  } catch (const Error&) {
    return false;
  }
  return selfies::is_valid_molecule(out);
}

double eval_at(const Decoder& decode, const Evaluator& evaluate, std::span<const double> z) {
  MolGraph g;
  if (!decode_ok(decode, z, g)) return std::nan("");
  const double v = evaluate(g);
  return std::isfinite(v) ? v : std::nan("");
}

void require_unit(std::span<const double> u) {
  if (std::abs(norm2(u) - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "traversal direction must be unit norm");
}

void summarize(TraversalResult& r) {
  const std::size_t na = r.alphas.size();
  r.median.assign(na, std::nan(""));
  r.q25 = r.q75 = r.median;
  r.n_valid.assign(na, 0);
  bool any = false;
  for (std::size_t a = 0; a < na; ++a) {
    std::vector<double> col;
    for (std::size_t s = 0; s < r.values.rows(); ++s)
      if (std::isfinite(r.values(s, a))) col.push_back(r.values(s, a));
    r.n_valid[a] = col.size();
    if (col.empty()) continue;
    any = true;
    r.median[a] = stats::median(col);
    r.q25[a] = stats::quantile(col, 0.25);
    r.q75[a] = stats::quantile(col, 0.75);
  }
  if (!any) throw Error(ErrorKind::AllDecodesFailed, "no traversal point decoded");

  Vector xs, ys;
  for (std::size_t a = 0; a < na; ++a)
    if (std::isfinite(r.median[a])) {
      xs.push_back(r.alphas[a]);
      ys.push_back(r.median[a]);
    }
  try {
    r.spearman = stats::spearman(xs, ys);
  } catch (const Error&) {
    r.spearman = std::nan("");
  }
  r.slope = stats::slope(xs, ys);
  r.violations = count_violations(r.median, r.spearman);
}

// ---------------------------------------------------------------------------
// graph helpers for the family patterns

struct View {
  const MolGraph& g;
  std::vector<std::vector<std::pair<std::size_t, int>>> adj;

  explicit View(const MolGraph& graph) : g(graph), adj(graph.adjacency()) {}

  Element el(std::size_t a) const { return g.atoms[a].element; }
  int h(std::size_t a) const { return g.atoms[a].implicit_h; }
  std::size_t deg(std::size_t a) const { return adj[a].size(); }
  // total connections, SMARTS X
  std::size_t x(std::size_t a) const { return adj[a].size() + static_cast<std::size_t>(h(a)); }
  bool is(std::size_t a, Element e) const { return el(a) == e; }

  // neighbor of a reached by a bond of `order` with element e, excluding `skip`
  bool has_neighbor(std::size_t a, Element e, int order, std::size_t skip = SIZE_MAX) const {
    for (auto [n, o] : adj[a])
      if (n != skip && o == order && el(n) == e) return true;
    return false;
  }

  // C=O on this carbon (any carbon, SMARTS C=O)
  bool carbonyl(std::size_t c) const {
    if (!is(c, Element::C)) return false;
    for (auto [n, o] : adj[c])
      if (o == 2 && is(n, Element::O)) return true;
    return false;
  }

  // =[OX1] neighbors
  std::vector<std::size_t> terminal_double_o(std::size_t a) const {
    std::vector<std::size_t> out;
    for (auto [n, o] : adj[a])
      if (o == 2 && is(n, Element::O) && x(n) == 1) out.push_back(n);
    return out;
  }

  // carbon in a six-membered ring of alternating single/double bonds
  bool aromatic_carbon(std::size_t a) const {
    if (!is(a, Element::C)) return false;
    std::vector<std::size_t> path = {a};
    std::vector<int> orders;
    return ring_walk(a, path, orders);
  }

  bool ring_walk(std::size_t start, std::vector<std::size_t>& path, std::vector<int>& orders) const {
    const std::size_t cur = path.back();
    for (auto [n, o] : adj[cur]) {
      if (o != 1 && o != 2) continue;
      if (!orders.empty() && o == orders.back()) continue;  // must alternate
      if (path.size() == 6) {
        if (n == start && o != orders.front()) return true;
        continue;
      }
      if (std::find(path.begin(), path.end(), n) != path.end()) continue;
      path.push_back(n);
      orders.push_back(o);
      if (ring_walk(start, path, orders)) return true;
      path.pop_back();
      orders.pop_back();
    }
    return false;
  }
};

bool alcohol(const View& v) {
  // [OX2H][CX4]
  for (std::size_t a = 0; a < v.g.atoms.size(); ++a) {
    if (!v.is(a, Element::O) || v.x(a) != 2 || v.h(a) != 1) continue;
    for (auto [n, o] : v.adj[a])
      if (o == 1 && v.is(n, Element::C) && v.x(n) == 4) return true;
  }
  return false;
}

bool phenol(const View& v) {
  // [OX2H][c]
  for (std::size_t a = 0; a < v.g.atoms.size(); ++a) {
    if (!v.is(a, Element::O) || v.x(a) != 2 || v.h(a) != 1) continue;
    for (auto [n, o] : v.adj[a])
      if (o == 1 && v.aromatic_carbon(n)) return true;
  }
  return false;
}

bool ether(const View& v) {
  // [OD2]([#6;!$(C=O)])[#6;!$(C=O)]
  for (std::size_t a = 0; a < v.g.atoms.size(); ++a) {
    if (!v.is(a, Element::O) || v.deg(a) != 2) continue;
    bool ok = true;
    for (auto [n, o] : v.adj[a]) ok = ok && o == 1 && v.is(n, Element::C) && !v.carbonyl(n);
    if (ok) return true;
  }
  return false;
}

bool amine(const View& v) {
  // [NX3;H2,H1,H0;!$(N[C,S,P]=O)]
  for (std::size_t a = 0; a < v.g.atoms.size(); ++a) {
    if (!v.is(a, Element::N) || v.x(a) != 3 || v.h(a) > 2) continue;
    bool acyl = false;
    for (auto [n, o] : v.adj[a]) {
      if (o != 1) continue;
      const Element e = v.el(n);
      if ((e == Element::C || e == Element::S || e == Element::P) && v.has_neighbor(n, Element::O, 2)) acyl = true;
    }
    if (!acyl) return true;
  }
  return false;
}

bool amide(const View& v) {
  // [NX3][CX3](=[OX1])[#6,#7,#8]
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c) {
    if (!v.is(c, Element::C) || v.x(c) != 3) continue;
    const auto oxo = v.terminal_double_o(c);
    if (oxo.empty()) continue;
    for (auto [nn, on] : v.adj[c]) {
      if (on != 1 || !v.is(nn, Element::N) || v.x(nn) != 3) continue;
      for (auto [r, orr] : v.adj[c]) {
        if (r == nn || orr != 1) continue;
        const Element e = v.el(r);
        if (e == Element::C || e == Element::N || e == Element::O) return true;
      }
    }
  }
  return false;
}

bool carboxylic_acid(const View& v) {
  // [CX3](=O)[OX2H1]
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c) {
    if (!v.is(c, Element::C) || v.x(c) != 3 || !v.has_neighbor(c, Element::O, 2)) continue;
    for (auto [n, o] : v.adj[c])
      if (o == 1 && v.is(n, Element::O) && v.x(n) == 2 && v.h(n) == 1) return true;
  }
  return false;
}

bool ester(const View& v) {
  // [CX3](=O)[OX2H0][#6]
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c) {
    if (!v.is(c, Element::C) || v.x(c) != 3 || !v.has_neighbor(c, Element::O, 2)) continue;
    for (auto [n, o] : v.adj[c])
      if (o == 1 && v.is(n, Element::O) && v.x(n) == 2 && v.h(n) == 0 && v.has_neighbor(n, Element::C, 1, c))
        return true;
  }
  return false;
}

bool aldehyde(const View& v) {
  // [CX3H1](=O)[#6]
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c)
    if (v.is(c, Element::C) && v.x(c) == 3 && v.h(c) == 1 && v.has_neighbor(c, Element::O, 2) &&
        v.has_neighbor(c, Element::C, 1))
      return true;
  return false;
}

bool ketone(const View& v) {
  // [#6][CX3](=O)[#6]
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c) {
    if (!v.is(c, Element::C) || v.x(c) != 3 || !v.has_neighbor(c, Element::O, 2)) continue;
    int carbons = 0;
    for (auto [n, o] : v.adj[c])
      if (o == 1 && v.is(n, Element::C)) ++carbons;
    if (carbons >= 2) return true;
  }
  return false;
}

bool nitrile(const View& v) {
  // [CX2]#N
  for (std::size_t c = 0; c < v.g.atoms.size(); ++c)
    if (v.is(c, Element::C) && v.x(c) == 2 && v.has_neighbor(c, Element::N, 3)) return true;
  return false;
}

bool sulfonamide(const View& v) {
  // [SX4](=[OX1])(=[OX1])([#6])[NX3]
  for (std::size_t s = 0; s < v.g.atoms.size(); ++s) {
    if (!v.is(s, Element::S) || v.x(s) != 4 || v.terminal_double_o(s).size() < 2) continue;
    bool carbon = false, nitrogen = false;
    for (auto [n, o] : v.adj[s]) {
      if (o != 1) continue;
      carbon = carbon || v.is(n, Element::C);
      nitrogen = nitrogen || (v.is(n, Element::N) && v.x(n) == 3);
    }
    if (carbon && nitrogen) return true;
  }
  return false;
}

}  // namespace

std::size_t count_violations(std::span<const double> curve, double trend) {
  if (!std::isfinite(trend) || trend == 0.0) return 0;
  std::size_t count = 0;
  double prev = std::nan("");
  for (double v : curve) {
    if (!std::isfinite(v)) continue;
    if (std::isfinite(prev) && (trend > 0 ? v < prev : v > prev)) ++count;
    prev = v;
  }
  return count;
}

TraversalResult traverse_dense(std::span<const double> direction, std::span<const double> origin, double lo,
                               double hi, std::size_t n, const Decoder& decode, const Evaluator& evaluate) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "traversal needs at least one step");
  Matrix seed(1, origin.size());
  std::copy(origin.begin(), origin.end(), seed.row(0).begin());
  const Vector alphas = stats::linspace(lo, hi, n);
  return traverse_multiseed(direction, seed, alphas, decode, evaluate);
}

TraversalResult traverse_multiseed(std::span<const double> direction, const Matrix& seeds, std::span<const double> alphas,
                                   const Decoder& decode, const Evaluator& evaluate) {
  require_unit(direction);
  if (seeds.rows() == 0) throw Error(ErrorKind::InvalidArgument, "traversal needs at least one seed");
  if (seeds.cols() != direction.size()) throw Error(ErrorKind::DimensionMismatch, "seed and direction dimensions differ");
  if (alphas.empty()) throw Error(ErrorKind::InvalidArgument, "traversal needs at least one alpha");
  for (std::size_t a = 1; a < alphas.size(); ++a)
    if (!(alphas[a] > alphas[a - 1])) throw Error(ErrorKind::InvalidArgument, "alphas must be strictly increasing");

  TraversalResult r;
  r.alphas.assign(alphas.begin(), alphas.end());
  r.values = Matrix(seeds.rows(), alphas.size());
  const auto total = static_cast<std::ptrdiff_t>(seeds.rows() * alphas.size());
  const std::size_t d = direction.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < total; ++t) {
    const std::size_t s = static_cast<std::size_t>(t) / alphas.size();
    const std::size_t a = static_cast<std::size_t>(t) % alphas.size();
    Vector z(d);
    const auto z0 = seeds.row(s);
    for (std::size_t j = 0; j < d; ++j) z[j] = z0[j] + alphas[a] * direction[j];
    r.values(s, a) = eval_at(decode, evaluate, z);
  }
  summarize(r);
  return r;
}

std::vector<std::size_t> pick_seed_rows(const stats::SplitAssignment& split, std::size_t count, std::uint64_t seed) {
  if (count > split.test.size()) throw Error(ErrorKind::TooFewRows, "not enough test rows for traversal seeds");
  std::vector<std::size_t> rows = split.test;
  Rng rng = make_rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(count);
  return rows;
}

Vector trust_region_step(std::span<const double> z0, std::span<const double> w, double rho) {
  if (z0.size() != w.size()) throw Error(ErrorKind::DimensionMismatch, "point and direction dimensions differ");
  if (rho < 0.0) throw Error(ErrorKind::InvalidArgument, "trust radius must be non-negative");
  const double n = norm2(w);
  if (n == 0.0) throw Error(ErrorKind::ZeroDirection, "trust-region step needs a nonzero direction");
  Vector z(z0.begin(), z0.end());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] += rho * w[j] / n;
  return z;
}

std::vector<Vector> interpolate(std::span<const double> z1, std::span<const double> z2, std::size_t k) {
  if (z1.size() != z2.size()) throw Error(ErrorKind::DimensionMismatch, "interpolation endpoints differ in dimension");
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "interpolation needs at least two steps");
  std::vector<Vector> path(k, Vector(z1.size()));
  for (std::size_t i = 0; i < k; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(k - 1);
    for (std::size_t j = 0; j < z1.size(); ++j) path[i][j] = (1.0 - t) * z1[j] + t * z2[j];
  }
  return path;
}

std::set<std::string> neighborhood_features(const MolGraph& g) {
  std::set<std::string> out;
  const auto adj = g.adjacency();
  for (std::size_t a = 0; a < g.atoms.size(); ++a) {
    std::vector<std::string> nbrs;
    for (auto [n, o] : adj[a]) nbrs.push_back(std::string(selfies::symbol(g.atoms[n].element)) + ":" + std::to_string(o));
    std::sort(nbrs.begin(), nbrs.end());
    std::string f(selfies::symbol(g.atoms[a].element));
    for (const auto& s : nbrs) f += "|" + s;
    out.insert(std::move(f));
  }
  return out;
}

double tanimoto(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& f : a) common += b.count(f);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Alcohol: return "alcohol";
    case Family::Phenol: return "phenol";
    case Family::Ether: return "ether";
    case Family::Amine: return "amine";
    case Family::Amide: return "amide";
    case Family::CarboxylicAcid: return "carboxylic_acid";
    case Family::Ester: return "ester";
    case Family::Aldehyde: return "aldehyde";
    case Family::Ketone: return "ketone";
    case Family::Nitrile: return "nitrile";
    case Family::Sulfonamide: return "sulfonamide";
  }
  return "unknown";
}

bool in_family(const MolGraph& g, Family f) {
  const View v(g);
  switch (f) {
    case Family::Alcohol: return alcohol(v);
    case Family::Phenol: return phenol(v);
    case Family::Ether: return ether(v);
    case Family::Amine: return amine(v);
    case Family::Amide: return amide(v);
    case Family::CarboxylicAcid: return carboxylic_acid(v);
    case Family::Ester: return ester(v);
    case Family::Aldehyde: return aldehyde(v);
    case Family::Ketone: return ketone(v);
    case Family::Nitrile: return nitrile(v);
    case Family::Sulfonamide: return sulfonamide(v);
  }
  return false;
}

double family_retention(const std::vector<MolGraph>& path, Family f) {
  if (path.empty()) throw Error(ErrorKind::InvalidArgument, "family retention needs at least one step");
  std::size_t hits = 0;
  for (const auto& g : path) hits += selfies::is_valid_molecule(g) && in_family(g, f);
  return static_cast<double>(hits) / static_cast<double>(path.size());
}

InterpResult interp_metrics(const std::vector<std::pair<Vector, Vector>>& endpoints, std::size_t k,
                            const Decoder& decode) {
  InterpResult r;
  r.steps = k;
  const std::size_t np = endpoints.size();
  r.decodes.assign(np, std::vector<MolGraph>(k));
  r.valid.assign(np, std::vector<bool>(k, false));
  r.similarity = Matrix(np, k - 1, std::nan(""));
  std::vector<std::vector<char>> ok(np, std::vector<char>(k, 0));

  const auto count = static_cast<std::ptrdiff_t>(np);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t pp = 0; pp < count; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    const auto path = interpolate(endpoints[p].first, endpoints[p].second, k);
    std::vector<std::set<std::string>> feats(k);
    for (std::size_t i = 0; i < k; ++i) {
      ok[p][i] = decode_ok(decode, path[i], r.decodes[p][i]);
      if (ok[p][i]) feats[i] = neighborhood_features(r.decodes[p][i]);
    }
    for (std::size_t i = 0; i + 1 < k; ++i)
      if (ok[p][i] && ok[p][i + 1]) r.similarity(p, i) = tanimoto(feats[i], feats[i + 1]);
  }

  r.valid_fraction.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < np; ++p) {
      r.valid[p][i] = ok[p][i] != 0;
      hits += r.valid[p][i];
    }
    r.valid_fraction[i] = np == 0 ? std::nan("") : static_cast<double>(hits) / static_cast<double>(np);
  }
  for (std::size_t i = 0; i + 1 < k; ++i) {
    r.midpoints.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(k - 1));
    r.median_similarity.push_back(stats::median(r.similarity.column(i)));
  }
  return r;
}

GenerationMetrics generation_metrics(const std::vector<MolGraph>& decoded,
                                     const std::unordered_set<std::uint64_t>& training_hashes) {
  GenerationMetrics m;
  m.n = decoded.size();
  std::size_t valid = 0;
  std::unordered_set<std::uint64_t> unique;
  for (const auto& g : decoded) {
    if (!selfies::is_valid_molecule(g)) continue;
    ++valid;
    unique.insert(selfies::canonical_hash(g));
  }
  const double nan = std::nan("");
  m.validity = decoded.empty() ? nan : static_cast<double>(valid) / static_cast<double>(decoded.size());
  m.uniqueness = valid == 0 ? nan : static_cast<double>(unique.size()) / static_cast<double>(valid);
  std::size_t novel = 0;
  for (auto h : unique) novel += training_hashes.count(h) == 0;
  m.novelty = unique.empty() ? nan : static_cast<double>(novel) / static_cast<double>(unique.size());
  return m;
}

}  // namespace latprobe::nav
