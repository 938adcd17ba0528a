#include "latprobe/descriptors.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "latprobe/errors.hpp"

namespace latprobe::descriptors {

using selfies::Element;
using selfies::MolGraph;

std::array<double, 7> DescriptorRow::values() const {
  return {mol_wt,
          static_cast<double>(heavy_atom_count),
          static_cast<double>(ring_count),
          static_cast<double>(hbd),
          static_cast<double>(hba),
          static_cast<double>(rotatable_bonds),
          fraction_csp3};
}

double atomic_mass(Element e) {
  switch (e) {
    case Element::C: return 12.011;
    case Element::N: return 14.007;
    case Element::O: return 15.999;
    case Element::S: return 32.06;
    case Element::P: return 30.974;
    case Element::F: return 18.998;
    case Element::Cl: return 35.45;
    case Element::Br: return 79.904;
    case Element::I: return 126.904;
  }
  return 0.0;
}

std::vector<bool> ring_bonds(const MolGraph& g) {
  const std::size_t n = g.atoms.size();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, bond index)
  for (std::size_t k = 0; k < g.bonds.size(); ++k) {
    adj[g.bonds[k].a].emplace_back(g.bonds[k].b, k);
    adj[g.bonds[k].b].emplace_back(g.bonds[k].a, k);
  }
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> disc(n, kUnseen), low(n, 0);
  std::vector<bool> in_ring(g.bonds.size(), true);
  std::size_t timer = 0;
  std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t u, std::size_t parent_bond) {
    disc[u] = low[u] = timer++;
    for (auto [v, k] : adj[u]) {
      if (k == parent_bond) continue;
      if (disc[v] == kUnseen) {
        dfs(v, k);
        low[u] = std::min(low[u], low[v]);
        if (low[v] > disc[u]) in_ring[k] = false;  // bridge
      } else {
        low[u] = std::min(low[u], disc[v]);
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    if (disc[i] == kUnseen) dfs(i, kUnseen);
  return in_ring;
}

DescriptorRow compute_descriptors(const MolGraph& g) {
  if (!selfies::is_sane(g, {.allow_multi_fragment = true}))
    throw Error(ErrorKind::InsaneGraph, "descriptors need a valence-sane graph");
  DescriptorRow row;
  const std::size_t n = g.atoms.size();
  std::vector<std::size_t> degree(n, 0);
  std::vector<bool> unsaturated(n, false);
  for (const auto& b : g.bonds) {
    ++degree[b.a];
    ++degree[b.b];
    if (b.order > 1) unsaturated[b.a] = unsaturated[b.b] = true;
  }
  int carbons = 0, sp3 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = g.atoms[i];
    row.mol_wt += atomic_mass(a.element) + kHydrogenMass * a.implicit_h;
    if (a.element == Element::N || a.element == Element::O) {
      ++row.hba;
      if (a.implicit_h > 0) ++row.hbd;
    }
    if (a.element == Element::C) {
      ++carbons;
      if (!unsaturated[i]) ++sp3;
    }
  }
  row.heavy_atom_count = static_cast<int>(n);
  row.ring_count = static_cast<int>(g.bonds.size() + g.component_count()) - static_cast<int>(n);
  const auto in_ring = ring_bonds(g);
  for (std::size_t k = 0; k < g.bonds.size(); ++k) {
    const auto& b = g.bonds[k];
    if (b.order == 1 && !in_ring[k] && degree[b.a] >= 2 && degree[b.b] >= 2) ++row.rotatable_bonds;
  }
  row.fraction_csp3 = carbons > 0 ? static_cast<double>(sp3) / carbons : 0.0;
  return row;
}

bool is_descriptor_name(std::string_view name) {
  for (auto c : kColumnNames)
    if (c == name) return true;
  return false;
}

double descriptor_value(const DescriptorRow& row, std::string_view name) {
  const auto vals = row.values();
  for (std::size_t i = 0; i < kColumnNames.size(); ++i)
    if (kColumnNames[i] == name) return vals[i];
  throw Error(ErrorKind::InvalidArgument, "unknown descriptor " + std::string(name));
}

CorpusPanel panel_from_corpus(const std::vector<selfies::TokenSequence>& seqs,
                              const selfies::Vocabulary& vocab) {
  const std::size_t n = seqs.size();
  CorpusPanel out{Matrix(n, kColumnNames.size(), std::numeric_limits<double>::quiet_NaN()),
                  std::vector<bool>(n, false)};
  std::vector<char> ok(n, 0);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const MolGraph g = selfies::decode(seqs[i], vocab);
      if (!selfies::is_valid_molecule(g)) continue;
      const auto vals = compute_descriptors(g).values();
      auto dst = out.values.row(static_cast<std::size_t>(i));
      std::copy(vals.begin(), vals.end(), dst.begin());
      ok[i] = 1;
    } catch (const Error&) {
      // row stays masked
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.valid[i] = ok[i] != 0;
  return out;
}

}  // namespace latprobe::descriptors
