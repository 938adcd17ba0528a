#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/selfies.hpp"

namespace latprobe::descriptors {

/// Reduced descriptor panel computed straight from a MolGraph.
///
/// hbd counts donor atoms (N or O carrying at least one H), hba counts all N
/// and O atoms, ring_count is the cyclomatic number, and rotatable bonds are
/// non-ring single bonds between two heavy atoms of degree >= 2 (no amide
/// exclusion).
struct DescriptorRow {
  double mol_wt = 0.0;
  int heavy_atom_count = 0;
  int ring_count = 0;
  int hbd = 0;
  int hba = 0;
  int rotatable_bonds = 0;
  double fraction_csp3 = 0.0;

  std::array<double, 7> values() const;
};

inline constexpr std::array<std::string_view, 7> kColumnNames = {
    "MolWt", "HeavyAtomCount", "RingCount", "HBD", "HBA", "NumRotatableBonds", "FractionCSP3"};

double atomic_mass(selfies::Element e);
inline constexpr double kHydrogenMass = 1.008;

/// Throws InsaneGraph when `g` fails is_sane.
DescriptorRow compute_descriptors(const selfies::MolGraph& g);

/// Bonds whose removal leaves their endpoints connected.
std::vector<bool> ring_bonds(const selfies::MolGraph& g);

/// Value of one named descriptor column; throws InvalidArgument on an unknown name.
double descriptor_value(const DescriptorRow& row, std::string_view name);
bool is_descriptor_name(std::string_view name);

struct CorpusPanel {
  Matrix values;            // N x 7, NaN rows where invalid
  std::vector<bool> valid;  // decodable, non-empty and sane
};

/// Row i holds descriptors of decode(seqs[i]); undecodable or insane rows are
/// masked. Rows are processed in parallel.
CorpusPanel panel_from_corpus(const std::vector<selfies::TokenSequence>& seqs,
                              const selfies::Vocabulary& vocab = selfies::Vocabulary::standard());

}  // namespace latprobe::descriptors
