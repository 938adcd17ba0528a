#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latprobe/matrix.hpp"
#include "latprobe/stats.hpp"

namespace latprobe {

struct Provenance {
  std::vector<std::string> sources;
  std::uint64_t seed = 42;
  std::string tool_version;
};

/// Row-aligned latent matrix, property panel and confound panel.
struct PanelSet {
  Matrix z;                             // N x d
  Matrix properties;                    // N x K
  std::vector<std::string> property_names;
  Matrix confounds;                     // N x M
  std::vector<std::string> confound_names;
  std::vector<bool> valid;              // N
  stats::SplitAssignment split;
  Provenance provenance;
  std::vector<std::string> selfies;     // optional, N when present

  std::size_t rows() const noexcept { return z.rows(); }

  /// Throws RowCountMismatch, HeaderMismatch (duplicate names) or
  /// DimensionMismatch (split index out of range).
  void validate() const;

  /// Split restricted to valid rows.
  stats::SplitAssignment valid_split() const;
  std::vector<std::size_t> valid_rows() const;
  std::size_t property_index(const std::string& name) const;
};

}  // namespace latprobe
