#include "latprobe/panel.hpp"

#include <set>

#include "latprobe/errors.hpp"

namespace latprobe {

namespace {

void unique_names(const std::vector<std::string>& names, const char* what) {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw Error(ErrorKind::HeaderMismatch, std::string("duplicate ") + what + " column " + n);
}

}  // namespace

void PanelSet::validate() const {
  const std::size_t n = z.rows();
  if (properties.rows() != n || confounds.rows() != n || valid.size() != n)
    throw Error(ErrorKind::RowCountMismatch, "latent, property, confound and mask row counts differ");
  if (!selfies.empty() && selfies.size() != n)
    throw Error(ErrorKind::RowCountMismatch, "selfies column has the wrong row count");
  if (property_names.size() != properties.cols())
    throw Error(ErrorKind::HeaderMismatch, "property names do not match columns");
  if (confound_names.size() != confounds.cols())
    throw Error(ErrorKind::HeaderMismatch, "confound names do not match columns");
  unique_names(property_names, "property");
  unique_names(confound_names, "confound");
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (auto i : *part)
      if (i >= n) throw Error(ErrorKind::DimensionMismatch, "split index out of range");
}

stats::SplitAssignment PanelSet::valid_split() const { return stats::restrict_split(split, valid); }

std::vector<std::size_t> PanelSet::valid_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(i);
  return out;
}

std::size_t PanelSet::property_index(const std::string& name) const {
  for (std::size_t k = 0; k < property_names.size(); ++k)
    if (property_names[k] == name) return k;
  throw Error(ErrorKind::InvalidArgument, "unknown property " + name);
}

}  // namespace latprobe
