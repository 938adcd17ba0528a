#include "latprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "latprobe/descriptors.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/rng.hpp"
#include "latprobe/version.hpp"

namespace latprobe::synth {

namespace {

int round_int(double x) { return static_cast<int>(std::lround(x)); }

}  // namespace

World::World(WorldSpec spec) : spec_(std::move(spec)) {
  const std::size_t d = spec_.dim;
  std::vector<bool> nonlinear(d, false);
  for (auto j : spec_.nonlinear) {
    if (j >= d) throw Error(ErrorKind::InvalidArgument, "nonlinear coordinate out of range");
    nonlinear[j] = true;
  }
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < d; ++j)
    if (!nonlinear[j]) support.push_back(j);
  if (support.size() < 4)
    throw Error(ErrorKind::InvalidArgument, "planted directions need 4 coordinates outside the nonlinear subset");

  Rng rng = make_rng(spec_.seed + seed_offset::world);
  std::vector<Vector> basis;
  while (basis.size() < 4) {
    Vector v(d, 0.0);
    const Vector g = normal_vector(rng, support.size());
    for (std::size_t k = 0; k < support.size(); ++k) v[support[k]] = g[k];
    for (const auto& b : basis) {
      const double s = dot(v, b);
      for (std::size_t j = 0; j < d; ++j) v[j] -= s * b[j];
    }
    if (norm2(v) < 1e-6) continue;
    basis.push_back(normalized(v));
  }
  linear_ = basis[0];
  length_ = basis[1];
  hetero_ = basis[2];
  indep_ = basis[3];
}

int World::atom_count(std::span<const double> z) const {
  return std::clamp(kBaseAtoms + round_int(kAtomsPerUnit * dot(length_, z)), kMinAtoms, kMaxAtoms);
}

int World::ring_count(std::span<const double> z) const {
  return std::min(round_int(std::max(0.0, kRingScale * dot(length_, z))), kMaxRings);
}

int World::hetero_count(std::span<const double> z) const {
  return std::min(round_int(std::max(0.0, dot(hetero_, z))), kMaxHetero);
}

selfies::TokenSequence World::decode(std::span<const double> z) const {
  if (z.size() != spec_.dim) throw Error(ErrorKind::DimensionMismatch, "latent has the wrong dimension");
  const int atoms = atom_count(z), rings = ring_count(z), hetero = hetero_count(z);
  std::vector<bool> is_n(static_cast<std::size_t>(atoms), false);
  for (int h = 0; h < hetero; ++h)
    if (kHeteroPositions[h] < atoms) is_n[kHeteroPositions[h]] = true;
  selfies::TokenSequence seq;
  for (int i = 0; i < atoms; ++i) {
    seq.tokens.emplace_back(is_n[i] ? "[N]" : "[C]");
    // closes a 6-ring back to atom i-5
    if ((i + 1) % 6 == 0 && (i + 1) / 6 <= rings) {
      seq.tokens.emplace_back("[Ring1]");
      seq.tokens.emplace_back("[=Branch1]");
    }
  }
  seq.source = seq.joined();
  return seq;
}

PanelSet World::sample(std::size_t n) const {
  if (n < 10) throw Error(ErrorKind::TooFewRows, "a synthetic world needs at least 10 rows");
  const std::size_t d = spec_.dim;
  const double quad_std = std::sqrt(2.0 * static_cast<double>(spec_.nonlinear.size()));

  PanelSet ps;
  ps.z = Matrix(n, d);
  ps.property_names.assign(kTargetNames.begin(), kTargetNames.end());
  for (auto name : descriptors::kColumnNames) ps.property_names.emplace_back(name);
  ps.confound_names.emplace_back(kPlantedConfound);
  for (auto name : selfies::kConfoundNames) ps.confound_names.emplace_back(name);
  ps.properties = Matrix(n, ps.property_names.size());
  ps.confounds = Matrix(n, ps.confound_names.size());
  ps.selfies.resize(n);
  std::vector<char> ok(n, 0);

  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::seed_seq seq{static_cast<std::uint64_t>(spec_.seed + seed_offset::world), static_cast<std::uint64_t>(i)};
    Rng rng(seq);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto zi = ps.z.row(i);
    for (double& v : zi) v = nd(rng);
    const double noise_lin = nd(rng), noise_ind = nd(rng), noise_quad = nd(rng), noise_conf = nd(rng);

    double quad = 0.0;
    for (auto j : spec_.nonlinear) quad += zi[j] * zi[j];
    const double y_linear = dot(linear_, zi) + spec_.noise * noise_lin;
    auto props = ps.properties.row(i);
    props[0] = y_linear;
    props[1] = dot(indep_, zi) + spec_.noise * noise_ind;
    props[2] = quad + spec_.noise * quad_std * noise_quad;

    const auto tokens = decode(zi);
    ps.selfies[i] = tokens.source;
    const auto graph = selfies::decode(tokens);
    if (selfies::is_valid_molecule(graph)) {
      const auto desc = descriptors::compute_descriptors(graph).values();
      std::copy(desc.begin(), desc.end(), props.begin() + 3);
      ok[i] = 1;
    } else {
      std::fill(props.begin() + 3, props.end(), std::nan(""));
    }

    const auto conf = selfies::confound_panel(tokens);
    auto c = ps.confounds.row(i);
    c[0] = dot(length_, zi) + spec_.confounding * y_linear + spec_.noise * noise_conf;
    c[1] = static_cast<double>(conf.length);
    c[2] = static_cast<double>(conf.branch_count);
    c[3] = static_cast<double>(conf.ring_count);
    c[4] = conf.entropy;
  }
  ps.valid.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) ps.valid[i] = ok[i] != 0;
  ps.split = stats::make_split(n, spec_.seed + seed_offset::split);
  ps.provenance.sources = {"synth"};
  ps.provenance.seed = spec_.seed;
  ps.provenance.tool_version = kVersion;
  return ps;
}

}  // namespace latprobe::synth
