#pragma once

// Staged analysis run over one PanelSet. Each stage writes its files into the
// output directory before the next starts, so a failure leaves earlier
// results on disk.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "latprobe/mlp.hpp"
#include "latprobe/nav.hpp"
#include "latprobe/panel.hpp"
#include "latprobe/probe.hpp"
#include "latprobe/synth.hpp"

namespace latprobe::pipeline {

inline constexpr int kSchemaVersion = 1;

struct ControlOptions {
  bool bootstrap = true;
  std::size_t resamples = 100;
  bool permutation = true;
  std::size_t permutations = 20;
  bool rotation = true;
  bool null_directions = true;
  std::size_t null_count = 1000;
};

struct TraversalOptions {
  std::vector<std::string> targets;  // descriptor columns only
  std::size_t seeds = 50;
  std::size_t steps = 100;
  double lo = -3.0;
  double hi = 3.0;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::vector<std::string> targets;  // empty: every property column
  probe::ProbeOptions probe{};
  double residual_lambda = 10.0;
  double confound_lambda = 1.0;
  ControlOptions controls;
  std::vector<std::string> mlp_targets;
  bool mlp_residual = true;
  mlp::TrainOptions mlp{.batch_size = 256};
  TraversalOptions traversal;
  std::filesystem::path out_dir = "out";
};

/// Sets one dotted key ("controls.resamples", "mlp.targets", ...). List values
/// are comma-separated. Throws InvalidArgument for unknown keys or bad values.
void set_config(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; `[section]` headers prefix the keys that follow;
/// `#` starts a comment.
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

nlohmann::ordered_json config_json(const PipelineConfig& cfg);

/// Traversal needs a decoder; without one the traversal stage is skipped.
/// Throws NoTargets, InvalidArgument (unknown target names) before any stage
/// runs and StageFailure naming the stage for anything raised inside one.
nlohmann::ordered_json run_pipeline(const PanelSet& ps, const PipelineConfig& cfg,
                                    const nav::Decoder& decoder = {});

/// Probe with its scalers, coefficients and scores; round-trips exactly.
nlohmann::ordered_json probe_to_json(const probe::ProbeModel& p);
probe::ProbeModel probe_from_json(const nlohmann::ordered_json& j);

/// Decoder that runs the world's token rule and then the grammar decoder.
nav::Decoder world_decoder(const synth::World& world);

}  // namespace latprobe::pipeline
