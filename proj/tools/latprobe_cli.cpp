// latprobe: command-line front end over the library.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "latprobe/descriptors.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/io.hpp"
#include "latprobe/kernels.hpp"
#include "latprobe/mlp.hpp"
#include "latprobe/nav.hpp"
#include "latprobe/pipeline.hpp"
#include "latprobe/probe.hpp"
#include "latprobe/rng.hpp"
#include "latprobe/selfies.hpp"
#include "latprobe/slot.hpp"
#include "latprobe/synth.hpp"
#include "latprobe/version.hpp"

using namespace latprobe;
namespace fs = std::filesystem;
using Json = io::Json;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  int threads = 0;
  std::string out_dir = "out";
  std::string config;
  std::vector<std::string> sets;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

struct PanelArgs {
  std::string latents, properties, confounds, split;
};

void add_panel(CLI::App* sub, PanelArgs& a, bool need_properties = true) {
  sub->add_option("--latents", a.latents, "latent CSV (z0..) or f32 blob")->required();
  auto* p = sub->add_option("--properties", a.properties, "property CSV");
  if (need_properties) p->required();
  sub->add_option("--confounds", a.confounds, "confound CSV");
  sub->add_option("--split", a.split, "split CSV (row,part)");
}

PanelSet load(const PanelArgs& a, const Globals& g) {
  io::PanelPaths paths{a.latents, a.properties, {}, {}};
  if (!a.confounds.empty()) paths.confounds = a.confounds;
  if (!a.split.empty()) paths.split = a.split;
  io::LoadReport rep;
  auto ps = io::load_panelset(paths, g.seed, &rep);
  if (rep.nonfinite_cells > 0)
    std::cerr << "warning: " << rep.nonfinite_cells << " non-finite cells, " << rep.masked_rows << " rows masked\n";
  return ps;
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out_dir);
  return g.out_dir;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

probe::ProbeOptions probe_options(const std::string& method, double lambda) {
  if (method == "ols") return {probe::Method::Ols, lambda};
  if (method == "ridge") return {probe::Method::Ridge, lambda};
  throw Error(ErrorKind::InvalidArgument, "method must be ols or ridge");
}

Json scores(const probe::SplitScores& s) {
  return Json{{"train", io::number(s.train)}, {"val", io::number(s.val)}, {"test", io::number(s.test)}};
}

Json world_json(const synth::WorldSpec& s) {
  return Json{{"dim", s.dim}, {"noise", s.noise}, {"confounding", s.confounding}, {"nonlinear", s.nonlinear},
              {"seed", s.seed}};
}

synth::WorldSpec world_from_file(const fs::path& path) {
  const auto j = io::read_json(path);
  synth::WorldSpec s;
  s.dim = j.at("dim").get<std::size_t>();
  s.noise = j.at("noise").get<double>();
  s.confounding = j.at("confounding").get<double>();
  s.nonlinear = j.at("nonlinear").get<std::vector<std::size_t>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

nav::Evaluator descriptor_evaluator(const std::string& name) {
  const auto& names = descriptors::kColumnNames;
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::InvalidArgument, name + " is not a descriptor column");
  const auto col = static_cast<std::size_t>(it - names.begin());
  return [col](const selfies::MolGraph& m) { return descriptors::compute_descriptors(m).values()[col]; };
}

void write_traversal_csv(const fs::path& path, const nav::TraversalResult& r) {
  io::Table t{{"alpha", "median", "q25", "q75", "n_valid"}, {}};
  for (std::size_t a = 0; a < r.alphas.size(); ++a)
    t.rows.push_back({io::format_double(r.alphas[a]), io::format_double(r.median[a]), io::format_double(r.q25[a]),
                      io::format_double(r.q75[a]), std::to_string(r.n_valid[a])});
  io::write_csv(path, t);
}

Json traversal_summary(const nav::TraversalResult& r) {
  return Json{{"spearman", io::number(r.spearman)},
              {"violations", r.violations},
              {"slope", io::number(r.slope)},
              {"seeds", r.values.rows()},
              {"steps", r.alphas.size()}};
}

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

// ---------------------------------------------------------------------------

void add_selfies(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("selfies", "token statistics and graph decoding");
  cmd->require_subcommand(1);
  static std::string input;

  auto* stats = cmd->add_subcommand("stats", "length, branch count, ring count, entropy per string");
  stats->add_option("--input", input, "one SELFIES string per line")->required();
  stats->callback([&g] {
    io::Table t{{"length", "branch_count", "ring_count", "entropy"}, {}};
    const auto lines = read_lines(input);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        const auto c = selfies::confound_panel(selfies::strip_special(selfies::tokenize(lines[i])));
        t.rows.push_back({std::to_string(c.length), std::to_string(c.branch_count), std::to_string(c.ring_count),
                          io::format_double(c.entropy)});
      } catch (const Error& e) {
        throw Error(e.kind(), "line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    io::write_csv(out_dir(g) / "confounds.csv", t);
    std::cout << "wrote " << lines.size() << " rows to " << (fs::path(g.out_dir) / "confounds.csv").string() << '\n';
  });

  auto* dec = cmd->add_subcommand("decode", "decode strings into molecular graphs");
  dec->add_option("--input", input, "one SELFIES string per line")->required();
  dec->callback([&g] {
    io::Table t{{"index", "valid", "atoms", "bonds", "hash", "graph"}, {}};
    const auto lines = read_lines(input);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      selfies::MolGraph m;
      try {
        m = selfies::decode(selfies::tokenize(lines[i]));
      } catch (const Error& e) {
        throw Error(e.kind(), "line " + std::to_string(i + 1) + ": " + e.what());
      }
      const bool ok = selfies::is_valid_molecule(m);
      valid += ok;
      t.rows.push_back({std::to_string(i), ok ? "1" : "0", std::to_string(m.atoms.size()), std::to_string(m.bonds.size()),
                        std::to_string(selfies::canonical_hash(m)), selfies::describe(m)});
    }
    io::write_csv(out_dir(g) / "decoded.csv", t);
    std::cout << valid << "/" << lines.size() << " valid\n";
  });
}

void add_descriptors(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("descriptors", "descriptor panel from SELFIES strings");
  cmd->require_subcommand(1);
  static std::string input;
  auto* comp = cmd->add_subcommand("compute", "write properties.csv with is_valid and selfies columns");
  comp->add_option("--input", input, "one SELFIES string per line")->required();
  comp->callback([&g] {
    io::Table t;
    for (auto n : descriptors::kColumnNames) t.header.emplace_back(n);
    t.header.push_back("is_valid");
    t.header.push_back("selfies");
    for (const auto& line : read_lines(input)) {
      std::vector<std::string> row;
      try {
        const auto m = selfies::decode(selfies::tokenize(line));
        if (!selfies::is_valid_molecule(m)) throw Error(ErrorKind::InsaneGraph, "invalid molecule");
        for (double v : descriptors::compute_descriptors(m).values()) row.push_back(io::format_double(v));
        row.push_back("1");
      } catch (const Error&) {
        row.assign(descriptors::kColumnNames.size(), "nan");
        row.push_back("0");
      }
      row.push_back(line);
      t.rows.push_back(std::move(row));
    }
    io::write_csv(out_dir(g) / "properties.csv", t);
    std::cout << "wrote " << t.rows.size() << " rows\n";
  });
}

void add_synth(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("synth", "planted-truth panels");
  cmd->require_subcommand(1);
  static std::size_t rows = 20000;
  static synth::WorldSpec spec;
  static bool blob = false;
  auto* make = cmd->add_subcommand("make", "sample a world panel into --out-dir");
  make->add_option("--rows", rows, "number of molecules")->capture_default_str();
  make->add_option("--noise", spec.noise, "noise relative to signal")->capture_default_str();
  make->add_option("--confounding", spec.confounding, "planted confound weight")->capture_default_str();
  make->add_flag("--blob", blob, "write latents as an f32 blob");
  make->callback([&g] {
    spec.seed = g.seed;
    const auto ps = synth::World(spec).sample(rows);
    const auto dir = out_dir(g);
    io::write_panelset(dir, ps, blob);
    io::write_json(dir / "world.json", world_json(spec));
    std::cout << "wrote " << rows << " rows to " << dir.string() << '\n';
  });
}

void add_split(CLI::App& app, Globals& g) {
  static std::size_t rows = 0;
  static std::string latents;
  auto* cmd = app.add_subcommand("split", "seeded 80/10/10 split");
  auto* r = cmd->add_option("--rows", rows, "row count");
  auto* l = cmd->add_option("--latents", latents, "take the row count from a latent file");
  r->excludes(l);
  cmd->callback([&g] {
    std::size_t n = rows;
    if (!latents.empty()) n = io::read_latents(latents).rows();
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "give --rows or --latents");
    const auto s = stats::make_split(n, g.seed + seed_offset::split);
    io::write_split(out_dir(g) / "split.csv", s);
    std::cout << "train " << s.train.size() << " val " << s.val.size() << " test " << s.test.size() << '\n';
  });
}

void add_probe(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("probe", "linear probes");
  cmd->require_subcommand(1);
  static PanelArgs panel;
  static std::string target, method = "ols", model;
  static double lambda = 1e-2;

  auto* fit = cmd->add_subcommand("fit", "fit one probe and write probe_<target>.json");
  add_panel(fit, panel);
  fit->add_option("--target", target, "property column")->required();
  fit->add_option("--method", method, "ols or ridge")->capture_default_str();
  fit->add_option("--lambda", lambda, "ridge penalty")->capture_default_str();
  fit->callback([&g] {
    const auto ps = load(panel, g);
    const auto p = probe::fit_probe(ps.z, ps.properties.column(ps.property_index(target)), ps.valid_split(), target,
                                    probe_options(method, lambda));
    io::write_json(out_dir(g) / ("probe_" + target + ".json"), pipeline::probe_to_json(p));
    print(Json{{"target", target}, {"r2", scores(p.r2)}});
  });

  auto* eval = cmd->add_subcommand("eval", "score a saved probe on a panel");
  add_panel(eval, panel);
  eval->add_option("--model", model, "probe JSON")->required();
  eval->callback([&g] {
    const auto ps = load(panel, g);
    const auto p = pipeline::probe_from_json(io::read_json(model));
    if (p.model.dim() != ps.z.cols()) throw Error(ErrorKind::DimensionMismatch, "probe and latents differ in width");
    const auto r = probe::scores(p.model, ps.z, ps.properties.column(ps.property_index(p.target)), ps.valid_split());
    const Json out{{"target", p.target}, {"r2", scores(r)}};
    io::write_json(out_dir(g) / ("eval_" + p.target + ".json"), out);
    print(out);
  });
}

void add_residualize(CLI::App& app, Globals& g) {
  static PanelArgs panel;
  static double lambda = 10.0;
  auto* cmd = app.add_subcommand("residualize", "remove the confound-predictable part of each property");
  add_panel(cmd, panel);
  cmd->add_option("--lambda", lambda, "ridge penalty for C -> y")->capture_default_str();
  cmd->callback([&g] {
    const auto ps = load(panel, g);
    if (ps.confounds.cols() == 0) throw Error(ErrorKind::InvalidArgument, "residualize needs --confounds");
    const auto rts = probe::residualize(ps.confounds, ps.properties, ps.property_names, ps.valid_split(), lambda);
    io::Table t;
    Json out = Json::array();
    for (const auto& rt : rts) {
      t.header.push_back("resid_" + rt.base_target);
      out.push_back({{"target", rt.base_target}, {"confound_r2", scores(rt.confound_r2)}});
    }
    for (std::size_t i = 0; i < ps.rows(); ++i) {
      std::vector<std::string> row;
      for (const auto& rt : rts) row.push_back(io::format_double(rt.values[i]));
      t.rows.push_back(std::move(row));
    }
    const auto dir = out_dir(g);
    io::write_csv(dir / "residuals.csv", t);
    io::write_json(dir / "residualization.json", Json{{"lambda", lambda}, {"targets", out}});
    print(out);
  });
}

void add_controls(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("controls", "robustness controls for a probe");
  cmd->require_subcommand(1);
  static PanelArgs panel;
  static std::string target, method = "ols";
  static double lambda = 1e-2;
  static std::size_t count = 0;
  auto common = [](CLI::App* s) {
    add_panel(s, panel);
    s->add_option("--method", method, "ols or ridge")->capture_default_str();
    s->add_option("--lambda", lambda, "ridge penalty")->capture_default_str();
  };
  auto with_target = [&](CLI::App* s) { s->add_option("--target", target, "property column")->required(); };
  auto target_y = [](const PanelSet& ps) { return ps.properties.column(ps.property_index(target)); };

  auto* boot = cmd->add_subcommand("bootstrap", "direction stability under resampling");
  common(boot);
  with_target(boot);
  boot->add_option("--resamples", count, "B")->default_val(100);
  boot->callback([&g, target_y] {
    const auto ps = load(panel, g);
    const auto r = probe::bootstrap_stability(ps.z, target_y(ps), ps.valid_split(), count,
                                              g.seed + seed_offset::bootstrap, probe_options(method, lambda));
    const Json out{{"target", target}, {"resamples", count}, {"median", io::number(r.median)},
                   {"q25", io::number(r.q25)}, {"q75", io::number(r.q75)}, {"redraws", r.redraws},
                   {"cosines", io::numbers(r.cosines)}};
    io::write_json(out_dir(g) / ("bootstrap_" + target + ".json"), out);
    std::cout << "median cosine " << r.median << '\n';
  });

  auto* perm = cmd->add_subcommand("permute", "refit on shuffled train targets");
  common(perm);
  with_target(perm);
  perm->add_option("--runs", count, "number of permutations")->default_val(20);
  perm->callback([&g, target_y] {
    const auto ps = load(panel, g);
    const auto runs = probe::permutation_runs(ps.z, target_y(ps), ps.valid_split(), count,
                                              g.seed + seed_offset::permutation, probe_options(method, lambda));
    Vector val, test;
    for (const auto& r : runs) {
      val.push_back(r.val_r2);
      test.push_back(r.test_r2);
    }
    double mean_abs = 0.0, max_abs = 0.0;
    for (double v : test) {
      mean_abs += std::abs(v) / static_cast<double>(test.size());
      max_abs = std::max(max_abs, std::abs(v));
    }
    const Json out{{"target", target}, {"runs", runs.size()}, {"mean_abs_test_r2", io::number(mean_abs)},
                   {"max_abs_test_r2", io::number(max_abs)}, {"val_r2", io::numbers(val)}, {"test_r2", io::numbers(test)}};
    io::write_json(out_dir(g) / ("permutation_" + target + ".json"), out);
    std::cout << "mean |test R2| " << mean_abs << ", max " << max_abs << '\n';
  });

  auto* rot = cmd->add_subcommand("rotate", "prediction change under a random orthogonal map");
  common(rot);
  with_target(rot);
  rot->callback([&g, target_y] {
    const auto ps = load(panel, g);
    const double diff = probe::rotation_invariance(ps.z, target_y(ps), ps.valid_split(), g.seed + seed_offset::rotation,
                                                   probe_options(method, lambda));
    const Json out{{"target", target}, {"max_abs_prediction_diff", io::number(diff)}};
    io::write_json(out_dir(g) / ("rotation_" + target + ".json"), out);
    std::cout << "max |diff| " << diff << '\n';
  });

  auto* null = cmd->add_subcommand("null", "max |cosine| of random directions against confound directions");
  common(null);
  null->add_option("--count", count, "random directions")->default_val(1000);
  null->callback([&g] {
    const auto ps = load(panel, g);
    if (ps.confounds.cols() == 0) throw Error(ErrorKind::InvalidArgument, "null control needs --confounds");
    std::vector<probe::NamedDirection> confs;
    for (const auto& p : probe::confound_directions(ps.z, ps.confounds, ps.confound_names, ps.valid_split()))
      confs.push_back({p.target, p.direction_raw});
    const auto r = probe::alignment_analysis({}, confs, count, g.seed + seed_offset::null_directions);
    const Json out{{"count", count}, {"q50", io::number(r.null_q50)}, {"q95", io::number(r.null_q95)},
                   {"q99", io::number(r.null_q99)}, {"null_max", io::numbers(r.null_max)}};
    io::write_json(out_dir(g) / "null_directions.json", out);
    std::cout << "null q50 " << r.null_q50 << " q95 " << r.null_q95 << '\n';
  });
}

void add_align(CLI::App& app, Globals& g) {
  static PanelArgs panel;
  auto* cmd = app.add_subcommand("align", "cosines between property and confound directions");
  add_panel(cmd, panel);
  cmd->callback([&g] {
    const auto ps = load(panel, g);
    if (ps.confounds.cols() == 0) throw Error(ErrorKind::InvalidArgument, "align needs --confounds");
    const auto split = ps.valid_split();
    std::vector<probe::NamedDirection> props, confs;
    for (std::size_t k = 0; k < ps.properties.cols(); ++k) {
      try {
        const auto p = probe::fit_probe(ps.z, ps.properties.column(k), split, ps.property_names[k]);
        props.push_back({p.target, p.direction_raw});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroVarianceTarget) throw;
        std::cerr << "skipping constant property " << ps.property_names[k] << '\n';
      }
    }
    for (const auto& p : probe::confound_directions(ps.z, ps.confounds, ps.confound_names, split))
      confs.push_back({p.target, p.direction_raw});
    const auto r = probe::alignment_analysis(props, confs, 1000, g.seed + seed_offset::null_directions);
    io::Table t;
    t.header.push_back("property");
    t.header.insert(t.header.end(), r.confounds.begin(), r.confounds.end());
    for (std::size_t k = 0; k < r.properties.size(); ++k) {
      std::vector<std::string> row{r.properties[k]};
      for (std::size_t m = 0; m < r.confounds.size(); ++m) row.push_back(io::format_double(r.cosine(k, m)));
      t.rows.push_back(std::move(row));
    }
    const auto dir = out_dir(g);
    io::write_csv(dir / "alignment_cosines.csv", t);
    Json obs = Json::object();
    for (std::size_t k = 0; k < r.properties.size(); ++k) obs[r.properties[k]] = io::number(r.observed_max[k]);
    const Json out{{"observed_max", obs},
                   {"null", {{"count", 1000}, {"q50", io::number(r.null_q50)}, {"q95", io::number(r.null_q95)},
                             {"q99", io::number(r.null_q99)}}}};
    io::write_json(dir / "alignment.json", out);
    print(out);
  });
}

void add_mlp(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("mlp", "nonlinear probes");
  cmd->require_subcommand(1);
  static PanelArgs panel;
  static std::string target, model;
  static mlp::TrainOptions opts{.batch_size = 256};
  static std::size_t row = 0, steps = 10;
  static double step = 0.1;
  static int sign = 1;
  auto train_opts = [](CLI::App* s) {
    s->add_option("--hidden", opts.hidden, "hidden width")->capture_default_str();
    s->add_option("--batch-size", opts.batch_size, "minibatch size")->capture_default_str();
    s->add_option("--max-epochs", opts.max_epochs, "epoch cap")->capture_default_str();
    s->add_option("--lr", opts.learning_rate, "AdamW learning rate")->capture_default_str();
  };

  auto* fit = cmd->add_subcommand("fit", "train and write mlp_<target>.bin");
  add_panel(fit, panel);
  fit->add_option("--target", target, "property column")->required();
  train_opts(fit);
  fit->callback([&g] {
    const auto ps = load(panel, g);
    opts.seed = g.seed;
    opts.min_epochs = std::min(opts.min_epochs, opts.max_epochs);
    const auto m = mlp::train_mlp(ps.z, ps.properties.column(ps.property_index(target)), ps.valid_split(), target, opts);
    const auto dir = out_dir(g);
    mlp::save(m, dir / ("mlp_" + target + ".bin"));
    Json log = Json::array();
    for (const auto& e : m.log)
      log.push_back({{"epoch", e.epoch}, {"train_loss", io::number(e.train_loss)}, {"val_r2", io::number(e.val_r2)}});
    const Json out{{"target", target}, {"r2", scores(m.r2)}, {"best_epoch", m.best_epoch}, {"epochs", log}};
    io::write_json(dir / ("mlp_" + target + ".json"), out);
    print(Json{{"target", target}, {"r2", scores(m.r2)}, {"best_epoch", m.best_epoch}});
  });

  auto* steer = cmd->add_subcommand("steer", "normalized gradient walk from one latent row");
  steer->add_option("--model", model, "mlp file")->required();
  steer->add_option("--latents", panel.latents, "latent file")->required();
  steer->add_option("--row", row, "start row")->capture_default_str();
  steer->add_option("--step", step, "step length in standardized units")->capture_default_str();
  steer->add_option("--steps", steps, "number of steps")->capture_default_str();
  steer->add_option("--sign", sign, "+1 ascend, -1 descend")->capture_default_str();
  steer->callback([&g] {
    const auto m = mlp::load(model);
    const auto z = io::read_latents(panel.latents);
    if (row >= z.rows()) throw Error(ErrorKind::InvalidArgument, "row out of range");
    const auto path = mlp::local_steer(m, m.x_scaler.transform_point(z.row(row)), step, steps, sign);
    io::Table t;
    t.header = {"step", "predicted"};
    for (const auto& h : io::latent_header(z.cols())) t.header.push_back(h);
    for (std::size_t k = 0; k < path.raw.size(); ++k) {
      std::vector<std::string> r{std::to_string(k), io::format_double(path.predicted[k])};
      for (double v : path.raw[k]) r.push_back(io::format_double(v));
      t.rows.push_back(std::move(r));
    }
    io::write_csv(out_dir(g) / ("steer_" + m.target + ".csv"), t);
    if (path.vanishing_gradient) std::cerr << "warning: gradient vanished, walk stopped early\n";
    std::cout << "predicted " << path.predicted.front() << " -> " << path.predicted.back() << '\n';
  });

  auto* delta = cmd->add_subcommand("delta", "linear vs MLP test R2 and the regime label");
  add_panel(delta, panel);
  delta->add_option("--target", target, "property column")->required();
  train_opts(delta);
  delta->callback([&g] {
    const auto ps = load(panel, g);
    const auto split = ps.valid_split();
    const auto y = ps.properties.column(ps.property_index(target));
    opts.seed = g.seed;
    opts.min_epochs = std::min(opts.min_epochs, opts.max_epochs);
    const auto lin = probe::fit_probe(ps.z, y, split, target);
    const auto m = mlp::train_mlp(ps.z, y, split, target, opts);
    const auto d = mlp::delta_r2(lin, m);
    const Json out{{"target", target}, {"linear_r2", io::number(d.linear_r2)}, {"mlp_r2", io::number(d.mlp_r2)},
                   {"delta", io::number(d.delta)}, {"regime", d.regime}};
    io::write_json(out_dir(g) / ("delta_" + target + ".json"), out);
    print(out);
  });
}

void add_traverse(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("traverse", "walk a probe direction through a decoder");
  cmd->require_subcommand(1);
  static PanelArgs panel;
  static std::string probe_file, world_file, property;
  static std::size_t row = 0, steps = 100, seeds = 50;
  static double lo = -3.0, hi = 3.0, rho = 1.0;
  static bool reverse = false;
  auto common = [](CLI::App* s) {
    s->add_option("--probe", probe_file, "probe JSON giving the direction")->required();
    s->add_option("--world", world_file, "world.json describing the decoder")->required();
    s->add_option("--property", property, "descriptor to evaluate (default: probe target)");
    s->add_option("--lo", lo, "first alpha")->capture_default_str();
    s->add_option("--hi", hi, "last alpha")->capture_default_str();
    s->add_option("--steps", steps, "number of alphas")->capture_default_str();
    s->add_flag("--reverse", reverse, "walk against the direction");
  };
  auto direction = [] {
    const auto p = pipeline::probe_from_json(io::read_json(probe_file));
    Vector d = p.direction_raw;
    if (reverse)
      for (double& v : d) v = -v;
    if (property.empty()) property = p.target;
    return d;
  };

  auto* dense = cmd->add_subcommand("dense", "one origin, evenly spaced alphas");
  common(dense);
  dense->add_option("--latents", panel.latents, "latent file")->required();
  dense->add_option("--row", row, "origin row")->capture_default_str();
  dense->callback([&g, direction] {
    const auto dir = direction();
    const auto z = io::read_latents(panel.latents);
    if (row >= z.rows()) throw Error(ErrorKind::InvalidArgument, "row out of range");
    const synth::World world(world_from_file(world_file));
    const auto r = nav::traverse_dense(dir, z.row(row), lo, hi, steps, pipeline::world_decoder(world),
                                       descriptor_evaluator(property));
    const auto out = out_dir(g);
    write_traversal_csv(out / ("traverse_dense_" + property + ".csv"), r);
    const auto s = traversal_summary(r);
    io::write_json(out / ("traverse_dense_" + property + ".json"), s);
    print(s);
  });

  auto* multi = cmd->add_subcommand("multiseed", "median curve over test-row origins");
  common(multi);
  add_panel(multi, panel, false);
  multi->add_option("--seeds", seeds, "number of origins")->capture_default_str();
  multi->callback([&g, direction] {
    const auto dir = direction();
    const auto ps = load(panel, g);
    const auto rows = nav::pick_seed_rows(ps.valid_split(), seeds, g.seed + seed_offset::traversal);
    const synth::World world(world_from_file(world_file));
    const auto alphas = stats::linspace(lo, hi, steps);
    const auto r = nav::traverse_multiseed(dir, ps.z.select_rows(rows), alphas, pipeline::world_decoder(world),
                                           descriptor_evaluator(property));
    const auto out = out_dir(g);
    write_traversal_csv(out / ("traverse_multiseed_" + property + ".csv"), r);
    const auto s = traversal_summary(r);
    io::write_json(out / ("traverse_multiseed_" + property + ".json"), s);
    print(s);
  });

  auto* trust = cmd->add_subcommand("trust", "best linear step inside a ball");
  trust->add_option("--probe", probe_file, "probe JSON")->required();
  trust->add_option("--latents", panel.latents, "latent file")->required();
  trust->add_option("--row", row, "origin row")->capture_default_str();
  trust->add_option("--rho", rho, "ball radius in raw latent units")->capture_default_str();
  trust->add_flag("--reverse", reverse, "minimize instead");
  trust->callback([&g] {
    const auto p = pipeline::probe_from_json(io::read_json(probe_file));
    const auto z = io::read_latents(panel.latents);
    if (row >= z.rows()) throw Error(ErrorKind::InvalidArgument, "row out of range");
    Vector w = p.model.raw_coefficients();
    if (reverse)
      for (double& v : w) v = -v;
    const auto step = nav::trust_region_step(z.row(row), w, rho);
    const Json out{{"target", p.target}, {"rho", rho}, {"origin", io::numbers(z.row(row))}, {"step", io::numbers(step)},
                   {"predicted_before", io::number(p.model.predict(z.row(row)))},
                   {"predicted_after", io::number(p.model.predict(step))}};
    io::write_json(out_dir(g) / ("trust_" + p.target + ".json"), out);
    print(out);
  });
}

void add_interp(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("interp", "straight-line interpolation between latent pairs");
  cmd->require_subcommand(1);
  static std::string latents, world_file;
  static std::size_t pairs = 50, steps = 11;
  auto* run = cmd->add_subcommand("run", "decode k points per pair and score validity and similarity");
  run->add_option("--latents", latents, "latent file")->required();
  run->add_option("--world", world_file, "world.json describing the decoder")->required();
  run->add_option("--pairs", pairs, "number of pairs")->capture_default_str();
  run->add_option("--steps", steps, "points per pair including endpoints")->capture_default_str();
  run->callback([&g] {
    const auto z = io::read_latents(latents);
    const auto split = stats::make_split(z.rows(), g.seed + seed_offset::split);
    if (split.test.size() < 2) throw Error(ErrorKind::TooFewRows, "need at least two test rows");
    Rng rng = make_rng(g.seed + seed_offset::interpolation);
    std::uniform_int_distribution<std::size_t> pick(0, split.test.size() - 1);
    std::vector<std::pair<Vector, Vector>> ends;
    while (ends.size() < pairs) {
      const auto a = split.test[pick(rng)], b = split.test[pick(rng)];
      if (a == b) continue;
      ends.emplace_back(Vector(z.row(a).begin(), z.row(a).end()), Vector(z.row(b).begin(), z.row(b).end()));
    }
    const synth::World world(world_from_file(world_file));
    const auto r = nav::interp_metrics(ends, steps, pipeline::world_decoder(world));
    io::Table t{{"t", "median_similarity"}, {}};
    for (std::size_t i = 0; i < r.midpoints.size(); ++i)
      t.rows.push_back({io::format_double(r.midpoints[i]), io::format_double(r.median_similarity[i])});
    const auto dir = out_dir(g);
    io::write_csv(dir / "interp_similarity.csv", t);
    const Json out{{"pairs", ends.size()}, {"steps", r.steps}, {"valid_fraction", io::numbers(r.valid_fraction)},
                   {"median_similarity", io::numbers(r.median_similarity)}};
    io::write_json(dir / "interp.json", out);
    print(out);
  });
}

void add_genmetrics(CLI::App& app, Globals& g) {
  static std::string input, reference;
  auto* cmd = app.add_subcommand("genmetrics", "validity, uniqueness and novelty of generated strings");
  cmd->add_option("--input", input, "generated SELFIES, one per line")->required();
  cmd->add_option("--reference", reference, "training SELFIES, one per line")->required();
  cmd->callback([&g] {
    auto decode_all = [](const std::vector<std::string>& lines) {
      std::vector<selfies::MolGraph> out;
      for (const auto& l : lines) {
        try {
          out.push_back(selfies::decode(selfies::tokenize(l)));
        } catch (const Error&) {
          out.emplace_back();  // unparsable strings count as invalid
        }
      }
      return out;
    };
    std::unordered_set<std::uint64_t> train;
    for (const auto& m : decode_all(read_lines(reference)))
      if (selfies::is_valid_molecule(m)) train.insert(selfies::canonical_hash(m));
    const auto r = nav::generation_metrics(decode_all(read_lines(input)), train);
    const Json out{{"n", r.n}, {"validity", io::number(r.validity)}, {"uniqueness", io::number(r.uniqueness)},
                   {"novelty", io::number(r.novelty)}};
    io::write_json(out_dir(g) / "genmetrics.json", out);
    print(out);
  });
}

void add_slot(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("slot", "slot-attention posterior pooling");
  cmd->require_subcommand(1);
  static std::string states, params;
  static double temperature = 1.0, confidence_weight = 1.0;
  auto* fwd = cmd->add_subcommand("forward", "pool token states into one Gaussian posterior");
  fwd->add_option("--states", states, "CSV of token states; an optional `mask` column keeps rows with 1")->required();
  fwd->add_option("--params", params, "parameter file (default: random parameters from --seed)");
  fwd->add_option("--temperature", temperature, "pooling temperature for random parameters")->capture_default_str();
  fwd->add_option("--confidence-weight", confidence_weight, "confidence weight for random parameters")
      ->capture_default_str();
  fwd->callback([&g] {
    const auto t = io::read_csv(states);
    const auto mask_col = t.column("mask");
    std::vector<bool> mask;
    Matrix h(t.rows.size(), t.header.size() - (mask_col == std::string::npos ? 0 : 1));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      std::size_t j = 0;
      for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == mask_col) {
          mask.push_back(io::parse_double(t.rows[i][c]) != 0.0);
          continue;
        }
        h(i, j++) = io::parse_double(t.rows[i][c]);
      }
    }
    slot::SlotParams p;
    if (params.empty()) {
      slot::Shape shape;
      shape.hidden = h.cols();
      p = slot::random_params(shape, g.seed, temperature, confidence_weight);
    } else {
      p = slot::load_params(params);
    }
    const auto post = slot::encode(h, mask, p);
    const Json out{{"mu", io::numbers(post.mu)}, {"var", io::numbers(post.var)},
                   {"confidence", io::numbers(post.confidence)}, {"weights", io::numbers(post.weights)},
                   {"kl", io::number(slot::kl_to_standard_normal(post.mu, post.var))}};
    io::write_json(out_dir(g) / "posterior.json", out);
    print(out);
  });
}

void add_report(CLI::App& app, Globals& g) {
  auto* cmd = app.add_subcommand("report", "run report utilities");
  cmd->require_subcommand(1);
  static std::vector<std::string> inputs;
  auto* merge = cmd->add_subcommand("merge", "combine reports whose targets do not disagree");
  merge->add_option("inputs", inputs, "report JSON files")->required()->expected(1, -1);
  merge->callback([&g] {
    Json merged;
    Json targets = Json::array();
    for (const auto& path : inputs) {
      const auto r = io::read_json(path);
      if (merged.is_null()) {
        merged = r;
        merged.erase("targets");
      } else if (r.at("schema_version") != merged.at("schema_version")) {
        throw Error(ErrorKind::MergeConflict, path + " has a different schema version");
      }
      for (const auto& t : r.at("targets")) {
        auto it = std::find_if(targets.begin(), targets.end(), [&](const Json& e) { return e["name"] == t["name"]; });
        if (it == targets.end()) targets.push_back(t);
        else if (*it != t)
          throw Error(ErrorKind::MergeConflict, "target " + t["name"].get<std::string>() + " differs in " + path);
      }
    }
    merged["targets"] = targets;
    merged["merged_from"] = inputs;
    io::write_json(out_dir(g) / "report.json", merged);
    std::cout << "merged " << targets.size() << " targets\n";
  });
}

void add_run(CLI::App& app, Globals& g) {
  static PanelArgs panel;
  static std::size_t synth_rows = 0;
  static std::string world_file;
  static std::string targets, mlp_targets, traverse_targets;
  auto* cmd = app.add_subcommand("run", "full staged analysis into --out-dir");
  cmd->add_option("--latents", panel.latents, "latent file");
  cmd->add_option("--properties", panel.properties, "property CSV");
  cmd->add_option("--confounds", panel.confounds, "confound CSV");
  cmd->add_option("--split", panel.split, "split CSV");
  cmd->add_option("--synth", synth_rows, "sample a world panel of this many rows instead of reading files");
  cmd->add_option("--world", world_file, "world.json; enables traversal through its decoder");
  cmd->add_option("--targets", targets, "comma-separated property columns");
  cmd->add_option("--mlp-targets", mlp_targets, "comma-separated targets for MLP probes");
  cmd->add_option("--traverse", traverse_targets, "comma-separated descriptor targets to traverse");
  cmd->callback([&g] {
    pipeline::PipelineConfig cfg;
    if (!g.config.empty()) cfg = pipeline::load_config(g.config);
    if (g.seed_opt->count() > 0 || g.config.empty()) cfg.seed = g.seed;
    if (g.out_opt->count() > 0 || g.config.empty()) cfg.out_dir = g.out_dir;
    if (!targets.empty()) pipeline::set_config(cfg, "targets", targets);
    if (!mlp_targets.empty()) pipeline::set_config(cfg, "mlp.targets", mlp_targets);
    if (!traverse_targets.empty()) pipeline::set_config(cfg, "traversal.targets", traverse_targets);
    for (const auto& kv : g.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--set expects key=value");
      pipeline::set_config(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }

    std::optional<synth::World> world;
    PanelSet ps;
    if (synth_rows > 0) {
      synth::WorldSpec spec = world_file.empty() ? synth::WorldSpec{} : world_from_file(world_file);
      if (world_file.empty()) spec.seed = cfg.seed;
      world.emplace(spec);
      ps = world->sample(synth_rows);
      fs::create_directories(cfg.out_dir);
      io::write_json(cfg.out_dir / "world.json", world_json(spec));
    } else {
      if (panel.latents.empty() || panel.properties.empty())
        throw Error(ErrorKind::InvalidArgument, "run needs --latents and --properties, or --synth");
      Globals lg = g;
      lg.seed = cfg.seed;
      ps = load(panel, lg);
      if (!world_file.empty()) world.emplace(world_from_file(world_file));
    }
    const auto report = pipeline::run_pipeline(ps, cfg, world ? pipeline::world_decoder(*world) : nav::Decoder{});
    for (const auto& t : report["targets"]) {
      std::cout << t["name"].get<std::string>() << ": raw test R2 " << t["raw"]["r2"]["test"].dump();
      if (!t["residual"].is_null()) std::cout << ", residual " << t["residual"]["r2"]["test"].dump();
      if (!t["regime"].is_null()) std::cout << ", " << t["regime"].get<std::string>();
      std::cout << '\n';
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latprobe: linear and nonlinear probes over latent spaces"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "root seed for every random stage")->capture_default_str();
  app.add_option("--threads", g.threads, "OpenMP threads (0: runtime default)")->each([](const std::string& v) {
    kernels::set_threads(std::stoi(v));
  });
  g.out_opt = app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--config", g.config, "config file of key = value lines");
  app.add_option("--set", g.sets, "override one config key, key=value");
  app.fallthrough();

  add_selfies(app, g);
  add_descriptors(app, g);
  add_synth(app, g);
  add_split(app, g);
  add_probe(app, g);
  add_residualize(app, g);
  add_controls(app, g);
  add_align(app, g);
  add_mlp(app, g);
  add_traverse(app, g);
  add_interp(app, g);
  add_genmetrics(app, g);
  add_slot(app, g);
  add_report(app, g);
  add_run(app, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
