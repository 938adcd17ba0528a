#include "latprobe/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "latprobe/descriptors.hpp"
#include "latprobe/errors.hpp"
#include "latprobe/io.hpp"
#include "latprobe/rng.hpp"
#include "latprobe/selfies.hpp"
#include "latprobe/version.hpp"

namespace latprobe::pipeline {

namespace {

using Json = nlohmann::ordered_json;
using io::number;
using io::numbers;
namespace fs = std::filesystem;

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorKind::InvalidArgument, key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  const double out = io::parse_double(v);
  if (!std::isfinite(out)) throw Error(ErrorKind::InvalidArgument, key + " expects a finite number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw Error(ErrorKind::InvalidArgument, key + " expects a boolean, got '" + v + "'");
}

Json scores_json(const probe::SplitScores& s) {
  return Json{{"train", number(s.train)}, {"val", number(s.val)}, {"test", number(s.test)}};
}

void write_directions(const fs::path& path, const std::vector<probe::NamedDirection>& dirs, std::size_t d) {
  io::Table t;
  t.header.push_back("target");
  for (const auto& h : io::latent_header(d)) t.header.push_back(h);
  for (const auto& nd : dirs) {
    std::vector<std::string> row{nd.name};
    for (double v : nd.direction) row.push_back(io::format_double(v));
    t.rows.push_back(std::move(row));
  }
  io::write_csv(path, t);
}

void write_named_matrix(const fs::path& path, const std::vector<std::string>& row_names,
                        const std::vector<std::string>& col_names, const Matrix& m) {
  io::Table t;
  t.header.push_back("property");
  t.header.insert(t.header.end(), col_names.begin(), col_names.end());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row{row_names[i]};
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(io::format_double(m(i, j)));
    t.rows.push_back(std::move(row));
  }
  io::write_csv(path, t);
}

Json mlp_json(const mlp::MlpModel& m) {
  Json log = Json::array();
  for (const auto& e : m.log)
    log.push_back({{"epoch", e.epoch}, {"train_loss", number(e.train_loss)}, {"val_r2", number(e.val_r2)}});
  return Json{{"r2", scores_json(m.r2)}, {"best_epoch", m.best_epoch}, {"epochs", log}};
}

Json delta_json(const mlp::DeltaR2& d) {
  return Json{{"linear_r2", number(d.linear_r2)},
              {"mlp_r2", number(d.mlp_r2)},
              {"delta", number(d.delta)},
              {"regime", d.regime}};
}

class StageRunner {
 public:
  explicit StageRunner(fs::path dir) : dir_(std::move(dir)) {
    manifest_["schema_version"] = kSchemaVersion;
    manifest_["completed"] = Json::array();
    io::write_json(dir_ / "stages.json", manifest_);
  }

  template <class F>
  void run(const std::string& name, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      throw Error(ErrorKind::StageFailure, "stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::StageFailure, "stage " + name + ": " + e.what());
    }
    manifest_["completed"].push_back(name);
    io::write_json(dir_ / "stages.json", manifest_);
  }

  const Json& manifest() const { return manifest_; }

 private:
  fs::path dir_;
  Json manifest_;
};

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(i, cols[j]);
  return out;
}

std::size_t descriptor_column(const std::string& name) {
  const auto& names = descriptors::kColumnNames;
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? names.size() : static_cast<std::size_t>(it - names.begin());
}

}  // namespace

void set_config(PipelineConfig& cfg, const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  if (key == "seed") cfg.seed = to_count(key, value);
  else if (key == "targets") cfg.targets = split_list(value);
  else if (key == "out_dir") cfg.out_dir = trim(value);
  else if (key == "probe.method") {
    const auto v = trim(value);
    if (v == "ols") cfg.probe.method = probe::Method::Ols;
    else if (v == "ridge") cfg.probe.method = probe::Method::Ridge;
    else throw Error(ErrorKind::InvalidArgument, "probe.method must be ols or ridge");
  } else if (key == "probe.lambda") cfg.probe.lambda = to_real(key, value);
  else if (key == "residual.lambda") cfg.residual_lambda = to_real(key, value);
  else if (key == "confound.lambda") cfg.confound_lambda = to_real(key, value);
  else if (key == "controls.bootstrap") cfg.controls.bootstrap = to_bool(key, value);
  else if (key == "controls.resamples") cfg.controls.resamples = to_count(key, value);
  else if (key == "controls.permutation") cfg.controls.permutation = to_bool(key, value);
  else if (key == "controls.permutations") cfg.controls.permutations = to_count(key, value);
  else if (key == "controls.rotation") cfg.controls.rotation = to_bool(key, value);
  else if (key == "controls.null") cfg.controls.null_directions = to_bool(key, value);
  else if (key == "controls.null_count") cfg.controls.null_count = to_count(key, value);
  else if (key == "mlp.targets") cfg.mlp_targets = split_list(value);
  else if (key == "mlp.residual") cfg.mlp_residual = to_bool(key, value);
  else if (key == "mlp.hidden") cfg.mlp.hidden = to_count(key, value);
  else if (key == "mlp.lr") cfg.mlp.learning_rate = to_real(key, value);
  else if (key == "mlp.weight_decay") cfg.mlp.weight_decay = to_real(key, value);
  else if (key == "mlp.batch_size") cfg.mlp.batch_size = to_count(key, value);
  else if (key == "mlp.max_epochs") cfg.mlp.max_epochs = to_count(key, value);
  else if (key == "mlp.min_epochs") cfg.mlp.min_epochs = to_count(key, value);
  else if (key == "mlp.patience") cfg.mlp.patience = to_count(key, value);
  else if (key == "traversal.targets") cfg.traversal.targets = split_list(value);
  else if (key == "traversal.seeds") cfg.traversal.seeds = to_count(key, value);
  else if (key == "traversal.steps") cfg.traversal.steps = to_count(key, value);
  else if (key == "traversal.lo") cfg.traversal.lo = to_real(key, value);
  else if (key == "traversal.hi") cfg.traversal.hi = to_real(key, value);
  else throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read config " + path.string());
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    set_config(base, section.empty() ? key : section + "." + key, line.substr(eq + 1));
  }
  return base;
}

Json config_json(const PipelineConfig& cfg) {
  return Json{
      {"seed", cfg.seed},
      {"targets", cfg.targets},
      {"probe", {{"method", probe::to_string(cfg.probe.method)}, {"lambda", cfg.probe.lambda}}},
      {"residual_lambda", cfg.residual_lambda},
      {"confound_lambda", cfg.confound_lambda},
      {"controls",
       {{"bootstrap", cfg.controls.bootstrap},
        {"resamples", cfg.controls.resamples},
        {"permutation", cfg.controls.permutation},
        {"permutations", cfg.controls.permutations},
        {"rotation", cfg.controls.rotation},
        {"null", cfg.controls.null_directions},
        {"null_count", cfg.controls.null_count}}},
      {"mlp",
       {{"targets", cfg.mlp_targets},
        {"residual", cfg.mlp_residual},
        {"hidden", cfg.mlp.hidden},
        {"lr", cfg.mlp.learning_rate},
        {"weight_decay", cfg.mlp.weight_decay},
        {"batch_size", cfg.mlp.batch_size},
        {"max_epochs", cfg.mlp.max_epochs},
        {"min_epochs", cfg.mlp.min_epochs},
        {"patience", cfg.mlp.patience}}},
      {"traversal",
       {{"targets", cfg.traversal.targets},
        {"seeds", cfg.traversal.seeds},
        {"steps", cfg.traversal.steps},
        {"lo", cfg.traversal.lo},
        {"hi", cfg.traversal.hi}}},
  };
}

Json probe_to_json(const probe::ProbeModel& p) {
  const auto& m = p.model;
  return Json{{"format", "latprobe-probe"},
              {"target", p.target},
              {"method", probe::to_string(p.method)},
              {"lambda", m.lambda},
              {"jitter", m.jitter},
              {"x_mean", m.x_scaler.mean},
              {"x_scale", m.x_scaler.scale},
              {"y_mean", m.y_scaler.mean},
              {"y_scale", m.y_scaler.scale},
              {"w", m.w},
              {"b", m.b},
              {"direction", p.direction_raw},
              {"r2", scores_json(p.r2)},
              {"split_fingerprint", p.split_fingerprint},
              {"n_train", p.n_train}};
}

probe::ProbeModel probe_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "latprobe-probe") throw Error(ErrorKind::IoError, "not a probe document");
    probe::ProbeModel p;
    p.target = j.at("target").get<std::string>();
    p.method = j.at("method") == "ridge" ? probe::Method::Ridge : probe::Method::Ols;
    auto& m = p.model;
    m.lambda = j.at("lambda").get<double>();
    m.jitter = j.at("jitter").get<double>();
    m.x_scaler.mean = j.at("x_mean").get<Vector>();
    m.x_scaler.scale = j.at("x_scale").get<Vector>();
    m.y_scaler.mean = j.at("y_mean").get<double>();
    m.y_scaler.scale = j.at("y_scale").get<double>();
    m.w = j.at("w").get<Vector>();
    m.b = j.at("b").get<double>();
    p.direction_raw = j.at("direction").get<Vector>();
    const auto& r = j.at("r2");
    auto num = [](const Json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
    p.r2 = {num(r.at("train")), num(r.at("val")), num(r.at("test"))};
    p.split_fingerprint = j.at("split_fingerprint").get<std::uint64_t>();
    p.n_train = j.at("n_train").get<std::size_t>();
    if (m.w.size() != m.x_scaler.mean.size() || m.w.size() != m.x_scaler.scale.size() ||
        m.w.size() != p.direction_raw.size())
      throw Error(ErrorKind::DimensionMismatch, "probe document has inconsistent lengths");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("malformed probe document: ") + e.what());
  }
}

nav::Decoder world_decoder(const synth::World& world) {
  return [world](std::span<const double> z) { return selfies::decode(world.decode(z)); };
}

Json run_pipeline(const PanelSet& ps, const PipelineConfig& cfg, const nav::Decoder& decoder) {
  ps.validate();
  if (ps.properties.cols() == 0) throw Error(ErrorKind::NoTargets, "property panel has no columns");
  const std::vector<std::string> targets = cfg.targets.empty() ? ps.property_names : cfg.targets;
  if (targets.empty()) throw Error(ErrorKind::NoTargets, "no targets selected");
  std::vector<std::size_t> target_cols;
  std::set<std::string> seen;
  for (const auto& t : targets) {
    if (!seen.insert(t).second) throw Error(ErrorKind::InvalidArgument, "target " + t + " listed twice");
    target_cols.push_back(ps.property_index(t));
  }
  for (const auto& t : cfg.mlp_targets)
    if (!seen.count(t)) throw Error(ErrorKind::InvalidArgument, "mlp target " + t + " is not a selected target");
  const auto& mo = cfg.mlp;
  if (!cfg.mlp_targets.empty() &&
      (mo.hidden == 0 || mo.batch_size == 0 || mo.max_epochs == 0 || mo.min_epochs > mo.max_epochs))
    throw Error(ErrorKind::InvalidArgument, "mlp options need positive sizes and min_epochs <= max_epochs");
  for (const auto& t : cfg.traversal.targets) {
    if (!seen.count(t)) throw Error(ErrorKind::InvalidArgument, "traversal target " + t + " is not a selected target");
    if (descriptor_column(t) == descriptors::kColumnNames.size())
      throw Error(ErrorKind::InvalidArgument, "traversal target " + t + " is not a descriptor column");
  }

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const auto split = ps.valid_split();
  const std::size_t d = ps.z.cols();
  const bool have_confounds = ps.confounds.cols() > 0;
  StageRunner stages(dir);

  // per-target state, keyed by name
  std::vector<std::string> fitted;
  Json skipped = Json::array();
  std::map<std::string, probe::ProbeModel> raw, residual;
  std::map<std::string, Vector> raw_y;
  std::map<std::string, probe::ResidualTarget> resid_targets;
  std::vector<probe::ProbeModel> confound_probes;
  std::map<std::string, Json> controls;
  std::optional<probe::AlignmentResult> alignment;
  std::map<std::string, mlp::MlpModel> mlp_raw, mlp_resid;
  std::map<std::string, mlp::DeltaR2> delta_raw, delta_resid;
  std::map<std::string, nav::TraversalResult> traversals;

  stages.run("raw_probes", [&] {
    Json out = Json::array();
    std::vector<probe::NamedDirection> dirs;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      Vector y = ps.properties.column(target_cols[k]);
      try {
        auto p = probe::fit_probe(ps.z, y, split, targets[k], cfg.probe);
        out.push_back({{"target", targets[k]}, {"r2", scores_json(p.r2)}, {"n_train", p.n_train}});
        dirs.push_back({targets[k], p.direction_raw});
        raw.emplace(targets[k], std::move(p));
        raw_y.emplace(targets[k], std::move(y));
        fitted.push_back(targets[k]);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroVarianceTarget && e.kind() != ErrorKind::TooFewRows) throw;
        skipped.push_back({{"target", targets[k]}, {"reason", std::string(to_string(e.kind()))}});
      }
    }
    if (fitted.empty()) throw Error(ErrorKind::NoTargets, "no target could be fitted");
    io::write_json(dir / "raw_probes.json", Json{{"probes", out}, {"skipped", skipped}});
    write_directions(dir / "directions.csv", dirs, d);
  });

  if (have_confounds) {
    stages.run("confound_probes", [&] {
      confound_probes = probe::confound_directions(ps.z, ps.confounds, ps.confound_names, split, cfg.confound_lambda);
      Json out = Json::array();
      std::vector<probe::NamedDirection> dirs;
      for (const auto& p : confound_probes) {
        out.push_back({{"confound", p.target}, {"r2", scores_json(p.r2)}});
        dirs.push_back({p.target, p.direction_raw});
      }
      io::write_json(dir / "confound_probes.json", Json{{"probes", out}});
      write_directions(dir / "confound_directions.csv", dirs, d);
    });

    stages.run("residualization", [&] {
      std::vector<std::size_t> cols;
      for (const auto& t : fitted) cols.push_back(ps.property_index(t));
      const auto rts = probe::residualize(ps.confounds, select_columns(ps.properties, cols), fitted, split,
                                          cfg.residual_lambda);
      Json out = Json::array();
      io::Table table;
      for (const auto& rt : rts) {
        out.push_back({{"target", rt.base_target}, {"confound_r2", scores_json(rt.confound_r2)}});
        table.header.push_back("resid_" + rt.base_target);
        resid_targets.emplace(rt.base_target, rt);
      }
      for (std::size_t i = 0; i < ps.rows(); ++i) {
        std::vector<std::string> row;
        for (const auto& rt : rts) row.push_back(io::format_double(rt.values[i]));
        table.rows.push_back(std::move(row));
      }
      io::write_json(dir / "residualization.json", Json{{"lambda", cfg.residual_lambda}, {"targets", out}});
      io::write_csv(dir / "residuals.csv", table);
    });

    stages.run("residual_probes", [&] {
      Json out = Json::array();
      std::vector<probe::NamedDirection> dirs;
      for (const auto& t : fitted) {
        try {
          auto p = probe::fit_probe(ps.z, resid_targets.at(t).values, split, t, cfg.probe);
          out.push_back({{"target", t}, {"r2", scores_json(p.r2)}});
          dirs.push_back({t, p.direction_raw});
          residual.emplace(t, std::move(p));
        } catch (const Error& e) {
          // a target fully explained by the confounds leaves a constant residual
          if (e.kind() != ErrorKind::ZeroVarianceTarget) throw;
          out.push_back({{"target", t}, {"r2", nullptr}, {"reason", std::string(to_string(e.kind()))}});
        }
      }
      io::write_json(dir / "residual_probes.json", Json{{"probes", out}});
      write_directions(dir / "residual_directions.csv", dirs, d);
    });
  }

  stages.run("controls", [&] {
    Json out = Json::object();
    for (const auto& t : fitted) {
      const Vector& y = raw_y.at(t);
      Json c = Json::object();
      if (cfg.controls.bootstrap) {
        const auto b = probe::bootstrap_stability(ps.z, y, split, cfg.controls.resamples,
                                                  cfg.seed + seed_offset::bootstrap, cfg.probe);
        c["bootstrap"] = {{"resamples", cfg.controls.resamples},
                          {"median", number(b.median)},
                          {"q25", number(b.q25)},
                          {"q75", number(b.q75)},
                          {"redraws", b.redraws}};
      }
      if (cfg.controls.permutation && cfg.controls.permutations > 0) {
        const auto runs = probe::permutation_runs(ps.z, y, split, cfg.controls.permutations,
                                                  cfg.seed + seed_offset::permutation, cfg.probe);
        Vector test;
        for (const auto& r : runs) test.push_back(r.test_r2);
        double mean_abs = 0.0, max_abs = 0.0;
        for (double v : test) {
          mean_abs += std::abs(v) / static_cast<double>(test.size());
          max_abs = std::max(max_abs, std::abs(v));
        }
        c["permutation"] = {{"runs", runs.size()},
                            {"mean_abs_test_r2", number(mean_abs)},
                            {"max_abs_test_r2", number(max_abs)},
                            {"test_r2", numbers(test)}};
      }
      if (cfg.controls.rotation)
        c["rotation"] = {{"max_abs_prediction_diff",
                          number(probe::rotation_invariance(ps.z, y, split, cfg.seed + seed_offset::rotation, cfg.probe))}};
      controls.emplace(t, c);
      out[t] = c;
    }
    io::write_json(dir / "controls.json", out);
  });

  if (have_confounds) {
    stages.run("alignment", [&] {
      std::vector<probe::NamedDirection> props, confs;
      for (const auto& t : fitted) props.push_back({t, raw.at(t).direction_raw});
      for (const auto& p : confound_probes) confs.push_back({p.target, p.direction_raw});
      const std::size_t n_null = cfg.controls.null_directions ? cfg.controls.null_count : 0;
      alignment = probe::alignment_analysis(props, confs, n_null, cfg.seed + seed_offset::null_directions);
      write_named_matrix(dir / "alignment_cosines.csv", alignment->properties, alignment->confounds, alignment->cosine);

      std::vector<std::size_t> cols;
      for (const auto& t : fitted) cols.push_back(ps.property_index(t));
      const auto corr = probe::correlation_matrices(select_columns(ps.properties, cols), ps.confounds);
      write_named_matrix(dir / "correlation_pearson.csv", fitted, ps.confound_names, corr.pearson);
      write_named_matrix(dir / "correlation_spearman.csv", fitted, ps.confound_names, corr.spearman);

      io::write_json(dir / "alignment.json",
                     Json{{"observed_max", numbers(alignment->observed_max)},
                          {"null", {{"count", n_null},
                                    {"q50", number(alignment->null_q50)},
                                    {"q95", number(alignment->null_q95)},
                                    {"q99", number(alignment->null_q99)}}}});
    });
  }

  if (!cfg.mlp_targets.empty()) {
    stages.run("mlp_probes", [&] {
      mlp::TrainOptions opts = cfg.mlp;
      opts.seed = cfg.seed;
      Json out = Json::object();
      for (const auto& t : cfg.mlp_targets) {
        if (!raw.count(t)) continue;
        Json entry;
        auto m = mlp::train_mlp(ps.z, raw_y.at(t), split, t, opts);
        entry["raw"] = mlp_json(m);
        mlp_raw.emplace(t, std::move(m));
        if (cfg.mlp_residual && residual.count(t)) {
          auto r = mlp::train_mlp(ps.z, resid_targets.at(t).values, split, "resid_" + t, opts);
          entry["residual"] = mlp_json(r);
          mlp_resid.emplace(t, std::move(r));
        }
        out[t] = entry;
      }
      io::write_json(dir / "mlp.json", out);
    });

    stages.run("delta_r2", [&] {
      Json out = Json::object();
      for (const auto& [t, m] : mlp_raw) {
        Json entry;
        const auto dr = mlp::delta_r2(raw.at(t), m);
        entry["raw"] = delta_json(dr);
        delta_raw.emplace(t, dr);
        if (mlp_resid.count(t)) {
          const auto dq = mlp::delta_r2(residual.at(t), mlp_resid.at(t));
          entry["residual"] = delta_json(dq);
          delta_resid.emplace(t, dq);
        }
        out[t] = entry;
      }
      io::write_json(dir / "delta_r2.json", out);
    });
  }

  if (decoder && !cfg.traversal.targets.empty()) {
    stages.run("traversal", [&] {
      const auto rows = nav::pick_seed_rows(split, cfg.traversal.seeds, cfg.seed + seed_offset::traversal);
      const Matrix seeds = ps.z.select_rows(rows);
      const Vector alphas = stats::linspace(cfg.traversal.lo, cfg.traversal.hi, cfg.traversal.steps);
      Json out = Json::object();
      for (const auto& t : cfg.traversal.targets) {
        if (!raw.count(t)) continue;
        const std::size_t col = descriptor_column(t);
        const nav::Evaluator eval = [col](const selfies::MolGraph& g) {
          return descriptors::compute_descriptors(g).values()[col];
        };
        auto r = nav::traverse_multiseed(raw.at(t).direction_raw, seeds, alphas, decoder, eval);
        io::Table table{{"alpha", "median", "q25", "q75", "n_valid"}, {}};
        for (std::size_t a = 0; a < r.alphas.size(); ++a)
          table.rows.push_back({io::format_double(r.alphas[a]), io::format_double(r.median[a]),
                                io::format_double(r.q25[a]), io::format_double(r.q75[a]),
                                std::to_string(r.n_valid[a])});
        const std::string file = "traversal_" + t + ".csv";
        io::write_csv(dir / file, table);
        out[t] = {{"file", file},
                  {"seeds", seeds.rows()},
                  {"spearman", number(r.spearman)},
                  {"violations", r.violations},
                  {"slope", number(r.slope)}};
        traversals.emplace(t, std::move(r));
      }
      io::write_json(dir / "traversal.json", out);
    });
  }

  Json report;
  report["schema_version"] = kSchemaVersion;
  report["tool_version"] = std::string(kVersion);
  report["config"] = config_json(cfg);
  report["panel"] = {{"rows", ps.rows()},
                     {"valid_rows", ps.valid_rows().size()},
                     {"dim", d},
                     {"sources", ps.provenance.sources},
                     {"split",
                      {{"train", split.train.size()},
                       {"val", split.val.size()},
                       {"test", split.test.size()},
                       {"fingerprint", split.fingerprint()}}}};
  report["stages"] = stages.manifest()["completed"];

  Json conf = Json::array();
  for (const auto& p : confound_probes)
    conf.push_back({{"name", p.target}, {"r2", scores_json(p.r2)}, {"direction", numbers(p.direction_raw)}});
  report["confounds"] = conf;

  Json entries = Json::array();
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    const auto& t = fitted[k];
    const auto& p = raw.at(t);
    Json e;
    e["name"] = t;
    e["raw"] = {{"r2", scores_json(p.r2)}, {"n_train", p.n_train}, {"direction", numbers(p.direction_raw)}};
    e["confound_r2"] = resid_targets.count(t) ? scores_json(resid_targets.at(t).confound_r2) : Json(nullptr);
    if (residual.count(t)) {
      const auto& q = residual.at(t);
      e["residual"] = {{"r2", scores_json(q.r2)},
                       {"drop", number(p.r2.test - q.r2.test)},
                       {"direction", numbers(q.direction_raw)}};
    } else {
      e["residual"] = nullptr;
    }
    e["controls"] = controls.count(t) ? controls.at(t) : Json(nullptr);
    if (alignment) {
      Json cos = Json::object();
      for (std::size_t m = 0; m < alignment->confounds.size(); ++m) cos[alignment->confounds[m]] = number(alignment->cosine(k, m));
      e["alignment"] = {{"max_abs_cosine", number(alignment->observed_max[k])}, {"cosines", cos}};
    } else {
      e["alignment"] = nullptr;
    }
    if (mlp_raw.count(t)) {
      Json m{{"raw", mlp_json(mlp_raw.at(t))}};
      if (mlp_resid.count(t)) m["residual"] = mlp_json(mlp_resid.at(t));
      e["mlp"] = m;
      Json dj{{"raw", delta_json(delta_raw.at(t))}};
      if (delta_resid.count(t)) dj["residual"] = delta_json(delta_resid.at(t));
      e["delta_r2"] = dj;
      e["regime"] = delta_raw.at(t).regime;
    } else {
      e["mlp"] = nullptr;
      e["delta_r2"] = nullptr;
      e["regime"] = nullptr;
    }
    if (traversals.count(t)) {
      const auto& r = traversals.at(t);
      e["traversal"] = {{"file", "traversal_" + t + ".csv"},
                        {"spearman", number(r.spearman)},
                        {"violations", r.violations},
                        {"slope", number(r.slope)}};
    } else {
      e["traversal"] = nullptr;
    }
    entries.push_back(e);
  }
  report["targets"] = entries;
  report["skipped"] = skipped;
  if (alignment)
    report["alignment_null"] = {{"count", alignment->null_max.size()},
                                {"q50", number(alignment->null_q50)},
                                {"q95", number(alignment->null_q95)},
                                {"q99", number(alignment->null_q99)}};
  else
    report["alignment_null"] = nullptr;
  io::write_json(dir / "report.json", report);
  return report;
}

}  // namespace latprobe::pipeline
