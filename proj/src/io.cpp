#include "latprobe/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "latprobe/errors.hpp"
#include "latprobe/stats.hpp"

namespace latprobe::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  return in;
}

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".json"); }

bool row_finite(std::span<const double> r) {
  return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? std::string::npos : static_cast<std::size_t>(it - header.begin());
}

Table read_csv(const fs::path& path) {
  auto in = open_in(path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::HeaderMismatch, path.string() + " has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::HeaderMismatch,
                  path.string() + ":" + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const fs::path& path, const Table& t) {
  auto out = open_out(path);
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << quote(cells[i]);
    out << '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  if (a < b && s[a] == '+') ++a;
  double v = 0.0;
  const auto res = std::from_chars(s.data() + a, s.data() + b, v);
  if (a == b || res.ec != std::errc() || res.ptr != s.data() + b) return std::nan("");
  return v;
}

void write_matrix_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& m) {
  if (header.size() != m.cols()) throw Error(ErrorKind::HeaderMismatch, "header width differs from matrix columns");
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << quote(header[j]);
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

std::vector<std::string> latent_header(std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t j = 0; j < d; ++j) h.push_back("z" + std::to_string(j));
  return h;
}

Matrix read_latents_csv(const fs::path& path) {
  const auto t = read_csv(path);
  if (t.header != latent_header(t.header.size()))
    throw Error(ErrorKind::HeaderMismatch, path.string() + ": latent header must be z0..z{d-1}");
  Matrix z(t.rows.size(), t.header.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j) z(i, j) = parse_double(t.rows[i][j]);
  return z;
}

void write_latents_blob(const fs::path& path, const Matrix& z) {
  static_assert(std::endian::native == std::endian::little, "blobs are little-endian");
  auto out = open_out(path, true);
  for (double v : z.data()) {
    const auto f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  Json side;
  side["rows"] = z.rows();
  side["cols"] = z.cols();
  side["order"] = "row-major";
  side["dtype"] = "f32";
  write_json(sidecar(path), side);
}

Matrix read_latents_blob(const fs::path& path) {
  const Json side = read_json(sidecar(path));
  if (side.value("dtype", "") != "f32" || side.value("order", "") != "row-major")
    throw Error(ErrorKind::HeaderMismatch, sidecar(path).string() + ": expected dtype f32, order row-major");
  const auto rows = side.at("rows").get<std::size_t>(), cols = side.at("cols").get<std::size_t>();
  auto in = open_in(path, true);
  std::vector<float> buf(rows * cols);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in || in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::RowCountMismatch, path.string() + ": payload size differs from sidecar shape");
  Matrix z(rows, cols);
  std::copy(buf.begin(), buf.end(), z.data().begin());
  return z;
}

Matrix read_latents(const fs::path& path) {
  return path.extension() == ".csv" ? read_latents_csv(path) : read_latents_blob(path);
}

void write_matrix_f64(const fs::path& path, const Matrix& m) {
  auto out = open_out(path, true);
  Json h;
  h["rows"] = m.rows();
  h["cols"] = m.cols();
  h["dtype"] = "f64";
  out << h.dump() << '\n';
  out.write(reinterpret_cast<const char*>(m.data().data()), static_cast<std::streamsize>(m.data().size() * sizeof(double)));
}

Matrix read_matrix_f64(const fs::path& path) {
  auto in = open_in(path, true);
  std::string line;
  std::getline(in, line);
  Json h;
  try {
    h = Json::parse(line);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::HeaderMismatch, path.string() + ": bad matrix header: " + e.what());
  }
  if (h.value("dtype", "") != "f64") throw Error(ErrorKind::HeaderMismatch, path.string() + ": expected dtype f64");
  Matrix m(h.at("rows").get<std::size_t>(), h.at("cols").get<std::size_t>());
  in.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::RowCountMismatch, path.string() + ": truncated matrix payload");
  return m;
}

void write_split(const fs::path& path, const stats::SplitAssignment& split) {
  std::vector<std::pair<std::size_t, const char*>> rows;
  for (auto r : split.train) rows.emplace_back(r, "train");
  for (auto r : split.val) rows.emplace_back(r, "val");
  for (auto r : split.test) rows.emplace_back(r, "test");
  // list order is kept so a reloaded split fits identically
  Table t{{"row", "part"}, {}};
  for (auto [r, p] : rows) t.rows.push_back({std::to_string(r), p});
  write_csv(path, t);
}

stats::SplitAssignment read_split(const fs::path& path, std::size_t n) {
  const auto t = read_csv(path);
  if (t.header != std::vector<std::string>{"row", "part"})
    throw Error(ErrorKind::HeaderMismatch, path.string() + ": split header must be row,part");
  stats::SplitAssignment s;
  for (const auto& r : t.rows) {
    const double idx = parse_double(r[0]);
    if (!(idx >= 0) || idx != std::floor(idx) || idx >= static_cast<double>(n))
      throw Error(ErrorKind::DimensionMismatch, path.string() + ": split row out of range: " + r[0]);
    const auto i = static_cast<std::size_t>(idx);
    if (r[1] == "train") s.train.push_back(i);
    else if (r[1] == "val") s.val.push_back(i);
    else if (r[1] == "test") s.test.push_back(i);
    else throw Error(ErrorKind::HeaderMismatch, path.string() + ": unknown split part " + r[1]);
  }
  return s;
}

PanelSet load_panelset(const PanelPaths& paths, std::uint64_t seed, LoadReport* report) {
  PanelSet ps;
  ps.z = read_latents(paths.latents);
  const std::size_t n = ps.z.rows();
  ps.provenance.sources.push_back(paths.latents.string());
  LoadReport rep;

  auto numeric = [&](const fs::path& path, std::vector<std::string>& names, Matrix& values, bool lift) {
    const auto t = read_csv(path);
    if (t.rows.size() != n)
      throw Error(ErrorKind::RowCountMismatch,
                  path.string() + " has " + std::to_string(t.rows.size()) + " rows, latents have " + std::to_string(n));
    std::vector<std::size_t> cols;
    std::size_t valid_col = std::string::npos, selfies_col = std::string::npos;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (lift && t.header[j] == "is_valid") valid_col = j;
      else if (lift && t.header[j] == "selfies") selfies_col = j;
      else cols.push_back(j);
    }
    for (auto j : cols) names.push_back(t.header[j]);
    values = Matrix(n, cols.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < cols.size(); ++k) {
        values(i, k) = parse_double(t.rows[i][cols[k]]);
        if (!std::isfinite(values(i, k))) ++rep.nonfinite_cells;
      }
      if (valid_col != std::string::npos) {
        const double v = parse_double(t.rows[i][valid_col]);
        if (v != 0.0 && v != 1.0)
          throw Error(ErrorKind::HeaderMismatch, path.string() + ": is_valid must be 0 or 1");
        ps.valid[i] = ps.valid[i] && v == 1.0;
      }
      if (selfies_col != std::string::npos) ps.selfies.push_back(t.rows[i][selfies_col]);
    }
    ps.provenance.sources.push_back(path.string());
  };

  ps.valid.assign(n, true);
  numeric(paths.properties, ps.property_names, ps.properties, true);
  if (paths.confounds) numeric(*paths.confounds, ps.confound_names, ps.confounds, false);
  else ps.confounds = Matrix(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    if (!row_finite(ps.z.row(i))) rep.nonfinite_cells += static_cast<std::size_t>(
        std::count_if(ps.z.row(i).begin(), ps.z.row(i).end(), [](double v) { return !std::isfinite(v); }));
    const bool ok = row_finite(ps.z.row(i)) && row_finite(ps.properties.row(i)) && row_finite(ps.confounds.row(i));
    if (!ok && ps.valid[i]) {
      ps.valid[i] = false;
      ++rep.masked_rows;
    }
  }

  if (paths.split) {
    ps.split = read_split(*paths.split, n);
    ps.provenance.sources.push_back(paths.split->string());
  } else {
    ps.split = stats::make_split(n, seed);
  }
  ps.provenance.seed = seed;
  ps.validate();
  if (report) *report = rep;
  return ps;
}

void write_panelset(const fs::path& dir, const PanelSet& ps, bool blob) {
  fs::create_directories(dir);
  if (blob) write_latents_blob(dir / "z.bin", ps.z);
  else write_matrix_csv(dir / "z.csv", latent_header(ps.z.cols()), ps.z);

  Table props;
  props.header = ps.property_names;
  props.header.push_back("is_valid");
  if (!ps.selfies.empty()) props.header.push_back("selfies");
  for (std::size_t i = 0; i < ps.rows(); ++i) {
    std::vector<std::string> r;
    for (double v : ps.properties.row(i)) r.push_back(format_double(v));
    r.push_back(ps.valid[i] ? "1" : "0");
    if (!ps.selfies.empty()) r.push_back(ps.selfies[i]);
    props.rows.push_back(std::move(r));
  }
  write_csv(dir / "properties.csv", props);
  write_matrix_csv(dir / "confounds.csv", ps.confound_names, ps.confounds);
  write_split(dir / "split.csv", ps.split);

  Json prov;
  prov["sources"] = ps.provenance.sources;
  prov["seed"] = ps.provenance.seed;
  prov["tool_version"] = ps.provenance.tool_version;
  prov["rows"] = ps.rows();
  prov["dim"] = ps.z.cols();
  prov["split_fingerprint"] = ps.split.fingerprint();
  write_json(dir / "provenance.json", prov);
}

Json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::IoError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json numbers(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace latprobe::io
