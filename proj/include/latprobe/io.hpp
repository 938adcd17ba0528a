#pragma once

// File formats: headed CSV tables, float32 latent blobs with a JSON sidecar,
// split files, and the PanelSet bundle built from them.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "latprobe/matrix.hpp"
#include "latprobe/panel.hpp"

namespace latprobe::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;  // npos when absent
};

/// Comma-separated, first line is the header, double quotes allowed around
/// fields. Throws IoError, HeaderMismatch (ragged rows).
Table read_csv(const fs::path& path);
void write_csv(const fs::path& path, const Table& t);

/// Shortest text that parses back to the same double; "nan" for NaN.
std::string format_double(double v);
/// Empty, "nan" and unparsable cells give NaN.
double parse_double(const std::string& s);

void write_matrix_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& m);

/// Latents: header z0..z{d-1}.
std::vector<std::string> latent_header(std::size_t d);
Matrix read_latents_csv(const fs::path& path);

/// Row-major float32 payload plus `<path>.json` with
/// {"rows", "cols", "order": "row-major", "dtype": "f32"}.
void write_latents_blob(const fs::path& path, const Matrix& z);
Matrix read_latents_blob(const fs::path& path);
/// Dispatches on extension: .csv or anything else as a blob.
Matrix read_latents(const fs::path& path);

/// Dense float64 matrix with a one-line JSON shape header.
void write_matrix_f64(const fs::path& path, const Matrix& m);
Matrix read_matrix_f64(const fs::path& path);

/// CSV with columns row,part where part is train|val|test.
void write_split(const fs::path& path, const stats::SplitAssignment& split);
stats::SplitAssignment read_split(const fs::path& path, std::size_t rows);

struct PanelPaths {
  fs::path latents;
  fs::path properties;
  std::optional<fs::path> confounds;
  std::optional<fs::path> split;
};

struct LoadReport {
  std::size_t nonfinite_cells = 0;
  std::size_t masked_rows = 0;
};

/// Property CSV may carry an `is_valid` column (0/1) and a `selfies` column;
/// both are lifted out of the property panel. Rows with a non-finite latent,
/// property or confound cell are masked. Without a split file the rows are
/// split with make_split(N, seed). Throws HeaderMismatch, RowCountMismatch.
PanelSet load_panelset(const PanelPaths& paths, std::uint64_t seed, LoadReport* report = nullptr);

/// Writes z.csv (or z.bin when `blob`), properties.csv, confounds.csv,
/// split.csv and provenance.json into `dir`.
void write_panelset(const fs::path& dir, const PanelSet& ps, bool blob = false);

Json read_json(const fs::path& path);
/// Two-space indented, trailing newline.
void write_json(const fs::path& path, const Json& j);
/// Number or null for non-finite values.
Json number(double v);
Json numbers(std::span<const double> v);

}  // namespace latprobe::io
