#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "latprobe/errors.hpp"
#include "latprobe/io.hpp"
#include "latprobe/rng.hpp"
#include "latprobe/synth.hpp"

using namespace latprobe;
using namespace latprobe::io;

namespace {

const fs::path kTiny = fs::path(LATPROBE_FIXTURE_DIR) / "tiny";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::StageFailure;
}

}  // namespace

TEST(Io, DoubleFormattingRoundTrips) {
  Rng rng(1);
  std::normal_distribution<double> nd(0.0, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double v = nd(rng) * std::pow(10.0, i % 40 - 20);
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_TRUE(std::isnan(parse_double("")));
  EXPECT_TRUE(std::isnan(parse_double("abc")));
  EXPECT_EQ(parse_double(" 2.5 "), 2.5);
  EXPECT_EQ(parse_double("+3"), 3.0);
}

TEST(Io, CsvQuoting) {
  TempDir dir("latprobe_io_csv");
  const Table t{{"name", "value"}, {{"a,b", "1"}, {"say \"hi\"", "2"}}};
  write_csv(dir.path / "t.csv", t);
  const auto back = read_csv(dir.path / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Io, TinyFixtureLoads) {
  LoadReport rep;
  const auto ps = load_panelset({kTiny / "z.csv", kTiny / "properties.csv", kTiny / "confounds.csv", {}}, 42, &rep);
  EXPECT_EQ(ps.rows(), 3u);
  EXPECT_EQ(ps.z.cols(), 4u);
  EXPECT_EQ(ps.property_names, (std::vector<std::string>{"MolWt", "HBD"}));
  EXPECT_EQ(ps.confound_names, (std::vector<std::string>{"length", "entropy"}));
  EXPECT_EQ(ps.valid, (std::vector<bool>{true, true, false}));
  EXPECT_EQ(ps.selfies[2], "[C][C][=O]");
  EXPECT_EQ(ps.z(1, 3), 3.5);
  EXPECT_EQ(ps.properties(0, 0), 46.069);
  EXPECT_EQ(ps.split.size(), 3u);
  EXPECT_EQ(rep.nonfinite_cells, 0u);
}

TEST(Io, AllValidWithoutMaskColumn) {
  const auto ps = load_panelset({kTiny / "z.csv", kTiny / "confounds.csv", {}, {}}, 42);
  EXPECT_EQ(ps.valid, (std::vector<bool>(3, true)));
  EXPECT_EQ(ps.confounds.cols(), 0u);
}

TEST(Io, BlobMatchesCsvTwin) {
  TempDir dir("latprobe_io_blob");
  const auto csv = read_latents_csv(kTiny / "z.csv");
  const Matrix two = csv.select_rows(std::vector<std::size_t>{0, 1});
  write_latents_blob(dir.path / "z.bin", two);
  const auto side = read_json(dir.path / "z.bin.json");
  EXPECT_EQ(side["rows"], 2);
  EXPECT_EQ(side["cols"], 4);
  const auto blob = read_latents(dir.path / "z.bin");
  EXPECT_EQ(blob, two);  // fixture values are exact in float32
  EXPECT_EQ(fs::file_size(dir.path / "z.bin"), 2u * 4u * 4u);
}

TEST(Io, ErrorKinds) {
  EXPECT_EQ(kind_of([] { load_panelset({kTiny / "z.csv", kTiny / "properties_short.csv", {}, {}}, 42); }),
            ErrorKind::RowCountMismatch);
  EXPECT_EQ(kind_of([] { load_panelset({kTiny / "z_badheader.csv", kTiny / "properties.csv", {}, {}}, 42); }),
            ErrorKind::HeaderMismatch);
  EXPECT_EQ(kind_of([] { read_csv(kTiny / "missing.csv"); }), ErrorKind::IoError);
}

TEST(Io, NonFiniteCellMasksRow) {
  LoadReport rep;
  const auto ps = load_panelset({kTiny / "z_nan.csv", kTiny / "properties.csv", {}, {}}, 42, &rep);
  EXPECT_EQ(ps.valid, (std::vector<bool>{true, false, false}));
  EXPECT_EQ(rep.nonfinite_cells, 1u);
  EXPECT_EQ(rep.masked_rows, 1u);
}

TEST(Io, PanelRoundTrip) {
  TempDir dir("latprobe_io_panel");
  const auto ps = synth::World({}).sample(200);
  write_panelset(dir.path, ps);
  const auto back = load_panelset({dir.path / "z.csv", dir.path / "properties.csv", dir.path / "confounds.csv",
                                   dir.path / "split.csv"},
                                  42);
  EXPECT_EQ(back.z, ps.z);
  EXPECT_EQ(back.property_names, ps.property_names);
  EXPECT_EQ(back.confound_names, ps.confound_names);
  EXPECT_EQ(back.valid, ps.valid);
  EXPECT_EQ(back.selfies, ps.selfies);
  EXPECT_EQ(back.split.train, ps.split.train);
  EXPECT_EQ(back.split.fingerprint(), ps.split.fingerprint());
  for (std::size_t i = 0; i < ps.properties.data().size(); ++i) {
    const double a = ps.properties.data()[i], b = back.properties.data()[i];
    EXPECT_TRUE(a == b || (std::isnan(a) && std::isnan(b)));
  }
  EXPECT_EQ(back.confounds, ps.confounds);
}

TEST(Io, MatrixF64RoundTrip) {
  TempDir dir("latprobe_io_f64");
  Rng rng(4);
  Matrix m(5, 3);
  for (double& v : m.data()) v = std::normal_distribution<double>()(rng);
  write_matrix_f64(dir.path / "m.bin", m);
  EXPECT_EQ(read_matrix_f64(dir.path / "m.bin"), m);
}

TEST(Io, SplitFileRejectsBadRows) {
  TempDir dir("latprobe_io_split");
  write_csv(dir.path / "s.csv", {{"row", "part"}, {{"0", "train"}, {"7", "test"}}});
  EXPECT_EQ(kind_of([&] { read_split(dir.path / "s.csv", 3); }), ErrorKind::DimensionMismatch);
  write_csv(dir.path / "s.csv", {{"row", "part"}, {{"0", "holdout"}}});
  EXPECT_EQ(kind_of([&] { read_split(dir.path / "s.csv", 3); }), ErrorKind::HeaderMismatch);
}

TEST(Io, JsonNumbers) {
  EXPECT_TRUE(number(std::nan("")).is_null());
  EXPECT_EQ(number(1.5), 1.5);
  const Vector v = {1.0, std::nan("")};
  EXPECT_EQ(numbers(v).dump(), "[1.0,null]");
}
