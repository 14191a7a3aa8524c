#include "rmtvol/io.hpp"
#include "rmtvol/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

using namespace rmtvol;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rmtvol_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Runs the CLI with stdout discarded and returns its exit status.
int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RMTVOL_CLI + "\" " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

const std::string kFixtures = RMTVOL_FIXTURES;

}  // namespace

TEST(Io, TableParsing) {
  std::istringstream in("# comment\n\na, b\n1,2\n 3 ,x\n");
  const Table t = read_table(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.numeric("a"), (std::vector<double>{1, 3}));
  EXPECT_THROW(t.numeric("b"), DataError);
  EXPECT_THROW(t.index("c"), DataError);
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(read_table(ragged), DataError);
  std::istringstream empty("# only a comment\n");
  EXPECT_THROW(read_table(empty), DataError);
  EXPECT_THROW(read_table_file("/nonexistent/table.csv"), DataError);
}

TEST(Io, MatrixRoundTripIsExact) {
  LabeledMatrix m;
  m.row_labels = {"x", "y"};
  m.col_labels = {"c1", "c2", "c3"};
  m.values.resize(2, 3);
  m.values << 0.1, -1e-300, 3.0 / 7.0, 1e10, std::nextafter(1.0, 2.0), -0.0;
  std::stringstream io;
  write_matrix_csv(io, "test-matrix", m);
  EXPECT_EQ(io.str().rfind("# rmtvol test-matrix v1\nasset,c1,c2,c3\n", 0), 0u);
  const LabeledMatrix r = read_matrix_csv(io);
  EXPECT_EQ(r.row_labels, m.row_labels);
  EXPECT_EQ(r.col_labels, m.col_labels);
  EXPECT_EQ(r.values, m.values);
}

TEST(Io, SpectrumFileRoundTrip) {
  const fs::path dir = scratch("spectrum_io");
  Matrix c(3, 3);
  c << 1, 0.2, 0.1, 0.2, 1, 0.3, 0.1, 0.3, 1;
  const SpectralDecomposition d = eigendecompose(c);
  const std::vector<std::string> names{"A", "B", "C"};
  {
    std::ofstream out(dir / "eigen.csv");
    write_spectrum_csv(out, d, true, names);
  }
  const SpectrumFile f = read_spectrum_file((dir / "eigen.csv").string());
  EXPECT_TRUE(f.has_vectors);
  EXPECT_EQ(f.names, names);
  EXPECT_LT((f.spectrum.eigenvalues - d.eigenvalues).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((f.spectrum.eigenvectors - d.eigenvectors).cwiseAbs().maxCoeff(), 1e-15);
  {
    std::ofstream out(dir / "bad.csv");
    out << "index,lambda\n1,2\n2,1\n";
  }
  EXPECT_THROW(read_spectrum_file((dir / "bad.csv").string()), Error);
}

TEST(Pipeline, FixtureRunIsDeterministic) {
  const fs::path dir = scratch("pipeline");
  PipelineConfig cfg;
  cfg.prices_path = kFixtures + "/prices.csv";
  cfg.industry_path = kFixtures + "/industry.csv";
  cfg.output_dir = dir.string();
  const PipelineResult a = run_pipeline(cfg);
  for (const char* key : {"ingest", "model", "correlation", "eigen", "mp_fit", "unfold", "spacings", "number_variance",
                          "market_mode", "industry", "kurtosis"})
    EXPECT_TRUE(a.report["stages"].contains(key)) << key;
  EXPECT_EQ(a.report["schema"], kReportSchema);
  EXPECT_TRUE(fs::exists(a.report_path));
  std::map<std::string, std::string> first;
  for (const auto& f : a.files) first[f] = slurp(dir / f);

  const PipelineResult b = run_pipeline(cfg);
  EXPECT_NE(a.report_path, b.report_path);
  EXPECT_EQ(a.report.dump(), b.report.dump());
  EXPECT_EQ(read_json(a.report_path).dump(), read_json(b.report_path).dump());
  ASSERT_EQ(a.files, b.files);
  for (const auto& f : b.files) EXPECT_EQ(first[f], slurp(dir / f)) << f;
}

TEST(Pipeline, MissingIndustryMapIsAStageError) {
  const fs::path dir = scratch("pipeline_missing");
  PipelineConfig cfg;
  cfg.prices_path = kFixtures + "/prices.csv";
  cfg.industry_path = (dir / "absent.csv").string();
  cfg.industry_analysis = true;
  cfg.output_dir = dir.string();
  try {
    run_pipeline(cfg);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "industry");
    EXPECT_EQ(e.code(), "industry_map_missing");
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(Pipeline, MissingPricesIsUsageError) {
  PipelineConfig cfg;
  EXPECT_THROW(run_pipeline(cfg), StageError);
}

TEST(Cli, WishartSpectrumGivesAlphaNearOne) {
  const fs::path dir = scratch("cli_mp");
  const std::string out = " --out \"" + dir.string() + "\" ";
  ASSERT_EQ(cli(out + "synth --kind gaussian_wishart --N 200 --T 600 --seed 5 --format matrix --output \"" +
                (dir / "panel.csv").string() + "\""), 0);
  ASSERT_EQ(cli(out + "corr --panel \"" + (dir / "panel.csv").string() + "\""), 0);
  ASSERT_EQ(cli(out + "eigen --matrix \"" + (dir / "correlation.csv").string() + "\" --no-vectors"), 0);
  ASSERT_EQ(cli(out + "mp-fit --eigen \"" + (dir / "eigen.csv").string() + "\" --T 600"), 0);
  const json s = read_json(dir / "mp_fit.json");
  EXPECT_EQ(s["schema"], "rmtvol.mp_fit/1");
  EXPECT_NEAR(s["Q"].get<double>(), 3.0, 1e-12);
  EXPECT_GE(s["alpha"].get<double>(), 0.9);
  EXPECT_LE(s["alpha"].get<double>(), 1.0);
  EXPECT_EQ(cli(out + "mp-fit --eigen \"" + (dir / "eigen.csv").string() + "\""), 2);
}

TEST(Cli, GoeSpectrumRejectsGue) {
  const fs::path dir = scratch("cli_goe");
  const std::string out = " --out \"" + dir.string() + "\" ";
  ASSERT_EQ(cli(out + "synth --kind goe --N 500 --seed 3 --output \"" + (dir / "goe.csv").string() + "\""), 0);
  ASSERT_EQ(cli(out + "eigen --matrix \"" + (dir / "goe.csv").string() + "\" --no-vectors"), 0);
  const std::string eigen = " --eigen \"" + (dir / "eigen.csv").string() + "\"";
  ASSERT_EQ(cli(out + "spacings" + eigen + " --ensemble all"), 0);
  const json s = read_json(dir / "spacings.json");
  EXPECT_GT(s["goe"]["ks"]["p_value"].get<double>(), 0.01);
  EXPECT_LT(s["gue"]["ks"]["p_value"].get<double>(), 0.05);
  EXPECT_LT(s["gse"]["ks"]["p_value"].get<double>(), 0.05);
}

TEST(Cli, UnfoldAcceptsExplicitBandParameters) {
  const fs::path dir = scratch("cli_unfold");
  {
    std::ofstream f(dir / "narrow.csv");
    f << "# rmtvol eigen v1\nindex,lambda\n";
    for (int i = 0; i < 150; ++i) f << i + 1 << ',' << 0.002 + 0.05 * std::pow((i + 0.5) / 150.0, 1.5) << '\n';
  }
  const std::string out = " --out \"" + dir.string() + "\" ";
  ASSERT_EQ(cli(out + "unfold --eigen \"" + (dir / "narrow.csv").string() + "\" --w 0.0047 --c 2.65"), 0);
  const Table t = read_table_file((dir / "unfold.csv").string());
  const auto xi = t.numeric("xi");
  EXPECT_EQ(xi.size(), 150u);
  EXPECT_TRUE(std::is_sorted(xi.begin(), xi.end()));
  EXPECT_EQ(cli(out + "unfold --eigen \"" + (dir / "narrow.csv").string() + "\" --c -1"), 2);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli_exit");
  const std::string out = " --out \"" + dir.string() + "\" ";
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli(out + "no-such-command"), 2);
  EXPECT_EQ(cli(out + "eigen --matrix \"" + (dir / "absent.csv").string() + "\""), 3);
  EXPECT_EQ(cli(out + "synth --kind goe --N 1"), 2);
  EXPECT_EQ(cli(out + "industry --eigen \"" + (dir / "absent.csv").string() + "\""), 3);
}

TEST(Cli, OutputParentDirectoriesAreCreated) {
  const fs::path dir = scratch("cli_nested");
  const fs::path target = dir / "a" / "b" / "spectrum.csv";
  ASSERT_EQ(cli("--out \"" + dir.string() + "\" synth --kind picket_fence --N 20 --output \"" + target.string() + "\""), 0);
  EXPECT_EQ(read_spectrum_file(target.string()).spectrum.size(), 20);
}
