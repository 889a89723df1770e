#include "oracles.hpp"

#include "resocal/cli.hpp"
#include "resocal/ioformats.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace resocal;
namespace fs = std::filesystem;
using oracle::cd;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "resocal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static int counter = 0;
    dir_ = fs::temp_directory_path() / ("resocal_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void write_flat(const std::string& name, double f_lo, double f_hi, cd value) {
    const auto g = FrequencyGrid::linspace(f_lo, f_hi, 11);
    io::write_text_file(p(name), io::write_touchstone(io::TouchstoneDocument::one_port(
                                     ComplexTrace(g, VectorXc<double>::Constant(11, value)))));
  }

  fs::path dir_;
};

double csv_value(const std::string& path, const std::string& column, std::size_t row = 0) {
  const auto t = io::parse_csv(io::read_text_file(path));
  return std::stod(t.rows.at(row).at(t.column(column)));
}

}  // namespace

TEST_F(CliTest, SimulateThenFitReflection) {
  auto r = run({"simulate", "--preset", "table1", "-o", p("t.s1p")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"fit", "--in", p("t.s1p"), "--mode", "reflection", "--power", "-15", "-o", p("fit.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(csv_value(p("fit.csv"), "q_internal") / 2.2e6, 1.0, 0.02);
  EXPECT_EQ(csv_value(p("fit.csv"), "pathology"), 0.0);
  EXPECT_EQ(csv_value(p("fit.csv"), "p_app_dbm"), -85.0);
  EXPECT_GT(csv_value(p("fit.csv"), "photon_number"), 0.0);
}

TEST_F(CliTest, Fig2UncalibratedIsFlaggedOrHigh) {
  ASSERT_EQ(run({"simulate", "--preset", "fig2", "--l3", "45", "-o", p("f.s1p")}).code, 0);
  ASSERT_EQ(run({"fit", "--in", p("f.s1p"), "--mode", "reflection", "-o", p("fit.csv")}).code, 0);
  const double qi = csv_value(p("fit.csv"), "q_internal");
  EXPECT_TRUE(qi > 2.2e6 || (qi < 0 && csv_value(p("fit.csv"), "pathology") == 1.0)) << qi;
}

TEST_F(CliTest, SimulateIsDeterministic) {
  ASSERT_EQ(run({"simulate", "--preset", "fig8b", "--r", "1e8", "-o", p("a.s1p")}).code, 0);
  ASSERT_EQ(run({"simulate", "--preset", "fig8b", "--r", "1e8", "-o", p("b.s1p")}).code, 0);
  EXPECT_EQ(io::read_text_file(p("a.s1p")), io::read_text_file(p("b.s1p")));
  ASSERT_EQ(run({"fit", "--in", p("a.s1p"), "--mode", "hanger", "-o", p("a.csv")}).code, 0);
  ASSERT_EQ(run({"fit", "--in", p("b.s1p"), "--mode", "hanger", "-o", p("b.csv")}).code, 0);
  EXPECT_EQ(io::read_text_file(p("a.csv")), io::read_text_file(p("b.csv")));
  EXPECT_NEAR(csv_value(p("a.csv"), "q_internal") / 2.2e6, 1.0, 0.01);
}

TEST_F(CliTest, SolveAndApplyIdealCalibration) {
  write_flat("open.s1p", 4e9, 8e9, cd(1));
  write_flat("short.s1p", 4e9, 8e9, cd(-1));
  write_flat("load.s1p", 4e9, 8e9, cd(0));
  auto r = run({"solve-cal", "--open", p("open.s1p"), "--short", p("short.s1p"), "--load", p("load.s1p"),
                "--def-open", p("open.s1p"), "--def-short", p("short.s1p"), "--def-load", p("load.s1p"), "-o",
                p("terms.txt"), "--report", p("terms.csv"), "--reproducible"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto terms = io::load_error_terms(p("terms.txt"));
  for (Eigen::Index i = 0; i < terms.grid.size(); ++i) {
    EXPECT_LT(std::abs(terms.e00[i]), 1e-15);
    EXPECT_LT(std::abs(terms.e11[i]), 1e-15);
    EXPECT_LT(std::abs(terms.e01e10[i] - 1.0), 1e-15);
  }
  EXPECT_EQ(io::read_text_file(p("terms.txt")).find("date"), std::string::npos);

  write_flat("dut.s1p", 5e9, 6e9, cd(0.3, -0.2));
  r = run({"apply-cal", "--terms", p("terms.txt"), "--in", p("dut.s1p"), "-o", p("cal.s1p")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(std::abs(io::load_trace(p("cal.s1p"))[3] - cd(0.3, -0.2)), 1e-12);

  ASSERT_EQ(run({"report", "--terms", p("terms.txt"), "-o", p("rep.csv")}).code, 0);
  EXPECT_EQ(csv_value(p("rep.csv"), "frequency_hz"), 4e9);
}

TEST_F(CliTest, ApplyOutsideBandIsRangeError) {
  write_flat("open.s1p", 4e9, 8e9, cd(1));
  write_flat("short.s1p", 4e9, 8e9, cd(-1));
  write_flat("load.s1p", 4e9, 8e9, cd(0));
  ASSERT_EQ(run({"solve-cal", "--open", p("open.s1p"), "--short", p("short.s1p"), "--load", p("load.s1p"),
                 "--def-open", p("open.s1p"), "--def-short", p("short.s1p"), "--def-load", p("load.s1p"), "-o",
                 p("terms.txt")})
                .code,
            0);
  write_flat("dut.s1p", 8.5e9, 9e9, cd(0.1));
  const auto r = run({"apply-cal", "--terms", p("terms.txt"), "--in", p("dut.s1p"), "-o", p("cal.s1p")});
  EXPECT_EQ(r.code, cli::kFit);
  EXPECT_NE(r.err.find("outside the calibration bandwidth"), std::string::npos) << r.err;
}

TEST_F(CliTest, SolveWithoutKitIsUsageError) {
  write_flat("open.s1p", 4e9, 8e9, cd(1));
  ::unsetenv("RESOCAL_CALKIT");
  const auto r = run({"solve-cal", "--open", p("open.s1p"), "--short", p("open.s1p"), "--load", p("open.s1p"),
                      "-o", p("terms.txt")});
  EXPECT_EQ(r.code, cli::kUsage);
}

TEST_F(CliTest, KitFromEnvironment) {
  std::string kit = "RESOCAL CALKIT 1\nname = env\n";
  const char* kinds[] = {"open", "short", "load"};
  const char* re[] = {"1", "-1", "0"};
  for (int k = 0; k < 3; ++k) {
    kit += std::string("[standard ") + kinds[k] + "]\n# GHz S RI R 50\n4 " + re[k] + " 0\n8 " + re[k] + " 0\n[end]\n";
  }
  io::write_text_file(p("kit.txt"), kit);
  write_flat("open.s1p", 4e9, 8e9, cd(0.9, 0.1));
  write_flat("short.s1p", 4e9, 8e9, cd(-0.8, 0.05));
  write_flat("load.s1p", 4e9, 8e9, cd(0.05, 0.02));
  ::setenv("RESOCAL_CALKIT", p("kit.txt").c_str(), 1);
  const auto r = run({"solve-cal", "--open", p("open.s1p"), "--short", p("short.s1p"), "--load", p("load.s1p"),
                      "-o", p("terms.txt")});
  ::unsetenv("RESOCAL_CALKIT");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = io::load_error_terms(p("terms.txt"));
  const auto o = oracle::sol_ideal(cd(0.9, 0.1), cd(-0.8, 0.05), cd(0.05, 0.02));
  EXPECT_LT(std::abs(t.e00[0] - o.e00), 1e-12);
  EXPECT_LT(std::abs(t.e11[0] - o.e11), 1e-12);
  EXPECT_LT(std::abs(t.e01e10[0] - o.e01e10), 1e-12);
}

TEST_F(CliTest, FitTlsReport) {
  std::string csv = "power_dbm,photon_number,q_internal,f0_hz,pathology\n";
  for (int i = 0; i < 41; ++i) {
    const double n = std::pow(10.0, 8.0 * i / 40);
    const double loss = oracle::tls(1.8e-5, 1.74, 1.0, 7.7e5, 4.49e9, 0.015, n);
    csv += std::to_string(-100 + i) + "," + std::to_string(n) + "," + std::to_string(1.0 / loss) + ",4.49e9,0\n";
  }
  csv += "10,1e9,-5,4.49e9,1\n";  // pathological rows are skipped
  io::write_text_file(p("fits.csv"), csv);
  const auto r = run({"fit-tls", "--in", p("fits.csv"), "-o", p("tls.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(csv_value(p("tls.csv"), "f_qi0_x1e5"), 1.8, 1e-3);
  EXPECT_NEAR(csv_value(p("tls.csv"), "n_c"), 1.74, 1e-2);
  EXPECT_NEAR(csv_value(p("tls.csv"), "q_other_x1e-5"), 7.7, 1e-2);
}

TEST_F(CliTest, PowerSweepFit) {
  ASSERT_EQ(run({"simulate", "--preset", "table1", "-o", p("a.s1p")}).code, 0);
  ASSERT_EQ(run({"simulate", "--preset", "table1", "--r", "5e7", "-o", p("b.s1p")}).code, 0);
  io::write_text_file(p("sweep.csv"), "power_dbm,file\n-30,a.s1p\n0,b.s1p\n");
  const auto r = run({"fit", "--sweep", p("sweep.csv"), "--mode", "reflection", "-o", p("fit.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_value(p("fit.csv"), "power_dbm", 0), 0.0);
  EXPECT_EQ(csv_value(p("fit.csv"), "power_dbm", 1), -30.0);
  EXPECT_NEAR(csv_value(p("fit.csv"), "q_internal", 0) / 1.1e6, 1.0, 0.02);
}

TEST_F(CliTest, ConfigFile) {
  io::write_text_file(p("run.ini"), "[simulate]\npreset = \"table1\"\nisolation = 30\n");
  auto r = run({"--config", p("run.ini"), "simulate", "-o", p("c.s1p")});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run({"simulate", "--preset", "table1", "--isolation", "30", "-o", p("d.s1p")}).code, 0);
  EXPECT_EQ(io::read_text_file(p("c.s1p")), io::read_text_file(p("d.s1p")));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run({"simulate", "--preset", "nope", "-o", p("x.s1p")}).code, cli::kUsage);
  EXPECT_EQ(run({"simulate", "--points", "abc", "-o", p("x.s1p")}).code, cli::kUsage);
  EXPECT_EQ(run({"fit", "-o", p("x.csv")}).code, cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, MalformedInputIsParseError) {
  io::write_text_file(p("bad.s1p"), "# GHz S RI R 50\n6.0 0.5\n");
  const auto r = run({"fit", "--in", p("bad.s1p"), "-o", p("x.csv")});
  EXPECT_EQ(r.code, cli::kParse);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnfittableTraceIsFitError) {
  write_flat("flat.s1p", 5e9, 6e9, cd(0.5));
  EXPECT_EQ(run({"fit", "--in", p("flat.s1p"), "-o", p("x.csv")}).code, cli::kFit);
}

#ifdef RESOCAL_TOOL_PATH
TEST_F(CliTest, ToolBinaryRuns) {
  const std::string cmd = std::string(RESOCAL_TOOL_PATH) + " simulate --preset table1 --points 101 -o " + p("x.s1p");
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(p("x.s1p")));
}
#endif
