#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("streampoison_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args, const std::string& env = "") const {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" STREAMPOISON_CLI "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read(out);
    r.err = read(err);
    return r;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

const std::string kSmallSemi =
    "semi --split 50,150,50 --percentiles 50,100 --K 10 --eta 0.1 --defense slab";

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  const CliResult r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("semi"), std::string::npos);
  EXPECT_NE(r.out.find("verify"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("--bogus-flag semi").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("semi --defense hexagon --split 20,50,20").code, 2);
  EXPECT_EQ(run("fully --budget 1.5 --T 10 --num-seeds 1").code, 2);
}

TEST_F(CliTest, MissingDatasetIsRuntimeError) {
  const CliResult r = run("semi --dataset does_not_exist.csv");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("does_not_exist.csv"), std::string::npos);
}

TEST_F(CliTest, SemiWritesCsvAndPlotDeterministically) {
  ASSERT_EQ(run(kSmallSemi + " --out a.csv --plot a.svg").code, 0);
  ASSERT_EQ(run(kSmallSemi + " --out b.csv --plot ''").code, 0);
  const std::string a = read(dir_ / "a.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read(dir_ / "b.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "b.svg"));
  const std::string svg = read(dir_ / "a.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST_F(CliTest, SemiJsonFormat) {
  ASSERT_EQ(run(kSmallSemi + " --format json --out r.json --plot ''").code, 0);
  const auto j = nlohmann::json::parse(read(dir_ / "r.json"));
  EXPECT_EQ(j.at("records").size(), 2u);
  EXPECT_TRUE(j.contains("config"));
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  {
    std::ofstream cfg(dir_ / "cfg.json");
    cfg << R"({"semi": {"K": 0, "split": [40, 100, 40], "percentiles": [100], "out": "cfg.csv", "plot": ""}})";
  }
  const CliResult r = run("--config cfg.json semi");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read(dir_ / "cfg.csv");
  EXPECT_NE(csv.find(",0,"), std::string::npos);
  EXPECT_EQ(run("--config missing.json semi").code, 2);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  const CliResult r = run(kSmallSemi + " --out e.csv --plot ''", "STREAMPOISON_OUT=envdir");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "envdir" / "e.csv"));
  ASSERT_EQ(run(kSmallSemi + " --out f.csv --plot ''", "STREAMPOISON_OUT=envdir").code, 0);
  ASSERT_EQ(run("--out-dir flagdir " + kSmallSemi + " --out g.csv --plot ''", "STREAMPOISON_OUT=envdir").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "flagdir" / "g.csv"));
}

TEST_F(CliTest, FullyRunsSmallSweep) {
  const CliResult r = run("fully --split 40,100,40 --T 50 --num-seeds 2 --retention 0.5,1 --out f.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "fully_plot.svg"));
  EXPECT_EQ(run("fully --attack concentrated --T 10 --num-seeds 1").code, 2);
}

TEST_F(CliTest, RegimeReportsHardWithWitness) {
  const CliResult r = run("regime --defense centroid --tau 1.5 --mu-plus=-2,1 --mu-minus=2,1 --theta-star=1,0 --samples 2000");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("verdict").at("kind"), "hard");
  EXPECT_FALSE(j.at("verdict").at("witness").is_null());
  EXPECT_EQ(j.at("halfspace_check"), "separates");
  EXPECT_DOUBLE_EQ(j.at("boundaries").at("tau_hard").get<double>(), 2.0);
}

TEST_F(CliTest, RegimeReportsEasyWithSegment) {
  const CliResult r = run("regime --defense l2 --tau 2 --theta-star=1,1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("verdict").at("kind"), "easy");
  EXPECT_TRUE(j.at("segment_feasible").get<bool>());
}

TEST_F(CliTest, RegimeRequiresCentroids) {
  EXPECT_EQ(run("regime --defense slab --theta-star=1,0").code, 2);
  EXPECT_EQ(run("regime --defense slab").code, 2);
}

TEST_F(CliTest, VerifySmallRunPasses) {
  const CliResult r = run("verify --sign-trials 10 --basis-seeds 0 --rate-instances 5");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("[FAIL]"), std::string::npos);
  EXPECT_NE(r.out.find("[PASS] rapid case"), std::string::npos);
}

TEST_F(CliTest, GenWritesDatasetAndManifest) {
  ASSERT_EQ(run("gen --split 10,20,10 --out g.csv --manifest m.json").code, 0);
  const std::string csv = read(dir_ / "g.csv");
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 41u);
  const auto m = nlohmann::json::parse(read(dir_ / "m.json"));
  EXPECT_FALSE(m.empty());
  EXPECT_EQ(run("gen --task nope").code, 2);
}
