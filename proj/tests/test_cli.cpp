#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const fs::path kConfigs{WARNLAB_CONFIG_DIR};

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(WARNLAB_BINARY) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("warnlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string config(const char* name) { return (kConfigs / name).string(); }

}  // namespace

TEST(Cli, ValidatePrintsPStar) {
  const auto r = run("validate --config " + config("thm31.json"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("p* = 0"), std::string::npos);
  EXPECT_NE(r.output.find("modes: 3"), std::string::npos);
}

TEST(Cli, ValidateRejectsGridCrossingPStar) {
  const auto dir = scratch("cross");
  std::string text = slurp(kConfigs / "thm31.json");
  text.replace(text.find("\"start\": -0.5"), 13, "\"start\": 0.25");
  std::ofstream(dir / "c.json") << text;
  const auto r = run("validate --config " + (dir / "c.json").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("sweep.start"), std::string::npos);
}

TEST(Cli, ValidateRejectsNonHermitianNoise) {
  const auto dir = scratch("herm");
  std::string text = slurp(kConfigs / "thm31.json");
  text.replace(text.find("[[1.0, 0.0, 0.0]"), 16, "[[1.0, 0.3, 0.0]");
  std::ofstream(dir / "c.json") << text;
  const auto r = run("validate --config " + (dir / "c.json").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("model.noise_matrix"), std::string::npos);
}

TEST(Cli, MissingNoiseMatrixNamesField) {
  const auto dir = scratch("missing");
  std::string text = slurp(kConfigs / "jordan2.json");
  const auto at = text.find("\"noise_matrix\"");
  text.erase(at, text.find('\n', at) - at + 1);
  std::ofstream(dir / "c.json") << text;
  const auto r = run("analytic --config " + (dir / "c.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("model.noise_matrix"), std::string::npos);
}

TEST(Cli, MissingConfigFlag) {
  EXPECT_EQ(run("analytic").code, 2);
  EXPECT_EQ(run("analytic --config /nonexistent.json").code, 2);
}

TEST(Cli, AnalyticWritesFiles) {
  const auto dir = scratch("analytic");
  const auto r = run("analytic --config " + config("thm31.json") + " --out " + dir.string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "critical_diagonal.csv"));
  EXPECT_NE(r.output.find("critical_diagonal: diverging"), std::string::npos);
}

TEST(Cli, LogLevelError) {
  const auto dir = scratch("quiet");
  const auto r = run("analytic --config " + config("thm31.json") + " --out " + dir.string(), "WARNLAB_LOG=error");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.output.empty()) << r.output;
}

TEST(Cli, WeylKTooLargeExit3) {
  const auto dir = scratch("bigk");
  std::string text = slurp(kConfigs / "laplacian.json");
  text.replace(text.find("[2, 5, 10]"), 10, "[2, 5000]");
  std::ofstream(dir / "c.json") << text;
  const auto r = run("weyl --config " + (dir / "c.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("k = 5000"), std::string::npos);
}

TEST(Cli, NumericalFailureNamesP) {
  // The second mode sits on the axis at p = -0.25, inside the sweep.
  const auto dir = scratch("unstable");
  const std::string text = R"({
  "model": {"kind": "spectral",
            "modes": [{"eigenvalue": [0.0, 1.0]}, {"eigenvalue": [0.25, 1.0]}],
            "noise_matrix": [[1.0, 0.0], [0.0, 1.0]],
            "spectral_gap": -1.0},
  "sweep": {"values": [-0.5, -0.25, -0.125]}
})";
  std::ofstream(dir / "c.json") << text;
  const auto r = run("analytic --config " + (dir / "c.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("p = -0.25"), std::string::npos) << r.output;
}

TEST(Cli, SimulateDeterministicAcrossRunsAndThreads) {
  const auto dir = scratch("det");
  // Small override of the ensemble via a derived config keeps the test fast.
  std::string text = slurp(kConfigs / "thm31_mc.json");
  text.replace(text.find("\"n_trajectories\": 10000"), 23, "\"n_trajectories\": 64");
  text.replace(text.find("\"horizon\": 200.0"), 16, "\"horizon\": 20.0");
  std::ofstream(dir / "c.json") << text;
  const std::string cfg = (dir / "c.json").string();
  const auto a = run("simulate --config " + cfg + " --seed 11 --threads 1 --out " + (dir / "a").string());
  const auto b = run("simulate --config " + cfg + " --seed 11 --threads 1 --out " + (dir / "b").string());
  const auto c = run("simulate --config " + cfg + " --seed 11 --threads 4 --out " + (dir / "c").string());
  const auto d = run("simulate --config " + cfg + " --seed 12 --threads 1 --out " + (dir / "d").string());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(c.code, 0) << c.output;
  for (const char* f : {"critical_diagonal.csv", "covariance.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "c" / f)) << f;
    EXPECT_NE(slurp(dir / "a" / f), slurp(dir / "d" / f)) << f;
  }
  const auto csv = slurp(dir / "a" / "critical_diagonal.csv");
  EXPECT_NE(csv.find(",empirical"), std::string::npos);
  EXPECT_EQ(csv.find(",,empirical"), std::string::npos);  // every empirical row carries a standard error
}

TEST(Cli, ConfigEchoRerun) {
  const auto dir = scratch("echo");
  ASSERT_EQ(run("analytic --config " + config("jordan2.json") + " --out " + (dir / "a").string()).code, 0);
  const auto report = slurp(dir / "a" / "report.json");
  // Extract config_echo with the library-free route: rerun through the binary on the echoed file.
  const auto start = report.find("\"config_echo\"");
  ASSERT_NE(start, std::string::npos);
  const auto open = report.find('{', start);
  int depth = 0;
  std::size_t end = open;
  for (; end < report.size(); ++end) {
    if (report[end] == '{') ++depth;
    if (report[end] == '}' && --depth == 0) break;
  }
  std::ofstream(dir / "echo.json") << report.substr(open, end - open + 1);
  ASSERT_EQ(run("analytic --config " + (dir / "echo.json").string() + " --out " + (dir / "b").string()).code, 0);
  for (const char* f : {"jordan_0_0.csv", "jordan_0_1.csv", "jordan_1_1.csv", "covariance.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, BundledMonteCarloRecoversInverseDistance) {
  const auto dir = scratch("mc");
  const auto r = run("simulate --config " + config("thm31_mc.json") + " --format json --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto report = slurp(dir / "report.json");
  const auto at = report.find("\"exponent\":", report.find("\"fit\""));
  ASSERT_NE(at, std::string::npos);
  const double exponent = std::stod(report.substr(report.find(':', at) + 1));
  EXPECT_NEAR(exponent, -1.0, 0.05);
}
