#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(STV_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stv_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

const std::string kQuick = " --set outer_steps=100 --set warmup=10 --set restarts=1 --set draws=300";

}  // namespace

TEST_F(Cli, HelpDocumentsEveryFlag) {
  const CliResult top = run("--help");
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"mean-bench", "cov-bench", "rate-check", "fit", "verify"})
    EXPECT_NE(top.output.find(sub), std::string::npos) << sub;

  const CliResult bench = run("mean-bench --help");
  EXPECT_EQ(bench.code, 0);
  for (const char* flag : {"--config", "--set", "--seed", "--out", "--d", "--n", "--eps", "--trials", "--format",
                           "--threads", "--timing"})
    EXPECT_NE(bench.output.find(flag), std::string::npos) << flag;
  const CliResult fit = run("fit --help");
  EXPECT_EQ(fit.code, 0);
  for (const char* flag : {"--model", "--data", "--out", "--seed", "--set"})
    EXPECT_NE(fit.output.find(flag), std::string::npos) << flag;
  EXPECT_NE(run("rate-check --help").output.find("--ns"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("mean-bench --d notanumber").code, 1);
  const CliResult bad_key = run("mean-bench --set bogus=1");
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_NE(bad_key.output.find("valid keys"), std::string::npos);
  EXPECT_NE(bad_key.output.find("outer_steps"), std::string::npos);
  EXPECT_EQ(run("mean-bench --set outer_steps").code, 1);
  EXPECT_EQ(run("fit --data " + path("missing.csv")).code, 1);
}

TEST_F(Cli, MeanBenchWritesCsvAndSummary) {
  const CliResult r = run("mean-bench --d 3 --n 200 --eps 0.1 --trials 2 --seed 7 --out " + path("r.csv") + kQuick);
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(path("r.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scenario,d,n,eps,estimator,trial,seed,error,wall_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
  EXPECT_NE(slurp(path("r.md")).find("| stv |"), std::string::npos);
  EXPECT_NE(r.output.find("Mean Euclidean error"), std::string::npos);
}

TEST_F(Cli, SeedDeterminesOutput) {
  const std::string common = "mean-bench --d 2 --n 150 --trials 2 --threads 2" + kQuick;
  ASSERT_EQ(run(common + " --seed 3 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run(common + " --seed 3 --out " + path("b.csv")).code, 0);
  ASSERT_EQ(run(common + " --seed 4 --out " + path("c.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
  // Thread count does not change results.
  const std::string one_thread = "mean-bench --d 2 --n 150 --trials 2 --threads 1" + kQuick;
  ASSERT_EQ(run(one_thread + " --seed 3 --out " + path("d.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("d.csv")));
  const CliResult env = run("mean-bench --d 2 --n 150 --trials 2 --seed 3" + kQuick);
  EXPECT_EQ(env.code, 0);
  EXPECT_NE(env.output.find(slurp(path("a.csv"))), std::string::npos);
}

TEST_F(Cli, ThreadsFromEnvironment) {
  const std::string args = "mean-bench --d 2 --n 150 --trials 2 --seed 3" + kQuick;
  const CliResult two = run(args, "STV_THREADS=2");
  const CliResult one = run(args, "STV_THREADS=1");
  ASSERT_EQ(two.code, 0) << two.output;
  EXPECT_EQ(two.output, one.output);
  const CliResult bad = run(args, "STV_THREADS=zero");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("STV_THREADS"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndPrecedence) {
  write("cfg.json", R"({"d": 4, "n": 120, "trials": 1, "seed": 9, "estimators": ["median", "sample_mean"]})");
  ASSERT_EQ(run("mean-bench --config " + path("cfg.json") + " --out " + path("a.csv")).code, 0);
  std::string a = slurp(path("a.csv"));
  EXPECT_NE(a.find("mean,4,120,"), std::string::npos);
  // --set beats the file, explicit flags beat --set.
  ASSERT_EQ(run("mean-bench --config " + path("cfg.json") + " --set n=130 --set d=5 --d 6 --out " + path("b.csv")).code,
            0);
  EXPECT_NE(slurp(path("b.csv")).find("mean,6,130,"), std::string::npos);
  write("bad.json", R"({"d": 4, "nonsense": 1})");
  EXPECT_EQ(run("mean-bench --config " + path("bad.json")).code, 1);
  write("broken.json", "{");
  EXPECT_EQ(run("mean-bench --config " + path("broken.json")).code, 1);
}

TEST_F(Cli, JsonFormat) {
  ASSERT_EQ(run("cov-bench --d 2 --n 200 --trials 1 --format json --out " + path("r.json") + kQuick).code, 0);
  const auto j = nlohmann::json::parse(slurp(path("r.json")));
  EXPECT_EQ(j["scenario"], "cov");
  EXPECT_EQ(j["metric"], "frobenius");
  EXPECT_EQ(j["estimators"].size(), 3u);
}

TEST_F(Cli, FitMean) {
  std::string rows;
  for (int i = 0; i < 200; ++i) rows += std::to_string(1.0 + 0.01 * (i % 21 - 10)) + "," + std::to_string(-2.0 + 0.02 * (i % 11 - 5)) + "\n";
  write("points.csv", rows);
  const CliResult r = run("fit --model mean --data " + path("points.csv") + " --out " + path("fit.json") + kQuick);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(path("fit.json")));
  ASSERT_EQ(j["f_hat"].size(), 2u);
  EXPECT_NEAR(j["f_hat"][0].get<double>(), 1.0, 0.3);
  EXPECT_NEAR(j["f_hat"][1].get<double>(), -2.0, 0.3);
  EXPECT_EQ(j["witness"]["u"].size(), 2u);
}

TEST_F(Cli, FitCovariance) {
  std::string rows;
  for (int i = 0; i < 300; ++i) {
    const double a = std::sin(1.7 * i) * 1.4, b = std::cos(2.3 * i) * 1.4;
    rows += std::to_string(a) + "," + std::to_string(b) + "\n";
  }
  write("points.csv", rows);
  const CliResult r = run("fit --model cov --data " + path("points.csv") + kQuick);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output.substr(r.output.find('{')));
  EXPECT_EQ(j["F"].size(), 2u);
  EXPECT_EQ(j["cov"].size(), 2u);
  EXPECT_GT(j["cov"][0][0].get<double>(), 0.0);
}

TEST_F(Cli, MalformedDataNamesLine) {
  write("bad.csv", "1,2\n3,4\n5,oops\n");
  const CliResult r = run("fit --model mean --data " + path("bad.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("line 3"), std::string::npos);
  write("ragged.csv", "1,2\n3\n");
  const CliResult g = run("fit --data " + path("ragged.csv"));
  EXPECT_EQ(g.code, 1);
  EXPECT_NE(g.output.find("line 2"), std::string::npos);
}

TEST_F(Cli, NumericFailureExitsTwo) {
  write("points.csv", "0,1\n1,0\n2,2\n0.5,0.1\n");
  const CliResult r = run("fit --data " + path("points.csv") + " --set step_outer=1e308" + kQuick);
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, RateCheck) {
  const CliResult r = run("rate-check --d 2 --ns 100,400 --trials 2 --out " + path("rate.csv") + kQuick);
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(path("rate.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,estimator,mean_error");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(r.output.find("slope"), std::string::npos);
  EXPECT_EQ(run("rate-check --ns 100 --trials 1" + kQuick).code, 1);
}

TEST_F(Cli, VerifyPasses) {
  const CliResult r = run("verify --seed 1");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
  EXPECT_GE(std::count(r.output.begin(), r.output.end(), '\n'), 5);
}
