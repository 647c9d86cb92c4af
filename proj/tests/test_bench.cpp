#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stv/bench.hpp"
#include "stv/errors.hpp"

using namespace stv;

namespace {

StvLearnConfig quick_learn(Scenario s) {
  StvLearnConfig cfg = default_learn_config(s);
  cfg.optimizer.outer_steps = 150;
  cfg.optimizer.warmup = 15;
  cfg.optimizer.restarts = 1;
  cfg.model_expectation = ModelExpectation::exact(300);
  return cfg;
}

ExperimentConfig small_mean(double eps) {
  ExperimentConfig cfg = ExperimentConfig::defaults(Scenario::MeanShift);
  cfg.d = 3;
  cfg.n = 300;
  cfg.eps = eps;
  cfg.trials = 3;
  cfg.learn = quick_learn(Scenario::MeanShift);
  cfg.master_seed = 5;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Aggregate, HandComputed) {
  const Aggregate a = aggregate({1.0, 2.0, 4.0, 10.0});
  EXPECT_DOUBLE_EQ(a.mean, 4.25);
  EXPECT_NEAR(a.std, std::sqrt((3.25 * 3.25 + 2.25 * 2.25 + 0.25 * 0.25 + 5.75 * 5.75) / 3.0), 1e-14);
  EXPECT_DOUBLE_EQ(a.median, 3.0);
  // |x - 3| = 2, 1, 1, 7.
  EXPECT_DOUBLE_EQ(a.mad, 1.5);
  EXPECT_EQ(a.count, 4);
}

TEST(Aggregate, SkipsFailures) {
  const Aggregate a = aggregate({1.0, std::numeric_limits<double>::quiet_NaN(), 3.0});
  EXPECT_EQ(a.count, 2);
  EXPECT_EQ(a.failures, 1);
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_TRUE(std::isnan(aggregate({}).mean));
}

TEST(Names, RoundTrip) {
  for (EstimatorId e : {EstimatorId::Stv, EstimatorId::ComponentwiseMedian, EstimatorId::SampleMean,
                        EstimatorId::SampleCov, EstimatorId::Kendall})
    EXPECT_EQ(parse_estimator(to_string(e)), e);
  for (Scenario s : {Scenario::MeanShift, Scenario::CovShift, Scenario::Clean}) EXPECT_EQ(parse_scenario(to_string(s)), s);
  EXPECT_THROW(parse_estimator("tv"), InputError);
}

TEST(Defaults, RegularizationScales) {
  const StvLearnConfig m = default_learn_config(Scenario::MeanShift);
  EXPECT_NEAR(1.0 / (m.U * m.U), 1e-4, 1e-18);
  EXPECT_NEAR(1.0 / (m.r * m.r), 3e-5, 1e-18);
  const StvLearnConfig c = default_learn_config(Scenario::CovShift);
  EXPECT_NEAR(1.0 / (c.r * c.r), 1e-4, 1e-18);
  EXPECT_EQ(m.variant, LearnVariant::FullReg);
  EXPECT_EQ(ExperimentConfig::defaults(Scenario::CovShift).n, 5000);
  EXPECT_EQ(ExperimentConfig::defaults(Scenario::MeanShift).trials, 10);
}

TEST(Config, Validation) {
  ExperimentConfig cfg = small_mean(0.1);
  cfg.trials = 0;
  EXPECT_THROW(run_mean_experiment(cfg), InputError);
  cfg = small_mean(0.1);
  cfg.n = 1;
  EXPECT_THROW(run_mean_experiment(cfg), InputError);
  cfg = small_mean(0.1);
  cfg.estimators = {EstimatorId::Kendall};
  EXPECT_THROW(run_mean_experiment(cfg), InputError);
  EXPECT_THROW(run_cov_experiment(small_mean(0.1)), InputError);
}

TEST(Experiment, ShapeAndAggregates) {
  const ExperimentReport rep = run_mean_experiment(small_mean(0.1));
  EXPECT_EQ(rep.trials(), 3);
  EXPECT_EQ(rep.errors.cols(), 3);
  EXPECT_EQ(rep.metric, Metric::Euclidean);
  EXPECT_TRUE(rep.failures.empty());
  EXPECT_TRUE(rep.errors.allFinite());
  for (int j = 0; j < 3; ++j) {
    const Aggregate a = aggregate(rep.column_values(j));
    EXPECT_EQ(a.mean, rep.aggregates[static_cast<std::size_t>(j)].mean);
    EXPECT_EQ(a.median, rep.aggregates[static_cast<std::size_t>(j)].median);
  }
  // The sample mean is dragged towards the outliers.
  EXPECT_GT(rep.headline(EstimatorId::SampleMean), rep.headline(EstimatorId::Stv));
}

TEST(Experiment, ReproducibleAndThreadIndependent) {
  ExperimentConfig cfg = small_mean(0.1);
  const ExperimentReport a = run_mean_experiment(cfg);
  const ExperimentReport b = run_mean_experiment(cfg);
  cfg.threads = 3;
  const ExperimentReport c = run_mean_experiment(cfg);
  EXPECT_EQ(a.errors, b.errors);
  EXPECT_EQ(a.errors, c.errors);
  EXPECT_EQ(a.seeds, c.seeds);
  EXPECT_EQ(to_csv(a), to_csv(c));
}

TEST(Experiment, SeedChangesResults) {
  ExperimentConfig cfg = small_mean(0.1);
  const ExperimentReport a = run_mean_experiment(cfg);
  cfg.master_seed = 6;
  EXPECT_NE(a.errors, run_mean_experiment(cfg).errors);
}

TEST(Experiment, ContaminationIncreasesError) {
  // Same master seed, so the core rows coincide.
  const ExperimentReport clean = run_mean_experiment(small_mean(0.0));
  const ExperimentReport dirty = run_mean_experiment(small_mean(0.1));
  for (EstimatorId e : clean.estimators) EXPECT_GE(dirty.headline(e), clean.headline(e)) << to_string(e);
}

TEST(Experiment, FailuresAreRecordedNotFatal) {
  ExperimentConfig cfg = small_mean(0.1);
  cfg.learn.optimizer.step_outer = 1e308;  // the first descent step overflows
  const ExperimentReport rep = run_mean_experiment(cfg);
  EXPECT_EQ(static_cast<int>(rep.failures.size()), cfg.trials);
  EXPECT_EQ(rep.of(EstimatorId::Stv).failures, cfg.trials);
  EXPECT_TRUE(std::isfinite(rep.headline(EstimatorId::ComponentwiseMedian)));
  EXPECT_NE(to_markdown(rep).find("Failed fits"), std::string::npos);
  EXPECT_NE(to_csv(rep).find(",nan,"), std::string::npos);
}

TEST(Experiment, CovarianceScenario) {
  ExperimentConfig cfg = ExperimentConfig::defaults(Scenario::CovShift);
  cfg.d = 2;
  cfg.n = 400;
  cfg.trials = 2;
  cfg.learn = quick_learn(Scenario::CovShift);
  const ExperimentReport rep = run_cov_experiment(cfg);
  EXPECT_EQ(rep.metric, Metric::Frobenius);
  EXPECT_EQ(rep.estimators, default_estimators(Scenario::CovShift));
  EXPECT_TRUE(rep.errors.allFinite());
  // The mean shift inflates the sample covariance by about eps (1 - eps) 36 in each entry.
  EXPECT_GT(rep.headline(EstimatorId::SampleCov), 0.5 * 0.16 * 36.0 * 2.0);
}

TEST(Rate, SlopeOfPowerLaw) {
  const std::vector<double> n = {250, 500, 1000, 2000, 4000};
  std::vector<double> y;
  for (double x : n) y.push_back(3.0 * std::pow(x, -0.5));
  EXPECT_NEAR(log_log_slope(n, y), -0.5, 1e-12);
  EXPECT_THROW(log_log_slope({100}, {0.1}), InputError);
  EXPECT_THROW(log_log_slope({100, 200}, {0.1, 0.0}), DomainError);
}

TEST(Rate, SingleSampleSizeIsRejected) {
  EXPECT_THROW(run_rate_check(2, {100}, 1, quick_learn(Scenario::Clean), 1), InputError);
}

TEST(Rate, SmallGrid) {
  // Enough model draws that their Monte Carlo error stays below the data's.
  StvLearnConfig learn = quick_learn(Scenario::Clean);
  learn.optimizer.outer_steps = 200;
  learn.optimizer.warmup = 20;
  learn.model_expectation = ModelExpectation::exact(2000);
  const RateCheck rc = run_rate_check(2, {100, 400, 1600}, 4, learn, 3);
  ASSERT_EQ(rc.stv_errors.size(), 3u);
  EXPECT_LT(rc.stv_errors.back(), rc.stv_errors.front());
  EXPECT_LT(rc.oracle_slope, -0.2);
  EXPECT_LT(rc.slope, -0.2);
}

TEST(Csv, EmptyReportIsHeaderOnly) {
  ExperimentReport rep;
  rep.errors = MatrixXd(0, 0);
  rep.wall_ms = rep.errors;
  EXPECT_EQ(to_csv(rep), std::string(kCsvHeader) + "\n");
}

TEST(Csv, RowsPerTrialAndEstimator) {
  ExperimentConfig cfg = small_mean(0.1);
  cfg.trials = 2;
  cfg.estimators = {EstimatorId::ComponentwiseMedian, EstimatorId::SampleMean};
  const std::string csv = to_csv(run_mean_experiment(cfg));
  EXPECT_EQ(count_lines(csv), 1 + 4);
  // wall_ms stays empty unless timing was requested.
  EXPECT_EQ(csv.substr(csv.size() - 2), ",\n");
}

TEST(Csv, RoundTripReproducesAggregates) {
  const ExperimentReport rep = run_mean_experiment(small_mean(0.1));
  std::istringstream in(to_csv(rep));
  const ExperimentReport back = parse_report_csv(in);
  EXPECT_EQ(back.estimators, rep.estimators);
  EXPECT_EQ(back.seeds, rep.seeds);
  ASSERT_EQ(back.aggregates.size(), rep.aggregates.size());
  for (std::size_t j = 0; j < rep.aggregates.size(); ++j) {
    EXPECT_EQ(back.aggregates[j].mean, rep.aggregates[j].mean);
    EXPECT_EQ(back.aggregates[j].std, rep.aggregates[j].std);
    EXPECT_EQ(back.aggregates[j].median, rep.aggregates[j].median);
    EXPECT_EQ(back.aggregates[j].mad, rep.aggregates[j].mad);
  }
  EXPECT_EQ(to_csv(back), to_csv(rep));
}

TEST(Csv, TimingColumn) {
  ExperimentConfig cfg = small_mean(0.1);
  cfg.trials = 1;
  cfg.estimators = {EstimatorId::SampleMean};
  cfg.timing = true;
  const ExperimentReport rep = run_mean_experiment(cfg);
  EXPECT_TRUE(std::isfinite(rep.wall_ms(0, 0)));
  EXPECT_NE(to_csv(rep).substr(to_csv(rep).size() - 2), ",\n");
}

TEST(Emit, WritesCsvMarkdownAndJson) {
  const auto dir = std::filesystem::temp_directory_path() / "stv_bench_emit";
  std::filesystem::create_directories(dir);
  ExperimentConfig cfg = small_mean(0.1);
  cfg.trials = 2;
  cfg.estimators = {EstimatorId::ComponentwiseMedian, EstimatorId::SampleMean};
  const ExperimentReport rep = run_mean_experiment(cfg);
  emit_report(rep, dir / "r.csv", ReportFormat::Csv);
  EXPECT_EQ(slurp(dir / "r.csv"), to_csv(rep));
  EXPECT_NE(slurp(dir / "r.md").find("| mean | 3 | 300 |"), std::string::npos);
  emit_report(rep, dir / "r.json", ReportFormat::Json);
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["estimators"].size(), 2u);
  EXPECT_EQ(j["estimators"][1]["errors"][0].get<double>(), rep.errors(0, 1));
  std::filesystem::remove_all(dir);
}

TEST(Emit, UnwritablePathNamesPath) {
  ExperimentReport rep;
  rep.errors = MatrixXd(0, 0);
  rep.wall_ms = rep.errors;
  try {
    emit_report(rep, "/nonexistent-dir/x.csv", ReportFormat::Csv);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x.csv"), std::string::npos);
  }
}

TEST(DataCsv, ParsesAndReportsLineNumbers) {
  std::istringstream good("1,2\n3.5,-4e-1\n\n5,6\n");
  const MatrixXd X = parse_data_csv(good);
  EXPECT_EQ(X.rows(), 3);
  EXPECT_EQ(X(1, 1), -0.4);
  std::istringstream ragged("1,2\n3\n");
  try {
    parse_data_csv(ragged);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream nan("1,2\n3,nan\n");
  EXPECT_THROW(parse_data_csv(nan), InputError);
  std::istringstream empty("");
  EXPECT_THROW(parse_data_csv(empty), InputError);
  EXPECT_THROW(read_data_csv("/nonexistent/file.csv"), IoError);
}
