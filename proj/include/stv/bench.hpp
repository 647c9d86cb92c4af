#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stv/contamination.hpp"
#include "stv/errors.hpp"
#include "stv/estimators.hpp"
#include "stv/random.hpp"

namespace stv {

enum class Scenario { MeanShift, CovShift, Clean };

enum class EstimatorId { Stv, ComponentwiseMedian, SampleMean, SampleCov, Kendall };

enum class Metric { Euclidean, Frobenius };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::MeanShift: return "mean";
    case Scenario::CovShift: return "cov";
    case Scenario::Clean: return "clean";
  }
  return "?";
}

inline std::string to_string(EstimatorId e) {
  switch (e) {
    case EstimatorId::Stv: return "stv";
    case EstimatorId::ComponentwiseMedian: return "median";
    case EstimatorId::SampleMean: return "sample_mean";
    case EstimatorId::SampleCov: return "sample_cov";
    case EstimatorId::Kendall: return "kendall";
  }
  return "?";
}

inline std::string to_string(Metric m) { return m == Metric::Euclidean ? "euclidean" : "frobenius"; }

inline EstimatorId parse_estimator(std::string_view s) {
  for (EstimatorId e : {EstimatorId::Stv, EstimatorId::ComponentwiseMedian, EstimatorId::SampleMean,
                        EstimatorId::SampleCov, EstimatorId::Kendall})
    if (to_string(e) == s) return e;
  throw InputError("unknown estimator '" + std::string(s) +
                   "' (valid: stv, median, sample_mean, sample_cov, kendall)");
}

inline Scenario parse_scenario(std::string_view s) {
  for (Scenario x : {Scenario::MeanShift, Scenario::CovShift, Scenario::Clean})
    if (to_string(x) == s) return x;
  throw InputError("unknown scenario '" + std::string(s) + "' (valid: mean, cov, clean)");
}

// Regularization scales of the reference experiments: 1/U^2 = 1e-4 and
// 1/r^2 = 3e-5 (mean) or 1e-4 (covariance).
inline StvLearnConfig default_learn_config(Scenario s) {
  StvLearnConfig cfg;
  cfg.variant = LearnVariant::FullReg;
  cfg.U = 100.0;
  cfg.r = s == Scenario::CovShift ? 100.0 : 1.0 / std::sqrt(3e-5);
  cfg.model_expectation = ModelExpectation::exact(2000);
  return cfg;
}

inline double default_eps(Scenario s) {
  switch (s) {
    case Scenario::MeanShift: return 0.1;
    case Scenario::CovShift: return 0.2;
    case Scenario::Clean: return 0.0;
  }
  return 0.0;
}

inline std::vector<EstimatorId> default_estimators(Scenario s) {
  if (s == Scenario::CovShift) return {EstimatorId::Stv, EstimatorId::SampleCov, EstimatorId::Kendall};
  return {EstimatorId::Stv, EstimatorId::ComponentwiseMedian, EstimatorId::SampleMean};
}

struct ExperimentConfig {
  Scenario scenario = Scenario::MeanShift;
  Index d = 10;
  Index n = 1000;
  double eps = 0.1;
  int trials = 10;
  std::vector<EstimatorId> estimators = default_estimators(Scenario::MeanShift);
  StvLearnConfig learn = default_learn_config(Scenario::MeanShift);
  std::uint64_t master_seed = 0;
  int threads = 1;
  bool timing = false;  // record wall-clock times (makes output nondeterministic)

  static ExperimentConfig defaults(Scenario s) {
    ExperimentConfig cfg;
    cfg.scenario = s;
    cfg.d = s == Scenario::CovShift ? 5 : 10;
    cfg.n = s == Scenario::CovShift ? 5000 : 1000;
    cfg.eps = default_eps(s);
    cfg.estimators = default_estimators(s);
    cfg.learn = default_learn_config(s);
    return cfg;
  }

  void validate() const {
    if (trials < 1) throw InputError("ExperimentConfig: trials must be >= 1");
    if (n < 2) throw InputError("ExperimentConfig: n must be >= 2");
    if (d < 1) throw InputError("ExperimentConfig: d must be >= 1");
    if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("ExperimentConfig: eps must lie in [0, 1]");
    if (threads < 1) throw InputError("ExperimentConfig: threads must be >= 1");
    if (estimators.empty()) throw InputError("ExperimentConfig: no estimators");
    const bool cov = scenario == Scenario::CovShift;
    for (EstimatorId e : estimators) {
      const bool cov_only = e == EstimatorId::SampleCov || e == EstimatorId::Kendall;
      const bool mean_only = e == EstimatorId::ComponentwiseMedian || e == EstimatorId::SampleMean;
      if ((cov && mean_only) || (!cov && cov_only))
        throw InputError("estimator '" + to_string(e) + "' does not apply to scenario '" + to_string(scenario) + "'");
    }
    learn.validate();
  }
};

struct Aggregate {
  double mean = 0.0, std = 0.0, median = 0.0, mad = 0.0;
  int count = 0;     // finite trials
  int failures = 0;  // trials recorded as missing
};

// Mean, sample standard deviation, median and raw median absolute deviation
// over the finite entries.
inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
    else ++a.failures;
  }
  a.count = static_cast<int>(v.size());
  if (v.empty()) {
    a.mean = a.std = a.median = a.mad = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  auto median_of = [](std::vector<double> w) {
    std::sort(w.begin(), w.end());
    const std::size_t k = w.size();
    return k % 2 ? w[k / 2] : 0.5 * (w[k / 2 - 1] + w[k / 2]);
  };
  a.median = median_of(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - a.median));
  a.mad = median_of(dev);
  return a;
}

struct ExperimentReport {
  Scenario scenario = Scenario::MeanShift;
  Index d = 0, n = 0;
  double eps = 0.0;
  Metric metric = Metric::Euclidean;
  std::vector<EstimatorId> estimators;
  MatrixXd errors;   // trials x estimators, NaN marks a failed fit
  MatrixXd wall_ms;  // trials x estimators, NaN unless timing was on
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> failures;  // "trial t, estimator: message"
  std::vector<Aggregate> aggregates;

  int trials() const { return static_cast<int>(errors.rows()); }

  int column(EstimatorId e) const {
    for (std::size_t j = 0; j < estimators.size(); ++j)
      if (estimators[j] == e) return static_cast<int>(j);
    throw InputError("report has no estimator '" + to_string(e) + "'");
  }

  std::vector<double> column_values(int j) const {
    std::vector<double> v(static_cast<std::size_t>(errors.rows()));
    for (Index t = 0; t < errors.rows(); ++t) v[static_cast<std::size_t>(t)] = errors(t, j);
    return v;
  }

  void recompute_aggregates() {
    aggregates.clear();
    for (int j = 0; j < static_cast<int>(estimators.size()); ++j) aggregates.push_back(aggregate(column_values(j)));
  }

  const Aggregate& of(EstimatorId e) const { return aggregates.at(static_cast<std::size_t>(column(e))); }

  // The headline statistic: mean error (Euclidean) or median error (Frobenius).
  double headline(EstimatorId e) const {
    const Aggregate& a = of(e);
    return metric == Metric::Euclidean ? a.mean : a.median;
  }
};

inline std::uint64_t trial_seed(std::uint64_t master, Scenario s, int trial) {
  return derive_seed(master, {tag_of(to_string(s)), static_cast<std::uint64_t>(trial)});
}

inline ContaminationSpec scenario_spec(Scenario s, Index d, double eps) {
  ContaminationSpec spec = s == Scenario::CovShift ? scenario_cov(d) : scenario_mean(d);
  spec.eps = eps;
  return spec;
}

namespace detail {

// Runs body(i) for i in [0, count) on up to `threads` workers. The first
// exception is rethrown after all workers finish.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline double estimator_error(EstimatorId e, Scenario scenario, const MatrixXd& data, const StvLearnConfig& learn,
                              std::uint64_t seed) {
  const Index d = data.cols();
  if (scenario == Scenario::CovShift) {
    const MatrixXd truth = geometric_covariance(d);
    switch (e) {
      case EstimatorId::Stv: {
        const FitResult fit = fit_stv(data, ModelFamily::gaussian_covariance(d), learn, seed);
        return (fitted_covariance(fit) - truth).norm();
      }
      case EstimatorId::SampleCov: return (baseline_sample_mean_cov(data).cov - truth).norm();
      case EstimatorId::Kendall: return (baseline_kendall_cov(data) - truth).norm();
      default: break;
    }
  } else {
    switch (e) {
      case EstimatorId::Stv: {
        const FitResult fit = fit_stv(data, ModelFamily::gaussian_mean(d), learn, seed);
        return fitted_mean(fit).norm();
      }
      case EstimatorId::ComponentwiseMedian: return baseline_componentwise_median(data).norm();
      case EstimatorId::SampleMean: return data.colwise().mean().norm();
      default: break;
    }
  }
  throw InputError("estimator '" + to_string(e) + "' does not apply to scenario '" + to_string(scenario) + "'");
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.scenario = cfg.scenario;
  rep.d = cfg.d;
  rep.n = cfg.n;
  rep.eps = cfg.eps;
  rep.metric = cfg.scenario == Scenario::CovShift ? Metric::Frobenius : Metric::Euclidean;
  rep.estimators = cfg.estimators;
  const auto k = static_cast<Index>(cfg.estimators.size());
  rep.errors = MatrixXd::Constant(cfg.trials, k, std::numeric_limits<double>::quiet_NaN());
  rep.wall_ms = rep.errors;
  rep.seeds.resize(static_cast<std::size_t>(cfg.trials));
  std::vector<std::vector<std::string>> failures(static_cast<std::size_t>(cfg.trials));
  const ContaminationSpec spec = scenario_spec(cfg.scenario, cfg.d, cfg.eps);

  parallel_for(cfg.trials, cfg.threads, [&](int t) {
    const std::uint64_t seed = trial_seed(cfg.master_seed, cfg.scenario, t);
    rep.seeds[static_cast<std::size_t>(t)] = seed;
    const MatrixXd data = sample_huber(spec, cfg.n, derive_seed(seed, {tag_of("data")})).data;
    for (Index j = 0; j < k; ++j) {
      const EstimatorId e = cfg.estimators[static_cast<std::size_t>(j)];
      const auto started = std::chrono::steady_clock::now();
      try {
        rep.errors(t, j) = estimator_error(e, cfg.scenario, data, cfg.learn, derive_seed(seed, {tag_of(to_string(e))}));
      } catch (const std::exception& ex) {
        failures[static_cast<std::size_t>(t)].push_back("trial " + std::to_string(t) + ", " + to_string(e) + ": " +
                                                        ex.what());
      }
      if (cfg.timing)
        rep.wall_ms(t, j) =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
  });
  for (auto& f : failures) rep.failures.insert(rep.failures.end(), f.begin(), f.end());
  rep.recompute_aggregates();
  return rep;
}

}  // namespace detail

/// Euclidean error of each estimator against the true mean 0, per trial.
inline ExperimentReport run_mean_experiment(const ExperimentConfig& cfg) {
  if (cfg.scenario == Scenario::CovShift) throw InputError("run_mean_experiment: scenario must be mean or clean");
  return detail::run_experiment(cfg);
}

/// Frobenius error of each covariance estimate against Sigma_ij = 2^{-|i-j|}.
inline ExperimentReport run_cov_experiment(const ExperimentConfig& cfg) {
  if (cfg.scenario != Scenario::CovShift) throw InputError("run_cov_experiment: scenario must be cov");
  return detail::run_experiment(cfg);
}

struct RateCheck {
  std::vector<Index> n_grid;
  std::vector<double> stv_errors;     // mean error per n
  std::vector<double> oracle_errors;  // sample mean, same data
  double slope = 0.0;
  double oracle_slope = 0.0;
  std::vector<ExperimentReport> reports;
};

// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("rate undefined: need at least two n values");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i]))
      throw DomainError("rate undefined: errors must be positive and finite");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (!(sxx > 0.0)) throw InputError("rate undefined: n values must differ");
  return sxy / sxx;
}

/// Clean data (eps = 0) over a grid of sample sizes; slope of log mean error
/// against log n for the STV estimator and for the sample mean.
inline RateCheck run_rate_check(Index d, const std::vector<Index>& n_grid, int trials, const StvLearnConfig& learn,
                                std::uint64_t seed, int threads = 1) {
  if (n_grid.size() < 2) throw InputError("rate undefined: need at least two n values");
  RateCheck out;
  out.n_grid = n_grid;
  std::vector<double> xs;
  for (Index n : n_grid) {
    ExperimentConfig cfg = ExperimentConfig::defaults(Scenario::Clean);
    cfg.d = d;
    cfg.n = n;
    cfg.trials = trials;
    cfg.learn = learn;
    cfg.estimators = {EstimatorId::Stv, EstimatorId::SampleMean};
    cfg.master_seed = derive_seed(seed, {tag_of("rate"), static_cast<std::uint64_t>(n)});
    cfg.threads = threads;
    ExperimentReport rep = run_mean_experiment(cfg);
    out.stv_errors.push_back(rep.of(EstimatorId::Stv).mean);
    out.oracle_errors.push_back(rep.of(EstimatorId::SampleMean).mean);
    xs.push_back(static_cast<double>(n));
    out.reports.push_back(std::move(rep));
  }
  out.slope = log_log_slope(xs, out.stv_errors);
  out.oracle_slope = log_log_slope(xs, out.oracle_errors);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline constexpr std::string_view kCsvHeader = "scenario,d,n,eps,estimator,trial,seed,error,wall_ms";

inline std::string to_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (int t = 0; t < rep.trials(); ++t)
    for (std::size_t j = 0; j < rep.estimators.size(); ++j) {
      const auto jj = static_cast<Index>(j);
      os << to_string(rep.scenario) << ',' << rep.d << ',' << rep.n << ',' << format_double(rep.eps) << ','
         << to_string(rep.estimators[j]) << ',' << t << ',' << rep.seeds[static_cast<std::size_t>(t)] << ','
         << format_double(rep.errors(t, jj)) << ',';
      if (std::isfinite(rep.wall_ms(t, jj))) os << format_double(rep.wall_ms(t, jj));
      os << '\n';
    }
  return os.str();
}

inline std::string to_markdown(const ExperimentReport& rep) {
  const bool frob = rep.metric == Metric::Frobenius;
  std::ostringstream os;
  os << "| scenario | d | n | eps |";
  for (EstimatorId e : rep.estimators) os << ' ' << to_string(e) << " |";
  os << "\n|---|---|---|---|";
  for (std::size_t j = 0; j < rep.estimators.size(); ++j) os << "---|";
  os << "\n| " << to_string(rep.scenario) << " | " << rep.d << " | " << rep.n << " | " << rep.eps << " |";
  char buf[64];
  for (const Aggregate& a : rep.aggregates) {
    std::snprintf(buf, sizeof buf, " %.3f (%.3f) |", frob ? a.median : a.mean, frob ? a.mad : a.std);
    os << buf;
  }
  os << "\n\n"
     << (frob ? "Median Frobenius error (median absolute deviation)" : "Mean Euclidean error (standard deviation)")
     << " over " << rep.trials() << " trials.\n";
  if (!rep.failures.empty()) {
    os << "\nFailed fits:\n";
    for (const auto& f : rep.failures) os << "- " << f << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const ExperimentReport& rep) {
  using nlohmann::json;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  json j;
  j["scenario"] = to_string(rep.scenario);
  j["d"] = rep.d;
  j["n"] = rep.n;
  j["eps"] = rep.eps;
  j["metric"] = to_string(rep.metric);
  j["seeds"] = rep.seeds;
  j["failures"] = rep.failures;
  json ests = json::array();
  for (std::size_t k = 0; k < rep.estimators.size(); ++k) {
    const auto kk = static_cast<Index>(k);
    json e;
    e["name"] = to_string(rep.estimators[k]);
    json errs = json::array(), walls = json::array();
    for (int t = 0; t < rep.trials(); ++t) {
      errs.push_back(num(rep.errors(t, kk)));
      walls.push_back(num(rep.wall_ms(t, kk)));
    }
    e["errors"] = errs;
    e["wall_ms"] = walls;
    const Aggregate& a = rep.aggregates[k];
    e["mean"] = num(a.mean);
    e["std"] = num(a.std);
    e["median"] = num(a.median);
    e["mad"] = num(a.mad);
    e["failures"] = a.failures;
    ests.push_back(e);
  }
  j["estimators"] = ests;
  return j;
}

enum class ReportFormat { Csv, Json };

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Csv writes the per-trial CSV to `path` and the markdown summary next to it
/// (same stem, .md extension). Json writes the full report.
inline void emit_report(const ExperimentReport& rep, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Json) {
    write_text(path, to_json(rep).dump(2) + "\n");
    return;
  }
  write_text(path, to_csv(rep));
  std::filesystem::path md = path;
  md.replace_extension(".md");
  if (md != path) write_text(md, to_markdown(rep));
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  return end && *end == '\0';
}

[[noreturn]] inline void csv_error(std::size_t line, const std::string& what) {
  throw InputError("line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

/// Headerless numeric CSV, one sample per row; the row length of the first
/// non-empty line fixes d. Errors name the offending line.
inline MatrixXd parse_data_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row;
    for (const auto& c : cells) {
      double v;
      if (!detail::parse_number(c, v) || !std::isfinite(v)) detail::csv_error(lineno, "not a finite number: '" + c + "'");
      row.push_back(v);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      detail::csv_error(lineno, "expected " + std::to_string(width) + " values, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("data file has no rows");
  MatrixXd X(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return X;
}

inline MatrixXd read_data_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return parse_data_csv(in);
}

/// Rebuilds a report from its CSV form and recomputes the aggregates.
inline ExperimentReport parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) detail::csv_error(1, "unexpected header");
  ExperimentReport rep;
  struct Row {
    int trial;
    std::size_t est;
    double error, wall;
    std::uint64_t seed;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 9) detail::csv_error(lineno, "expected 9 fields");
    try {
      if (first) {
        rep.scenario = parse_scenario(c[0]);
        rep.d = std::stol(c[1]);
        rep.n = std::stol(c[2]);
        rep.eps = std::stod(c[3]);
        rep.metric = rep.scenario == Scenario::CovShift ? Metric::Frobenius : Metric::Euclidean;
        first = false;
      }
      const EstimatorId e = parse_estimator(c[4]);
      auto it = std::find(rep.estimators.begin(), rep.estimators.end(), e);
      if (it == rep.estimators.end()) it = rep.estimators.insert(rep.estimators.end(), e);
      double err = std::numeric_limits<double>::quiet_NaN(), wall = err;
      if (c[7] != "nan" && !detail::parse_number(c[7], err)) detail::csv_error(lineno, "bad error value");
      if (!c[8].empty() && !detail::parse_number(c[8], wall)) detail::csv_error(lineno, "bad wall_ms value");
      rows.push_back({std::stoi(c[5]), static_cast<std::size_t>(it - rep.estimators.begin()), err, wall,
                      std::stoull(c[6])});
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& ex) {
      detail::csv_error(lineno, ex.what());
    }
  }
  int trials = 0;
  for (const Row& r : rows) trials = std::max(trials, r.trial + 1);
  const auto k = static_cast<Index>(rep.estimators.size());
  rep.errors = MatrixXd::Constant(trials, k, std::numeric_limits<double>::quiet_NaN());
  rep.wall_ms = rep.errors;
  rep.seeds.assign(static_cast<std::size_t>(trials), 0);
  for (const Row& r : rows) {
    rep.errors(r.trial, static_cast<Index>(r.est)) = r.error;
    rep.wall_ms(r.trial, static_cast<Index>(r.est)) = r.wall;
    rep.seeds[static_cast<std::size_t>(r.trial)] = r.seed;
  }
  rep.recompute_aggregates();
  return rep;
}

}  // namespace stv
