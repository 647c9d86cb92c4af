// Command-line front end: benchmarks, fitting a data file, and the property
// suite.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stv/stv.hpp"

namespace {

using nlohmann::json;
using stv::ExperimentConfig;
using stv::InputError;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw UsageError("key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x)) throw UsageError("key '" + key + "': expected an integer, got '" + v + "'");
  return static_cast<long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class E>
E pick(const std::string& key, const std::string& v, const std::map<std::string, E>& options) {
  auto it = options.find(v);
  if (it != options.end()) return it->second;
  std::string valid;
  for (const auto& [name, _] : options) valid += (valid.empty() ? "" : ", ") + name;
  throw UsageError("key '" + key + "': unknown value '" + v + "' (valid: " + valid + ")");
}

struct Settings {
  ExperimentConfig exp;
  std::vector<stv::Index> ns{250, 500, 1000, 2000, 4000};
};

using Setter = std::function<void(Settings&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["d"] = [](Settings& s, const std::string& v) { s.exp.d = to_long("d", v); };
    t["n"] = [](Settings& s, const std::string& v) { s.exp.n = to_long("n", v); };
    t["eps"] = [](Settings& s, const std::string& v) { s.exp.eps = to_double("eps", v); };
    t["trials"] = [](Settings& s, const std::string& v) { s.exp.trials = static_cast<int>(to_long("trials", v)); };
    t["seed"] = [](Settings& s, const std::string& v) {
      s.exp.master_seed = static_cast<std::uint64_t>(to_long("seed", v));
    };
    t["threads"] = [](Settings& s, const std::string& v) { s.exp.threads = static_cast<int>(to_long("threads", v)); };
    t["timing"] = [](Settings& s, const std::string& v) { s.exp.timing = to_bool("timing", v); };
    t["estimators"] = [](Settings& s, const std::string& v) {
      s.exp.estimators.clear();
      for (const auto& e : split_list(v)) s.exp.estimators.push_back(stv::parse_estimator(e));
    };
    t["ns"] = [](Settings& s, const std::string& v) {
      s.ns.clear();
      for (const auto& e : split_list(v)) s.ns.push_back(to_long("ns", e));
    };
    t["variant"] = [](Settings& s, const std::string& v) {
      s.exp.learn.variant = pick<stv::LearnVariant>("variant", v,
                                                    {{"hard", stv::LearnVariant::HardConstraint},
                                                     {"additive", stv::LearnVariant::AdditiveReg},
                                                     {"full", stv::LearnVariant::FullReg}});
    };
    t["r"] = [](Settings& s, const std::string& v) { s.exp.learn.r = to_double("r", v); };
    t["U"] = [](Settings& s, const std::string& v) { s.exp.learn.U = to_double("U", v); };
    t["draws"] = [](Settings& s, const std::string& v) { s.exp.learn.model_expectation.draws = to_long("draws", v); };
    t["expectation"] = [](Settings& s, const std::string& v) {
      s.exp.learn.model_expectation.kind =
          pick<stv::ModelExpectation::Kind>("expectation", v,
                                            {{"exact", stv::ModelExpectation::Kind::ExactSampling},
                                             {"importance", stv::ModelExpectation::Kind::ImportanceSampling}});
    };
    t["bias_bound"] = [](Settings& s, const std::string& v) { s.exp.learn.bias_bound = to_double("bias_bound", v); };
    t["init"] = [](Settings& s, const std::string& v) {
      s.exp.learn.init = pick<stv::FitInit>("init", v, {{"zero", stv::FitInit::Zero}, {"robust", stv::FitInit::Robust}});
    };
    t["witness_init_radius"] = [](Settings& s, const std::string& v) {
      s.exp.learn.witness_init_radius = to_double("witness_init_radius", v);
    };
    t["restart_selection"] = [](Settings& s, const std::string& v) {
      s.exp.learn.restart_selection = pick<stv::RestartSelection>(
          "restart_selection", v,
          {{"average", stv::RestartSelection::Average}, {"lowest", stv::RestartSelection::LowestObjective}});
    };
    t["outer_steps"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.outer_steps = static_cast<int>(to_long("outer_steps", v));
    };
    t["inner_steps"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.inner_steps_per_outer = static_cast<int>(to_long("inner_steps", v));
    };
    t["step_outer"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.step_outer = to_double("step_outer", v);
    };
    t["step_inner"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.step_inner = to_double("step_inner", v);
    };
    t["decay"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.decay =
          pick<stv::StepDecay>("decay", v, {{"none", stv::StepDecay::None}, {"invsqrt", stv::StepDecay::InvSqrt}});
    };
    t["warmup"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.warmup = static_cast<int>(to_long("warmup", v));
    };
    t["restarts"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.restarts = static_cast<int>(to_long("restarts", v));
    };
    t["tol"] = [](Settings& s, const std::string& v) { s.exp.learn.optimizer.tol = to_double("tol", v); };
    t["max_wall_ms"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.max_wall_ms = to_long("max_wall_ms", v);
    };
    t["checkpoint_every"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.checkpoint_every = static_cast<int>(to_long("checkpoint_every", v));
    };
    t["inner_rule"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.inner_rule =
          pick<stv::InnerRule>("inner_rule", v, {{"fixed", stv::InnerRule::Fixed}, {"bold", stv::InnerRule::BoldDriver}});
    };
    t["tail_fraction"] = [](Settings& s, const std::string& v) {
      s.exp.learn.optimizer.tail_fraction = to_double("tail_fraction", v);
    };
    return t;
  }();
  return table;
}

std::string valid_keys() {
  std::string out;
  for (const auto& [k, _] : setters()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

void apply(Settings& s, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw UsageError("unknown key '" + key + "'; valid keys: " + valid_keys());
  it->second(s, value);
}

void apply_config_file(Settings& s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file '" + path + "': expected a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& item : value) text += (text.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
    } else if (value.is_number() || value.is_boolean()) {
      text = value.dump();
    } else {
      throw UsageError("config file '" + path + "': key '" + key + "' must be a string, number, boolean or list");
    }
    apply(s, key, text);
  }
}

int default_threads() {
  if (const char* env = std::getenv("STV_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("STV_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    stv::write_text(out, text);
  }
}

// Flags shared by the subcommands; unset optionals leave the settings alone.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long> d, n, trials, threads;
  std::optional<double> eps;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  bool timing = false;

  void attach(CLI::App* app, bool experiment) {
    app->add_option("--config", config, "JSON file of key/value settings (see --set for keys)");
    app->add_option("--set", sets, "Override a setting: key=value (repeatable)");
    app->add_option("--seed", seed, "Master seed; fixes all randomized output");
    app->add_option("--out", out, "Output path (default: standard output)");
    if (!experiment) return;
    app->add_option("--d", d, "Dimension");
    app->add_option("--n", n, "Sample size");
    app->add_option("--eps", eps, "Contamination fraction");
    app->add_option("--trials", trials, "Number of trials");
    app->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    app->add_option("--threads", threads, "Worker threads (default: STV_THREADS or available cores)");
    app->add_flag("--timing", timing, "Record per-fit wall-clock times (output is then not reproducible)");
  }

  Settings resolve(stv::Scenario scenario) const {
    Settings s;
    s.exp = ExperimentConfig::defaults(scenario);
    if (!config.empty()) apply_config_file(s, config);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
      apply(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (d) s.exp.d = *d;
    if (n) s.exp.n = *n;
    if (eps) s.exp.eps = *eps;
    if (trials) s.exp.trials = static_cast<int>(*trials);
    if (seed) s.exp.master_seed = *seed;
    if (timing) s.exp.timing = true;
    s.exp.threads = threads ? static_cast<int>(*threads) : (s.exp.threads > 1 ? s.exp.threads : default_threads());
    return s;
  }
};

int run_bench(const CommonFlags& flags, stv::Scenario scenario) {
  Settings s = flags.resolve(scenario);
  if (scenario == stv::Scenario::MeanShift && s.exp.eps == 0.0) s.exp.scenario = stv::Scenario::Clean;
  const stv::ExperimentReport rep =
      scenario == stv::Scenario::CovShift ? stv::run_cov_experiment(s.exp) : stv::run_mean_experiment(s.exp);
  if (flags.format == "json") {
    write_or_print(flags.out, stv::to_json(rep).dump(2) + "\n");
  } else if (flags.out.empty()) {
    std::cout << stv::to_csv(rep);
  } else {
    stv::emit_report(rep, flags.out, stv::ReportFormat::Csv);
  }
  std::cerr << stv::to_markdown(rep);
  return 0;
}

int run_rate(const CommonFlags& flags, const std::vector<long>& ns) {
  Settings s = flags.resolve(stv::Scenario::Clean);
  if (!ns.empty()) s.ns.assign(ns.begin(), ns.end());
  const stv::RateCheck rc = stv::run_rate_check(s.exp.d, s.ns, s.exp.trials, s.exp.learn, s.exp.master_seed, s.exp.threads);
  if (flags.format == "json") {
    json j;
    j["d"] = s.exp.d;
    j["n"] = rc.n_grid;
    j["stv_mean_error"] = rc.stv_errors;
    j["sample_mean_error"] = rc.oracle_errors;
    j["stv_slope"] = rc.slope;
    j["sample_mean_slope"] = rc.oracle_slope;
    write_or_print(flags.out, j.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "n,estimator,mean_error\n";
    for (std::size_t i = 0; i < rc.n_grid.size(); ++i) {
      os << rc.n_grid[i] << ",stv," << stv::format_double(rc.stv_errors[i]) << '\n';
      os << rc.n_grid[i] << ",sample_mean," << stv::format_double(rc.oracle_errors[i]) << '\n';
    }
    write_or_print(flags.out, os.str());
  }
  std::cerr << "slope stv " << rc.slope << ", sample mean " << rc.oracle_slope << '\n';
  return 0;
}

int run_fit(const CommonFlags& flags, const std::string& model, const std::string& data_path) {
  const stv::Scenario scenario = model == "cov" ? stv::Scenario::CovShift : stv::Scenario::MeanShift;
  Settings s = flags.resolve(scenario);
  const stv::MatrixXd data = stv::read_data_csv(data_path);
  const stv::Index d = data.cols();
  const stv::ModelFamily family =
      model == "cov" ? stv::ModelFamily::gaussian_covariance(d) : stv::ModelFamily::gaussian_mean(d);
  const stv::FitResult fit = stv::fit_stv(data, family, s.exp.learn, s.exp.master_seed);

  json j;
  j["model"] = model;
  j["d"] = d;
  j["n"] = data.rows();
  const stv::GaussianParams g = stv::to_gaussian(fit.model());
  std::vector<double> mean(g.mean.data(), g.mean.data() + g.mean.size());
  if (model == "mean") {
    j["f_hat"] = mean;
  } else {
    json F = json::array(), cov = json::array();
    const stv::MatrixXd P = fit.model().precision_offset();
    for (stv::Index i = 0; i < d; ++i) {
      std::vector<double> frow(static_cast<std::size_t>(d)), crow(static_cast<std::size_t>(d));
      for (stv::Index k = 0; k < d; ++k) {
        frow[static_cast<std::size_t>(k)] = P(i, k);
        crow[static_cast<std::size_t>(k)] = g.cov(i, k);
      }
      F.push_back(frow);
      cov.push_back(crow);
    }
    j["F"] = F;
    j["cov"] = cov;
  }
  const stv::VectorXd u = fit.witness.u.features();
  j["witness"] = {{"u", std::vector<double>(u.data(), u.data() + u.size())}, {"b", fit.witness.b}};
  j["final_objective"] = fit.objective_trace.empty() ? 0.0 : fit.objective_trace.back();
  j["restart_values"] = fit.diagnostics.restart_values;
  j["messages"] = fit.diagnostics.messages;
  j["seed"] = s.exp.master_seed;
  write_or_print(flags.out, j.dump(2) + "\n");
  return 0;
}

int run_verify(std::uint64_t seed) {
  bool all = true;
  for (const stv::PropertyResult& r : stv::run_property_suite(seed)) {
    std::printf("%s  %s  [%s] (%.2f s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
    all = all && r.passed;
  }
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust estimation with the smoothed total variation distance"};
  app.require_subcommand(1);

  CommonFlags mean_flags, cov_flags, rate_flags, fit_flags;
  auto* mean = app.add_subcommand("mean-bench", "Contaminated Gaussian mean benchmark");
  mean_flags.attach(mean, true);
  auto* cov = app.add_subcommand("cov-bench", "Contaminated Gaussian covariance benchmark");
  cov_flags.attach(cov, true);

  auto* rate = app.add_subcommand("rate-check", "Error-vs-n slope on clean data");
  rate_flags.attach(rate, true);
  std::vector<long> ns;
  rate->add_option("--ns", ns, "Sample sizes (comma separated)")->delimiter(',');

  auto* fit = app.add_subcommand("fit", "Fit a Gaussian model to a headerless CSV file");
  fit_flags.attach(fit, false);
  std::string model = "mean", data_path;
  fit->add_option("--model", model, "Model family")->check(CLI::IsMember({"mean", "cov"}));
  fit->add_option("--data", data_path, "Data file: one sample per row")->required();

  auto* verify = app.add_subcommand("verify", "Run the property suite; nonzero exit on any failure");
  std::uint64_t verify_seed = 1;
  verify->add_option("--seed", verify_seed, "Seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*mean) return run_bench(mean_flags, stv::Scenario::MeanShift);
    if (*cov) return run_bench(cov_flags, stv::Scenario::CovShift);
    if (*rate) return run_rate(rate_flags, ns);
    if (*fit) return run_fit(fit_flags, model, data_path);
    if (*verify) return run_verify(verify_seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const stv::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const stv::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const stv::UnsupportedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
