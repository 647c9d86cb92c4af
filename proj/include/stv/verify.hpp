#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stv/divergences.hpp"
#include "stv/estimators.hpp"
#include "stv/importance.hpp"
#include "stv/kernels.hpp"
#include "stv/models.hpp"
#include "stv/optim.hpp"
#include "stv/random.hpp"

namespace stv {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

template <class Fn>
PropertyResult timed(std::string name, Fn&& fn) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r = fn();
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// N(mean, 1) on a uniform grid, weights proportional to the density.
inline WeightedSample gaussian_quadrature(double mean, const VectorXd& grid) {
  WeightedSample s;
  s.points = grid;
  s.weights = (-0.5 * (grid.array() - mean).square()).exp().matrix();
  s.weights /= s.weights.sum();
  return s;
}

}  // namespace detail

/// sup_{t >= 1} sigma(-c log t)(t - 1) <= 1/c on a fine log grid.
inline PropertyResult check_decay_rate(const std::vector<double>& cs = {1.5, 2.0, 5.0, 10.0, 100.0}) {
  return detail::timed("decay rate of the sigmoid is at most 1/c", [&] {
    const std::vector<double> grid = log_spaced_grid(1e8, 200001);
    PropertyResult r;
    int violations = 0;
    std::ostringstream os;
    for (double c : cs) {
      const DecayCheck dc = decay_rate_check(sigmoid(), c, grid);
      if (dc.sup_value > dc.bound) ++violations;
      os << "c=" << c << ": sup " << dc.sup_value << " (bound " << dc.bound << ") ";
    }
    r.passed = violations == 0;
    os << "violations " << violations;
    r.detail = os.str();
    return r;
  });
}

/// Random 1-D Gaussian mean pairs: 0 <= TV - STV <= |f - g| / U + slack for
/// U in {2, 5, 10, 50} |f - g|. The laws are represented by quadrature
/// weights on a fine grid, so the witness solver sees the populations.
inline PropertyResult check_stv_tv_gap(std::uint64_t seed, int pairs = 20, double slack = 0.02,
                                       double required_fraction = 0.95) {
  return detail::timed("0 <= TV - STV <= |f - g| / U", [&] {
    RandomStream rng = make_stream(seed, "stv_tv_gap");
    int ok = 0, total = 0;
    double worst_low = std::numeric_limits<double>::infinity(), worst_high = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < pairs; ++p) {
      const double a = 3.0 * (2.0 * rng.uniform() - 1.0);
      const double b = a + (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.2 + 2.8 * rng.uniform());
      const double dist = std::abs(a - b);
      const VectorXd grid = VectorXd::LinSpaced(4001, std::min(a, b) - 10.0, std::max(a, b) + 10.0);
      const WeightedSample P = detail::gaussian_quadrature(a, grid), Q = detail::gaussian_quadrature(b, grid);
      const double tv = tv_gaussian_mean(VectorXd::Constant(1, a), VectorXd::Constant(1, b));
      for (double mult : {2.0, 5.0, 10.0, 50.0}) {
        StvConfig cfg;
        cfg.U = mult * dist;
        cfg.kernel = KernelSpec::linear(1);
        const double stv = stv_between_samples(P, Q, cfg, derive_seed(seed, {static_cast<std::uint64_t>(p)})).value;
        const double gap = tv - stv;
        const double allowed = dist / cfg.U + slack;
        worst_low = std::min(worst_low, gap);
        worst_high = std::max(worst_high, gap - allowed);
        ok += gap >= 0.0 && gap <= allowed;
        ++total;
      }
    }
    PropertyResult r;
    r.passed = ok >= required_fraction * total;
    std::ostringstream os;
    os << ok << "/" << total << " within bounds; min gap " << worst_low << ", max excess over bound " << worst_high;
    r.detail = os.str();
    return r;
  });
}

/// Step link: the best threshold witness over sign(u) and a 2001-point b grid
/// reproduces the closed-form TV between N(a, 1) and N(b, 1).
inline PropertyResult check_step_witness_tv(std::uint64_t seed, int pairs = 10, double tol = 1e-3) {
  return detail::timed("step-link witness grid reproduces TV", [&] {
    RandomStream rng = make_stream(seed, "step_tv");
    double worst = 0.0;
    for (int p = 0; p < pairs; ++p) {
      const double a = 4.0 * (2.0 * rng.uniform() - 1.0);
      const double b = 4.0 * (2.0 * rng.uniform() - 1.0);
      const double lo = std::min(a, b) - 6.0, hi = std::max(a, b) + 6.0;
      double best = 0.0;
      for (int sign : {1, -1}) {
        for (int k = 0; k < 2001; ++k) {
          const double thr = lo + (hi - lo) * k / 2000.0;
          // P(sign * X - sign * thr >= 0) for X ~ N(m, 1).
          auto mass = [&](double m) { return sign > 0 ? 1.0 - normal_cdf(thr - m) : normal_cdf(thr - m); };
          best = std::max(best, std::abs(mass(a) - mass(b)));
        }
      }
      const double tv = tv_gaussian_mean(VectorXd::Constant(1, a), VectorXd::Constant(1, b));
      worst = std::max(worst, std::abs(best - tv));
    }
    PropertyResult r;
    r.passed = worst <= tol;
    std::ostringstream os;
    os << "max |grid - TV| = " << worst << " over " << pairs << " pairs";
    r.detail = os.str();
    return r;
  });
}

/// Central differences of the learning objective in (f, u, b) jointly, with
/// importance-sampled model expectations, for the mean, covariance and rbf
/// families and all three variants. Exact-sampling objectives are checked in
/// (u, b) only, since their f-gradient is a score-function estimate.
inline PropertyResult check_objective_gradients(std::uint64_t seed, int points = 20, double step = 1e-5,
                                                double tol = 1e-4) {
  return detail::timed("learning-objective gradients match finite differences", [&] {
    RandomStream rng = make_stream(seed, "gradient_check");
    double worst = 0.0;
    const Index d = 2, n = 40, ell = 120;
    const LearnVariant variants[] = {LearnVariant::HardConstraint, LearnVariant::AdditiveReg, LearnVariant::FullReg};
    for (int p = 0; p < points; ++p) {
      MatrixXd data = rng.normal_matrix(n, d);
      data.col(0).array() += 1.0;
      StvLearnConfig cfg;
      cfg.variant = variants[p % 3];
      cfg.r = 2.0;
      cfg.U = 3.0;
      const int family = p % 4;
      ModelFamily fam = family == 0   ? ModelFamily::gaussian_mean(d)
                        : family == 1 ? ModelFamily::gaussian_covariance(d)
                        : family == 2 ? ModelFamily::general(KernelSpec::rbf(d, 1.0), BaseMeasure::std_normal(d))
                                      : ModelFamily::gaussian_mean(d);
      const bool exact = family == 3;
      cfg.model_expectation = exact ? ModelExpectation::exact(150) : ModelExpectation::importance(ell);
      const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(p)});
      detail::StvLearningObjective obj(data, fam, cfg, s);
      obj.use_euclidean_gradients(true);
      const Index px = obj.x_size(), py = obj.y_size();

      VectorXd x = 0.3 * rng.normal_vector(px);
      if (family == 1) {
        MatrixXd F = Eigen::Map<MatrixXd>(x.data(), d, d);
        F = 0.5 * (F + F.transpose());
        x = Eigen::Map<VectorXd>(F.data(), d * d);
      }
      VectorXd y = rng.normal_vector(py);
      y(py - 1) = 0.5 * rng.normal();

      if (exact) {
        auto fn = [&](const VectorXd& v) { const MinimaxEval e = obj.evaluate(x, v); return ValueGrad{e.value, e.grad_y}; };
        worst = std::max(worst, finite_diff_check(fn, y, step));
      } else {
        auto fn = [&](const VectorXd& v) {
          const MinimaxEval e = obj.evaluate(v.head(px), v.tail(py));
          VectorXd g(px + py);
          g << e.grad_x, e.grad_y;
          return ValueGrad{e.value, g};
        };
        VectorXd joint(px + py);
        joint << x, y;
        worst = std::max(worst, finite_diff_check(fn, joint, step));
      }
    }
    PropertyResult r;
    r.passed = worst < tol;
    std::ostringstream os;
    os << "max relative error " << worst << " over " << points << " points";
    r.detail = os.str();
    return r;
  });
}

/// Mean model in d = 2 with ||f|| = 1: self-normalized importance estimates of
/// E sigma(u - b) against exact-sampling estimates, both with 1e5 draws,
/// agree within 3 combined standard errors.
inline PropertyResult check_importance_consistency(std::uint64_t seed, int reps = 20, Index draws = 100000,
                                                   double required_fraction = 0.95) {
  return detail::timed("importance sampling agrees with exact sampling", [&] {
    RandomStream rng = make_stream(seed, "is_consistency");
    const Index d = 2;
    const KernelSpec k = KernelSpec::linear(d);
    int ok = 0;
    double worst_z = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const VectorXd v = rng.unit_vector(d);
      const KernelExpFamilyModel model = KernelExpFamilyModel::gaussian_mean(v);
      const RkhsFunction u = RkhsFunction::from_vector(k, 2.0 * rng.normal_vector(d));
      const double b = rng.normal();
      const SigmaFunction sig = sigmoid();
      const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(rep)});

      const ModelSide side = proposal_draws(model.base(), model.base(), draws, derive_seed(s, {tag_of("is")}));
      const VectorXd w = softmax_weights(model.f(), side.Z, side.log_q);
      const VectorXd hz = u.evaluate_rows(side.Z).unaryExpr([&](double z) { return sig(z - b); });
      const double is_est = approx_model_expectation(model.f(), u, b, side.Z, side.log_q, sig);
      const double is_se = std::sqrt((w.array().square() * (hz.array() - is_est).square()).sum());

      const MatrixXd X = sample_model(model, draws, derive_seed(s, {tag_of("exact")}));
      const VectorXd hx = u.evaluate_rows(X).unaryExpr([&](double z) { return sig(z - b); });
      const double ex_est = hx.mean();
      const double ex_se =
          std::sqrt((hx.array() - ex_est).square().sum() / static_cast<double>(draws - 1) / static_cast<double>(draws));

      const double se = std::sqrt(is_se * is_se + ex_se * ex_se);
      const double z = se > 0.0 ? std::abs(is_est - ex_est) / se : 0.0;
      worst_z = std::max(worst_z, z);
      ok += z <= 3.0;
    }
    PropertyResult r;
    r.passed = ok >= required_fraction * reps;
    std::ostringstream os;
    os << ok << "/" << reps << " within 3 standard errors; largest |z| " << worst_z;
    r.detail = os.str();
    return r;
  });
}

inline std::vector<PropertyResult> run_property_suite(std::uint64_t seed) {
  return {check_decay_rate(), check_stv_tv_gap(derive_seed(seed, {tag_of("gap")})),
          check_step_witness_tv(derive_seed(seed, {tag_of("step")})),
          check_objective_gradients(derive_seed(seed, {tag_of("grad")})),
          check_importance_consistency(derive_seed(seed, {tag_of("is")}))};
}

}  // namespace stv
