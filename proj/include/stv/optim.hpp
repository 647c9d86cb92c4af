#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "stv/errors.hpp"

namespace stv {

enum class StepDecay { None, InvSqrt };

// Fixed: y += step_inner * decay(t) * grad.
// BoldDriver: the inner step grows by 1.2 after an ascent step that raises
// the objective and halves (rejecting the step) otherwise; it persists
// across outer steps.
enum class InnerRule { Fixed, BoldDriver };

struct GdaConfig {
  int outer_steps = 2000;
  int inner_steps_per_outer = 5;
  double step_outer = 0.02;
  double step_inner = 0.05;
  StepDecay decay = StepDecay::InvSqrt;
  int warmup = 200;  // steps before the 1/sqrt(t) decay starts
  int restarts = 4;
  double tol = 0.0;  // 0 disables early stopping
  std::optional<long> max_wall_ms;
  // Iterates and outer values are averaged over windows of this many outer
  // steps; the best window is returned.
  int checkpoint_every = 50;
  InnerRule inner_rule = InnerRule::Fixed;
  // Fraction of the final outer steps averaged into GdaResult::tail.
  double tail_fraction = 0.5;

  void validate() const {
    if (outer_steps < 1) throw InputError("GdaConfig: outer_steps must be >= 1");
    if (inner_steps_per_outer < 0) throw InputError("GdaConfig: inner_steps_per_outer must be >= 0");
    if (!(step_outer > 0.0) || !(step_inner > 0.0)) throw InputError("GdaConfig: step sizes must be > 0");
    if (restarts < 1) throw InputError("GdaConfig: restarts must be >= 1");
    if (warmup < 0 || checkpoint_every < 1) throw InputError("GdaConfig: bad warmup/checkpoint_every");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw InputError("GdaConfig: tail_fraction must lie in (0, 1]");
    if (tol < 0.0) throw InputError("GdaConfig: tol must be >= 0");
  }

  double decay_factor(int t) const {
    if (decay == StepDecay::None || t < warmup || t == 0) return 1.0;
    return std::sqrt(static_cast<double>(std::max(warmup, 1)) / static_cast<double>(t));
  }
};

struct MinimaxEval {
  double value = 0.0;
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_y;
};

// min over x, max over y.
template <class O>
concept MinimaxObjective = requires(O& o, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  { o.evaluate(x, y) } -> std::same_as<MinimaxEval>;
};

template <class O>
concept HasOuterHook = requires(O& o, int t) { o.begin_outer(t); };

template <class O>
concept HasFeasibility = requires(const O& o, const Eigen::VectorXd& x) {
  { o.feasible_x(x) } -> std::convertible_to<bool>;
};

struct Identity {
  Eigen::VectorXd operator()(const Eigen::VectorXd& v) const { return v; }
};

struct IterateAverage {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double value = 0.0;
  int steps = 0;
};

struct GdaResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double value = 0.0;                     // smoothed outer value at the returned checkpoint
  IterateAverage tail;                    // average over the final tail_fraction of outer steps
  std::vector<double> trace;              // outer value at every outer step
  std::vector<double> checkpoint_values;  // smoothed values, one per window
  int iterations = 0;
  bool truncated = false;  // wall-clock budget exhausted
  bool converged = false;  // early stop on gradient norms
};

namespace detail {

inline bool finite(const MinimaxEval& e) {
  return std::isfinite(e.value) && e.grad_x.allFinite() && e.grad_y.allFinite();
}

[[noreturn]] inline void throw_non_finite(const char* where, int step, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y) {
  std::ostringstream os;
  os << "gda_minimax: non-finite objective or gradient (" << where << ", outer step " << step
     << "); last x = [";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x.size(), 8); ++i) os << (i ? ", " : "") << x(i);
  os << (x.size() > 8 ? ", ..." : "") << "], |y| = " << y.norm();
  throw NumericError(os.str());
}

}  // namespace detail

/// Alternating projected gradient descent-ascent, inner (ascent) first.
///
/// Each outer step runs `inner_steps_per_outer` ascent steps on y, then one
/// descent step on x. When the objective exposes `feasible_x`, an infeasible
/// descent step is halved until it becomes feasible (at most 40 times, after
/// which x is left unchanged). An objective may expose `begin_outer(t)` to
/// refresh stochastic state at the start of each outer step.
template <MinimaxObjective Objective, class ProjectX = Identity, class ProjectY = Identity>
GdaResult gda_minimax(Objective& objective, Eigen::VectorXd x, Eigen::VectorXd y, const GdaConfig& cfg,
                      ProjectX project_x = {}, ProjectY project_y = {}) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();

  x = project_x(x);
  y = project_y(y);

  GdaResult out;
  out.trace.reserve(static_cast<std::size_t>(cfg.outer_steps));

  Eigen::VectorXd sum_x = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd sum_y = Eigen::VectorXd::Zero(y.size());
  double sum_value = 0.0;
  int window = 0;
  double best = std::numeric_limits<double>::infinity();
  int calm_steps = 0;
  double bold_step = cfg.step_inner;
  const int tail_start =
      cfg.outer_steps - std::max(1, static_cast<int>(std::lround(cfg.tail_fraction * cfg.outer_steps)));
  out.tail.x = Eigen::VectorXd::Zero(x.size());
  out.tail.y = Eigen::VectorXd::Zero(y.size());

  auto close_window = [&] {
    if (window == 0) return;
    const double avg = sum_value / window;
    out.checkpoint_values.push_back(avg);
    if (avg < best || out.x.size() == 0) {
      best = avg;
      out.x = sum_x / window;
      out.y = sum_y / window;
      out.value = avg;
    }
    sum_x.setZero();
    sum_y.setZero();
    sum_value = 0.0;
    window = 0;
  };

  for (int t = 0; t < cfg.outer_steps; ++t) {
    if constexpr (HasOuterHook<Objective>) objective.begin_outer(t);
    const double factor = cfg.decay_factor(t);
    const double eta_in = cfg.step_inner * factor;
    const double eta_out = cfg.step_outer * factor;

    double y_move = 0.0;
    if (cfg.inner_rule == InnerRule::Fixed) {
      for (int k = 0; k < cfg.inner_steps_per_outer; ++k) {
        const MinimaxEval e = objective.evaluate(x, y);
        if (!detail::finite(e)) detail::throw_non_finite("inner", t, x, y);
        Eigen::VectorXd y_next = project_y(Eigen::VectorXd(y + eta_in * e.grad_y));
        y_move = (y_next - y).norm() / eta_in;
        y = std::move(y_next);
      }
    } else if (cfg.inner_steps_per_outer > 0) {
      MinimaxEval e = objective.evaluate(x, y);
      if (!detail::finite(e)) detail::throw_non_finite("inner", t, x, y);
      for (int k = 0; k < cfg.inner_steps_per_outer; ++k) {
        Eigen::VectorXd y_next = project_y(Eigen::VectorXd(y + bold_step * e.grad_y));
        MinimaxEval e_next = objective.evaluate(x, y_next);
        y_move = (y_next - y).norm() / bold_step;
        if (detail::finite(e_next) && e_next.value >= e.value) {
          y = std::move(y_next);
          e = std::move(e_next);
          bold_step = std::min(bold_step * 1.2, cfg.step_inner * 1e6);
        } else {
          bold_step = std::max(bold_step * 0.5, cfg.step_inner * 1e-6);
        }
      }
    }

    const MinimaxEval e = objective.evaluate(x, y);
    if (!detail::finite(e)) detail::throw_non_finite("outer", t, x, y);
    out.trace.push_back(e.value);
    sum_x += x;
    sum_y += y;
    sum_value += e.value;
    ++window;
    if (window == cfg.checkpoint_every) close_window();
    if (t >= tail_start) {
      out.tail.x += x;
      out.tail.y += y;
      out.tail.value += e.value;
      ++out.tail.steps;
    }

    double step = eta_out;
    Eigen::VectorXd x_next = project_x(Eigen::VectorXd(x - step * e.grad_x));
    if constexpr (HasFeasibility<Objective>) {
      int halvings = 0;
      while (!objective.feasible_x(x_next) && halvings < 40) {
        step *= 0.5;
        x_next = project_x(Eigen::VectorXd(x - step * e.grad_x));
        ++halvings;
      }
      if (!objective.feasible_x(x_next)) x_next = x;
    }
    const double x_move = (x_next - x).norm() / eta_out;
    x = std::move(x_next);
    out.iterations = t + 1;

    if (cfg.tol > 0.0) {
      if (cfg.inner_steps_per_outer == 0) {
        const MinimaxEval ey = objective.evaluate(x, y);
        y_move = (project_y(Eigen::VectorXd(y + ey.grad_y)) - y).norm();
      }
      calm_steps = (x_move < cfg.tol && y_move < cfg.tol) ? calm_steps + 1 : 0;
      if (calm_steps >= 10) {
        out.converged = true;
        break;
      }
    }
    if (cfg.max_wall_ms) {
      const auto elapsed =
          std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
      if (elapsed > *cfg.max_wall_ms) {
        out.truncated = true;
        break;
      }
    }
  }
  close_window();
  if (out.tail.steps == 0) {
    // Stopped before the tail began; fall back to the last iterate.
    out.tail = {x, y, out.trace.empty() ? 0.0 : out.trace.back(), 0};
  } else {
    const double k = out.tail.steps;
    out.tail.x /= k;
    out.tail.y /= k;
    out.tail.value /= k;
  }
  return out;
}

struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Largest |fd_i - g_i| / (1 + |g_i|) over coordinates, where fd is the
/// central difference with the given step and g the analytic gradient.
template <class Fn>
  requires requires(Fn& fn, const Eigen::VectorXd& p) {
    { fn(p) } -> std::convertible_to<ValueGrad>;
  }
double finite_diff_check(Fn&& fn, const Eigen::VectorXd& point, double step) {
  if (!(step > 0.0)) throw InputError("finite_diff_check: step must be positive");
  const ValueGrad at = fn(point);
  if (at.grad.size() != point.size()) throw InputError("finite_diff_check: gradient size mismatch");
  double worst = 0.0;
  Eigen::VectorXd probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + step;
    const double up = fn(probe).value;
    probe(i) = point(i) - step;
    const double down = fn(probe).value;
    probe(i) = point(i);
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - at.grad(i)) / (1.0 + std::abs(at.grad(i))));
  }
  return worst;
}

}  // namespace stv
