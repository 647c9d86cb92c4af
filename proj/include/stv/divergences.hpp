#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stv/errors.hpp"
#include "stv/importance.hpp"
#include "stv/kernels.hpp"
#include "stv/models.hpp"
#include "stv/optim.hpp"
#include "stv/random.hpp"

namespace stv {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

enum class SigmaKind { Sigmoid, Step, Identity };

/// The link applied to witness scores. The sigmoid is evaluated as
/// 1 - s(-z) for z < 0 so that sigma(z) + sigma(-z) == 1 holds exactly in
/// floating point; the price is that sigma(z) rounds to 0 below z ~ -37.
struct SigmaFunction {
  SigmaKind kind = SigmaKind::Sigmoid;

  double operator()(double z) const {
    switch (kind) {
      case SigmaKind::Sigmoid:
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : 1.0 - 1.0 / (1.0 + std::exp(z));
      case SigmaKind::Step: return z >= 0.0 ? 1.0 : 0.0;
      case SigmaKind::Identity: return z;
    }
    return 0.0;
  }

  double derivative(double z) const {
    switch (kind) {
      case SigmaKind::Sigmoid: {
        const double e = std::exp(-std::abs(z));
        return e / ((1.0 + e) * (1.0 + e));
      }
      case SigmaKind::Step: return 0.0;
      case SigmaKind::Identity: return 1.0;
    }
    return 0.0;
  }

  // sigma(z) + sigma(-z) == 1.
  bool antisymmetric() const { return kind != SigmaKind::Identity; }
};

inline SigmaFunction sigmoid() { return {SigmaKind::Sigmoid}; }
inline SigmaFunction step_function() { return {SigmaKind::Step}; }

inline GdaConfig default_witness_solver() {
  GdaConfig c;
  c.outer_steps = 300;  // ascent iterations per restart
  c.step_inner = 0.05;  // initial step, adapted during the ascent
  c.restarts = 8;
  return c;
}

/// Discriminator class {sigma(u - b) : ||u|| <= U, |b| <= bias_bound}.
///
/// The witness is found by projected gradient ascent from `inner.restarts`
/// starting points, running `inner.outer_steps` iterations each from an
/// initial step `inner.step_inner` that grows by 1.2 on improving steps and
/// halves on rejected ones.
struct StvConfig {
  SigmaFunction sigma{};
  double U = 1.0;
  double bias_bound = std::numeric_limits<double>::infinity();
  KernelSpec kernel{};
  GdaConfig inner = default_witness_solver();

  void validate() const {
    if (!(U > 0.0) || !std::isfinite(U)) throw InputError("StvConfig: U must be positive and finite");
    if (!(bias_bound > 0.0)) throw InputError("StvConfig: bias_bound must be positive");
    kernel.validated();
    inner.validate();
  }
};

/// Points (one per row) with nonnegative weights summing to one.
struct WeightedSample {
  MatrixXd points;
  VectorXd weights;

  static WeightedSample uniform(MatrixXd points) {
    const Index n = points.rows();
    if (n < 1) throw InputError("WeightedSample: empty sample");
    VectorXd w = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    return {std::move(points), std::move(w)};
  }

  void validate(const char* what) const {
    if (points.rows() < 1) throw InputError(std::string(what) + ": sample set is empty");
    if (weights.size() != points.rows())
      throw InputError(std::string(what) + ": weights and points differ in length");
    if ((weights.array() < 0.0).any()) throw InputError(std::string(what) + ": negative weight");
    if (std::abs(weights.sum() - 1.0) > 1e-9) throw InputError(std::string(what) + ": weights must sum to 1");
  }
};

struct Witness {
  RkhsFunction u;
  double b = 0.0;
};

struct StvResult {
  double value = 0.0;
  Witness witness;
  std::vector<double> restart_values;
  std::vector<std::string> diagnostics;
};

namespace detail {

inline double weighted_median(const VectorXd& values, const VectorXd& weights) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
  const double half = 0.5 * weights.sum();
  double acc = 0.0;
  for (Index i : order) {
    acc += weights(i);
    if (acc >= half) return values(i);
  }
  return values(order.back());
}

// Maximizes sum_i g_i sigma(s_i - b) over theta (scores s = design theta) and b.
class WitnessAscent {
 public:
  WitnessAscent(const EvaluationBasis& basis, VectorXd signed_weights, const StvConfig& cfg)
      : basis_(basis), g_(std::move(signed_weights)), cfg_(cfg) {}

  double objective(const VectorXd& scores, double b) const {
    double acc = 0.0;
    for (Index i = 0; i < scores.size(); ++i) acc += g_(i) * cfg_.sigma(scores(i) - b);
    return acc;
  }

  struct Point {
    VectorXd theta;
    double b = 0.0;
    double value = 0.0;
  };

  Point run(VectorXd theta, double b) const {
    theta = basis_.project(theta, cfg_.U);
    b = clamp_b(b);
    VectorXd s = basis_.values(theta);
    double value = objective(s, b);
    if (!std::isfinite(value)) throw NumericError("stv witness ascent: non-finite objective at start");
    double eta = cfg_.inner.step_inner;
    if (cfg_.sigma.kind != SigmaKind::Step) {
      VectorXd slope(s.size());
      for (int it = 0; it < cfg_.inner.outer_steps && eta > 1e-14; ++it) {
        double grad_b = 0.0;
        for (Index i = 0; i < s.size(); ++i) {
          slope(i) = g_(i) * cfg_.sigma.derivative(s(i) - b);
          grad_b -= slope(i);
        }
        const VectorXd grad_theta = basis_.functional_gradient(slope);
        const VectorXd theta_next = basis_.project(theta + eta * grad_theta, cfg_.U);
        const double b_next = clamp_b(b + eta * grad_b);
        const VectorXd s_next = basis_.values(theta_next);
        const double next = objective(s_next, b_next);
        if (!std::isfinite(next)) {
          std::ostringstream os;
          os << "stv witness ascent diverged at iteration " << it << " (step " << eta
             << ", |theta| = " << theta_next.norm() << ", b = " << b_next << ")";
          throw NumericError(os.str());
        }
        if (next >= value) {
          theta = theta_next;
          b = b_next;
          s = s_next;
          value = next;
          eta *= 1.2;
        } else {
          eta *= 0.5;
        }
      }
    }
    if (cfg_.sigma.kind == SigmaKind::Step) {
      const auto [best_b, best_value] = best_threshold(s);
      if (best_value > value) {
        b = best_b;
        value = best_value;
      }
    }
    return {std::move(theta), b, value};
  }

  // Exact maximization over b of sum_i g_i 1[s_i >= b], |b| <= bias_bound.
  std::pair<double, double> best_threshold(const VectorXd& s) const {
    std::vector<Index> order(static_cast<std::size_t>(s.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index c) { return s(a) > s(c); });
    const double B = cfg_.bias_bound;
    double best_b = B, acc = 0.0, best = 0.0;
    // b = B keeps every score >= B.
    std::size_t i = 0;
    while (i < order.size() && s(order[i]) >= B) acc += g_(order[i++]);
    best = acc;
    while (i < order.size()) {
      const double level = s(order[i]);
      if (level < -B) break;
      while (i < order.size() && s(order[i]) == level) acc += g_(order[i++]);
      if (acc > best) {
        best = acc;
        best_b = level;
      }
    }
    double all = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k)
      if (s(order[k]) >= -B) all += g_(order[k]);
    if (all > best) {
      best = all;
      best_b = -B;
    }
    // An unbounded threshold means "include nothing" or "include everything".
    if (best_b == std::numeric_limits<double>::infinity()) best_b = s.maxCoeff() + 1.0;
    if (best_b == -std::numeric_limits<double>::infinity()) best_b = s.minCoeff();
    return {best_b, best};
  }

  double clamp_b(double b) const { return std::clamp(b, -cfg_.bias_bound, cfg_.bias_bound); }

 private:
  const EvaluationBasis& basis_;
  VectorXd g_;
  const StvConfig& cfg_;
};

inline VectorXd scale_to_norm(const EvaluationBasis& basis, VectorXd theta, double radius) {
  const double nrm = basis.norm(theta);
  if (!(nrm > 0.0)) return VectorXd::Zero(theta.size());
  return theta * (radius / nrm);
}

}  // namespace detail

/// Witness-based lower bound on the STV distance between two weighted
/// samples: max over restarts of sum_i w_i^P sigma(u(x_i) - b) -
/// sum_j w_j^Q sigma(u(y_j) - b). The modulus is dropped; a negative best
/// value is replaced by its mirror (-u, -b) when sigma(z) + sigma(-z) = 1.
inline StvResult stv_between_samples(const WeightedSample& P, const WeightedSample& Q, const StvConfig& cfg,
                                     std::uint64_t seed) {
  cfg.validate();
  P.validate("stv_between_samples(P)");
  Q.validate("stv_between_samples(Q)");
  if (P.points.cols() != cfg.kernel.dimension || Q.points.cols() != cfg.kernel.dimension)
    throw InputError("stv_between_samples: sample dimension does not match kernel");

  MatrixXd pooled(P.points.rows() + Q.points.rows(), cfg.kernel.dimension);
  pooled << P.points, Q.points;
  VectorXd g(pooled.rows());
  g << P.weights, -Q.weights;
  const EvaluationBasis basis(cfg.kernel, std::move(pooled));
  const detail::WitnessAscent ascent(basis, g, cfg);
  const VectorXd abs_g = g.cwiseAbs();

  StvResult out{0.0, {RkhsFunction::zero(cfg.kernel), 0.0}, {}, {}};
  double best = -std::numeric_limits<double>::infinity();
  VectorXd best_theta;
  double best_b = 0.0;

  const VectorXd mean_direction = detail::scale_to_norm(basis, basis.functional_gradient(g), cfg.U);
  for (int r = 0; r < cfg.inner.restarts; ++r) {
    VectorXd theta;
    if (r == 0) {
      theta = VectorXd::Zero(basis.num_params());
    } else if (r == 1) {
      theta = mean_direction;
    } else if (r == 2) {
      theta = -mean_direction;
    } else {
      RandomStream rng = make_stream(seed, "stv_restart", static_cast<std::uint64_t>(r));
      theta = detail::scale_to_norm(basis, rng.normal_vector(basis.num_params()), cfg.U);
    }
    const double b0 = detail::weighted_median(basis.values(theta), abs_g);
    auto point = ascent.run(theta, b0);
    out.restart_values.push_back(point.value);
    if (point.value > best) {
      best = point.value;
      best_theta = std::move(point.theta);
      best_b = point.b;
    }
  }
  if (best < 0.0 && cfg.sigma.antisymmetric()) {
    best = -best;
    best_theta = -best_theta;
    best_b = -best_b;
  }
  out.value = best;
  out.witness = {basis.to_function(best_theta), best_b};
  return out;
}

/// How the model side of an STV comparison is represented: exact draws (Gaussian
/// submodels) or proposal draws Z with log-densities log q w.r.t. the base
/// measure, reweighted by softmax(f(Z) - log q).
struct ModelSide {
  Index exact_draws = 0;
  MatrixXd Z;
  VectorXd log_q;

  static ModelSide exact(Index m) { return {m, {}, {}}; }
  static ModelSide importance(MatrixXd Z, VectorXd log_q) { return {0, std::move(Z), std::move(log_q)}; }
  bool uses_importance() const { return exact_draws == 0; }
};

// l draws from `proposal` with log-densities relative to the model's base measure.
inline ModelSide proposal_draws(const BaseMeasure& base, const BaseMeasure& proposal, Index ell,
                                std::uint64_t seed) {
  if (ell < 1) throw InputError("proposal_draws: need at least one draw");
  RandomStream rng = make_stream(seed, "proposal");
  MatrixXd Z = proposal.sample(ell, rng);
  VectorXd log_q = proposal.log_density_rows(Z) - base.log_density_rows(Z);
  if (proposal.kind() == base.kind() && proposal.kind() != BaseMeasure::Kind::Custom)
    log_q.setZero();
  return ModelSide::importance(std::move(Z), std::move(log_q));
}

inline WeightedSample model_sample(const KernelExpFamilyModel& m, const ModelSide& side, std::uint64_t seed,
                                   std::vector<std::string>* diagnostics = nullptr) {
  if (!side.uses_importance()) return WeightedSample::uniform(sample_model(m, side.exact_draws, seed));
  if (side.Z.rows() < 1) throw InputError("model side: no proposal draws");
  VectorXd w = softmax_weights(m.f(), side.Z, side.log_q);
  if (diagnostics && w.maxCoeff() > 0.999) {
    std::ostringstream os;
    os << "importance weights are degenerate (max weight " << w.maxCoeff()
       << "); use more proposal draws or a smaller model radius";
    diagnostics->push_back(os.str());
  }
  return {side.Z, std::move(w)};
}

inline StvResult stv_model_vs_samples(const KernelExpFamilyModel& m, const WeightedSample& data,
                                      const StvConfig& cfg, const ModelSide& side, std::uint64_t seed) {
  std::vector<std::string> diagnostics;
  const WeightedSample model = model_sample(m, side, derive_seed(seed, {tag_of("model_side")}), &diagnostics);
  StvResult out = stv_between_samples(model, data, cfg, seed);
  out.diagnostics.insert(out.diagnostics.end(), diagnostics.begin(), diagnostics.end());
  return out;
}

// TV between N(m1, I) and N(m2, I).
inline double tv_gaussian_mean(const VectorXd& m1, const VectorXd& m2) {
  if (m1.size() != m2.size()) throw InputError("tv_gaussian_mean: dimension mismatch");
  return 2.0 * normal_cdf(0.5 * (m1 - m2).norm()) - 1.0;
}

struct TvEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// Monte-Carlo TV: E_p[(1 - q/p)_+] from n draws of p.
inline TvEstimate mc_tv(const std::function<double(const PointRef&)>& log_p,
                        const std::function<double(const PointRef&)>& log_q,
                        const std::function<MatrixXd(Index, RandomStream&)>& sample_p, Index n,
                        std::uint64_t seed) {
  if (n < 2) throw InputError("mc_tv: need at least 2 draws");
  RandomStream rng = make_stream(seed, "mc_tv");
  const MatrixXd X = sample_p(n, rng);
  Eigen::ArrayXd terms(n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd x = X.row(i).transpose();
    const double lp = log_p(x);
    const double lq = log_q(x);
    if (!std::isfinite(lp) || std::isnan(lq) || lq == std::numeric_limits<double>::infinity()) {
      std::ostringstream os;
      os << "mc_tv: non-finite log-density (log p = " << lp << ", log q = " << lq << ") at point [";
      for (Index j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x(j);
      os << "]";
      throw NumericError(os.str());
    }
    terms(i) = std::max(0.0, 1.0 - std::exp(lq - lp));
  }
  const double mean = terms.mean();
  const double var = (terms - mean).square().sum() / static_cast<double>(n - 1);
  return {std::clamp(mean, 0.0, 1.0), std::sqrt(var / static_cast<double>(n))};
}

struct BiasBound {
  double value = 1.0;
  bool trivial = false;  // U <= ||f - g||: only the bound TV - STV <= 1 applies
};

// Upper bound on TV(P_f, P_g) - STV(P_f, P_g) for the sigmoid link.
inline BiasBound bias_bound(const RkhsFunction& f, const RkhsFunction& g, double U) {
  if (!(U > 0.0)) throw InputError("bias_bound: U must be positive");
  const double dist = rkhs_norm(f - g);
  if (U <= dist) return {1.0, true};
  return {dist / U, false};
}

struct DecayCheck {
  double sup_value = 0.0;
  double bound = 0.0;
  double argmax = 1.0;
};

// max over the grid of sigma(-c log t) (t - 1), against the bound 1/c.
inline DecayCheck decay_rate_check(const SigmaFunction& sigma, double c, const std::vector<double>& t_grid) {
  DecayCheck out{0.0, 1.0 / c, 1.0};
  for (double t : t_grid) {
    if (!(t >= 1.0)) throw InputError("decay_rate_check: grid points must be >= 1");
    const double v = sigma(-c * std::log(t)) * (t - 1.0);
    if (v > out.sup_value) {
      out.sup_value = v;
      out.argmax = t;
    }
  }
  return out;
}

// `count` points log-spaced on [1, t_max].
inline std::vector<double> log_spaced_grid(double t_max, int count) {
  if (!(t_max > 1.0) || count < 2) throw InputError("log_spaced_grid: need t_max > 1 and count >= 2");
  std::vector<double> grid(static_cast<std::size_t>(count));
  const double top = std::log(t_max);
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = std::exp(top * i / (count - 1));
  grid.front() = 1.0;
  return grid;
}

/// Biased (V-statistic) MMD: the RKHS norm of the difference of the weighted
/// mean embeddings.
inline double mmd(const WeightedSample& P, const WeightedSample& Q, const KernelSpec& k) {
  P.validate("mmd(P)");
  Q.validate("mmd(Q)");
  const double pp = P.weights.dot(gram(k, P.points, P.points) * P.weights);
  const double qq = Q.weights.dot(gram(k, Q.points, Q.points) * Q.weights);
  const double pq = P.weights.dot(gram(k, P.points, Q.points) * Q.weights);
  return std::sqrt(std::max(0.0, pp + qq - 2.0 * pq));
}

inline double mmd(const MatrixXd& P, const MatrixXd& Q, const KernelSpec& k) {
  return mmd(WeightedSample::uniform(P), WeightedSample::uniform(Q), k);
}

namespace detail {

// m random unit directions followed by the signed coordinate axes.
inline std::vector<VectorXd> depth_directions(Index d, int m, std::uint64_t seed) {
  if (m < 1) throw InputError("depth objective: need at least one direction");
  RandomStream rng = make_stream(seed, "depth_directions");
  std::vector<VectorXd> dirs;
  dirs.reserve(static_cast<std::size_t>(m + 2 * d));
  for (int i = 0; i < m; ++i) dirs.push_back(rng.unit_vector(d));
  for (Index j = 0; j < d; ++j) {
    dirs.push_back(VectorXd::Unit(d, j));
    dirs.push_back(-VectorXd::Unit(d, j));
  }
  return dirs;
}

}  // namespace detail

/// max_u (1/n) sum_i 1[u.(X_i - mu) >= 0] - 1/2 over sampled directions.
inline double tukey_depth_ipm(const MatrixXd& data, const VectorXd& mu, int directions, std::uint64_t seed) {
  if (data.rows() < 1) throw InputError("tukey_depth_ipm: empty data");
  if (data.cols() != mu.size()) throw InputError("tukey_depth_ipm: dimension mismatch");
  const MatrixXd centred = data.rowwise() - mu.transpose();
  double best = -0.5;
  for (const VectorXd& u : detail::depth_directions(mu.size(), directions, seed)) {
    const VectorXd proj = centred * u;
    const double frac = static_cast<double>((proj.array() >= 0.0).count()) / static_cast<double>(data.rows());
    best = std::max(best, frac - 0.5);
  }
  return best;
}

/// max_u | (1/n) sum_i 1[(u.X_i)^2 <= u^T Sigma u] - P(Z^2 <= 1) |.
inline double covariance_depth_ipm(const MatrixXd& data, const MatrixXd& Sigma, int directions,
                                   std::uint64_t seed) {
  if (data.rows() < 1) throw InputError("covariance_depth_ipm: empty data");
  if (Sigma.rows() != data.cols() || Sigma.cols() != data.cols())
    throw InputError("covariance_depth_ipm: Sigma shape mismatch");
  if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, Sigma.cwiseAbs().maxCoeff()))
    throw InputError("covariance_depth_ipm: Sigma is not symmetric");
  Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) throw InputError("covariance_depth_ipm: Sigma is not positive definite");
  const double target = 2.0 * normal_cdf(1.0) - 1.0;
  double best = 0.0;
  for (const VectorXd& u : detail::depth_directions(data.cols(), directions, seed)) {
    const double spread = u.dot(Sigma * u);
    const VectorXd proj = data * u;
    const double frac =
        static_cast<double>((proj.array().square() <= spread).count()) / static_cast<double>(data.rows());
    best = std::max(best, std::abs(frac - target));
  }
  return best;
}

}  // namespace stv
