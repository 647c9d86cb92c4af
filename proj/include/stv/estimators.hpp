#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stv/divergences.hpp"
#include "stv/errors.hpp"
#include "stv/importance.hpp"
#include "stv/kernels.hpp"
#include "stv/models.hpp"
#include "stv/optim.hpp"
#include "stv/random.hpp"

namespace stv {

// sum_i w_i sigma(u(Z_i) - b) with w = softmax(f(Z) - log q).
inline double approx_model_expectation(const RkhsFunction& f, const RkhsFunction& u, double b, const PointsRef& Z,
                                       const VectorXd& log_q, const SigmaFunction& sigma = {}) {
  const VectorXd w = softmax_weights(f, Z, log_q);
  const VectorXd s = u.evaluate_rows(Z);
  double acc = 0.0;
  for (Index i = 0; i < s.size(); ++i) acc += w(i) * sigma(s(i) - b);
  return acc;
}

enum class LearnVariant {
  HardConstraint,  // ||f|| <= r, ||u|| <= U
  AdditiveReg,     // + ||f||^2 / r^2, ||u|| <= U
  FullReg,         // + ||f||^2 / r^2 - ||u||^2 / U^2
};

enum class FamilyKind { GaussianMean, GaussianCovariance, GeneralKernel };

/// The model family being fitted. The general family is p_f with
/// f = sum_j alpha_j k(Z_j, .) over the proposal draws Z (rbf kernel), and
/// can only be fitted with importance sampling.
struct ModelFamily {
  FamilyKind kind = FamilyKind::GaussianMean;
  KernelSpec kernel = KernelSpec::linear(1);
  BaseMeasure base = BaseMeasure::std_normal(1);

  static ModelFamily gaussian_mean(Index d) {
    return {FamilyKind::GaussianMean, KernelSpec::linear(d), BaseMeasure::std_normal(d)};
  }
  static ModelFamily gaussian_covariance(Index d) {
    return {FamilyKind::GaussianCovariance, KernelSpec::quadratic(d), BaseMeasure::std_normal(d)};
  }
  static ModelFamily general(const KernelSpec& k, BaseMeasure base) {
    if (base.dimension() != k.dimension) throw InputError("ModelFamily: base and kernel dimensions differ");
    return {FamilyKind::GeneralKernel, k.validated(), std::move(base)};
  }

  Index dimension() const { return kernel.dimension; }
};

struct ModelExpectation {
  enum class Kind { ExactSampling, ImportanceSampling };
  Kind kind = Kind::ExactSampling;
  Index draws = 2000;                  // m per outer step, or l proposal draws
  std::optional<BaseMeasure> proposal;  // importance sampling; defaults to the base measure

  static ModelExpectation exact(Index m) { return {Kind::ExactSampling, m, std::nullopt}; }
  static ModelExpectation importance(Index ell, std::optional<BaseMeasure> q = std::nullopt) {
    return {Kind::ImportanceSampling, ell, std::move(q)};
  }
};

enum class FitInit {
  Zero,    // f = 0, i.e. the base measure
  Robust,  // mean model: componentwise median; other families: zero
};

// GDA schedule used by fit_stv unless overridden: the generic defaults with
// an adaptive inner step.
inline GdaConfig default_learning_optimizer() {
  GdaConfig cfg;
  cfg.inner_rule = InnerRule::BoldDriver;
  return cfg;
}

// How the restarts are combined into one estimate.
enum class RestartSelection {
  Average,          // average the tail-averaged model parameters of all runs
  LowestObjective,  // keep the run with the lowest tail-averaged objective
};

struct StvLearnConfig {
  LearnVariant variant = LearnVariant::FullReg;
  double r = 1.0 / std::sqrt(3e-5);
  double U = 100.0;
  ModelExpectation model_expectation{};
  GdaConfig optimizer = default_learning_optimizer();
  SigmaFunction sigma{};
  double bias_bound = std::numeric_limits<double>::infinity();
  FitInit init = FitInit::Robust;
  double witness_init_radius = 20.0;  // capped at U
  RestartSelection restart_selection = RestartSelection::Average;

  void validate() const {
    if (!(r > 0.0) || !(U > 0.0)) throw InputError("StvLearnConfig: r and U must be positive");
    if (!(bias_bound > 0.0)) throw InputError("StvLearnConfig: bias_bound must be positive");
    if (model_expectation.draws < 1) throw InputError("StvLearnConfig: need at least one model draw");
    if (!(witness_init_radius > 0.0)) throw InputError("StvLearnConfig: witness_init_radius must be positive");
    optimizer.validate();
  }
};

struct FitDiagnostics {
  std::vector<double> restart_values;  // tail-averaged objective per restart
  std::vector<std::string> messages;
  int iterations = 0;
  double wall_ms = 0.0;
  bool truncated = false;
  bool degenerate_weights = false;
  int best_restart = 0;
};

struct FitResult {
  RkhsFunction f_hat = RkhsFunction::zero(KernelSpec::linear(1));
  Witness witness{RkhsFunction::zero(KernelSpec::linear(1)), 0.0};
  std::vector<double> objective_trace;
  FitDiagnostics diagnostics;
  FamilyKind family = FamilyKind::GaussianMean;
  BaseMeasure base = BaseMeasure::std_normal(1);

  KernelExpFamilyModel model() const { return {base, f_hat}; }
};

// ---------------------------------------------------------------------------
// Baselines

inline VectorXd baseline_componentwise_median(const MatrixXd& data) {
  if (data.rows() < 1) throw InputError("componentwise median: empty data");
  const Index n = data.rows();
  VectorXd out(data.cols());
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Index j = 0; j < data.cols(); ++j) {
    for (Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = data(i, j);
    const auto mid = col.begin() + n / 2;
    std::nth_element(col.begin(), mid, col.end());
    double m = *mid;
    if (n % 2 == 0) m = 0.5 * (m + *std::max_element(col.begin(), mid));
    out(j) = m;
  }
  return out;
}

struct MeanCov {
  VectorXd mean;
  MatrixXd cov;
};

inline MeanCov baseline_sample_mean_cov(const MatrixXd& data) {
  if (data.rows() < 2) throw InputError("sample mean/covariance: need at least 2 rows");
  VectorXd mean = data.colwise().mean().transpose();
  const MatrixXd centred = data.rowwise() - mean.transpose();
  MatrixXd cov = centred.transpose() * centred / static_cast<double>(data.rows() - 1);
  return {std::move(mean), 0.5 * (cov + cov.transpose())};
}

// tau-a with ties counted as neither concordant nor discordant.
inline double kendall_tau(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b) {
  const Index n = a.size();
  long long score = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double s = (a(i) - a(j)) * (b(i) - b(j));
      score += (s > 0.0) - (s < 0.0);
    }
  return static_cast<double>(score) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

/// D R D with R_ab = sin(pi tau_ab / 2) and D the per-coordinate scales
/// 1.4826 * MAD.
inline MatrixXd baseline_kendall_cov(const MatrixXd& data) {
  const Index n = data.rows(), d = data.cols();
  if (n < 2) throw InputError("kendall covariance: need at least 2 rows");
  VectorXd scale(d);
  const VectorXd med = baseline_componentwise_median(data);
  for (Index j = 0; j < d; ++j) {
    const MatrixXd dev = (data.col(j).array() - med(j)).abs().matrix();
    scale(j) = 1.4826 * baseline_componentwise_median(dev)(0);
    if (!(scale(j) > 0.0)) {
      std::ostringstream os;
      os << "kendall covariance: zero median absolute deviation in coordinate " << j;
      throw DomainError(os.str());
    }
  }
  MatrixXd R = MatrixXd::Identity(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = a + 1; b < d; ++b) {
      R(a, b) = R(b, a) = std::sin(0.5 * std::numbers::pi * kendall_tau(data.col(a), data.col(b)));
    }
  MatrixXd cov = scale.asDiagonal() * R * scale.asDiagonal();
  return 0.5 * (cov + cov.transpose());
}

// ---------------------------------------------------------------------------
// Min-max objective

namespace detail {

/// J(f; u, b) = E_model sigma(u - b) - E_data sigma(u - b) + penalties.
///
/// x holds the model parameters: v (mean model), vec(F) (covariance model,
/// f(x) = -x^T F x / 2) or representer coefficients over Z (general). y holds
/// the witness coordinates followed by b. The model-side gradient uses the
/// exponential-family identity d/df E_f[h] = Cov_f(h, k(X, .)), estimated
/// with the current model weights; for importance sampling this is the exact
/// derivative of the softmax-weighted average.
class StvLearningObjective {
 public:
  static constexpr double kRestartJitter = 0.3;

  StvLearningObjective(const MatrixXd& data, const ModelFamily& family, const StvLearnConfig& cfg,
                       std::uint64_t seed)
      : family_(family), cfg_(cfg), seed_(seed), n_(data.rows()), d_(data.cols()) {
    if (n_ < 2) throw InputError("fit_stv: need at least 2 data rows");
    if (d_ != family.dimension()) throw InputError("fit_stv: data dimension does not match the model family");
    if (!data.allFinite()) throw InputError("fit_stv: data contain non-finite values");
    importance_ = cfg.model_expectation.kind == ModelExpectation::Kind::ImportanceSampling;
    if (family.kind == FamilyKind::GeneralKernel && !importance_)
      throw UnsupportedError("fit_stv: the general kernel family requires importance sampling");
    m_ = cfg.model_expectation.draws;

    if (importance_) {
      const BaseMeasure& q = cfg.model_expectation.proposal ? *cfg.model_expectation.proposal : family.base;
      ModelSide side = proposal_draws(family.base, q, m_, derive_seed(seed, {tag_of("proposal")}));
      Z_ = std::move(side.Z);
      log_q_ = std::move(side.log_q);
    }

    if (family.kind == FamilyKind::GeneralKernel) {
      MatrixXd anchors(n_ + m_, d_);
      anchors << data, Z_;
      K_all_ = gram(family.kernel, anchors, anchors);
      anchors_ = std::move(anchors);
      phi_data_ = K_all_.topRows(n_);
      phi_model_ = K_all_.bottomRows(m_);
    } else {
      // Mean-model witnesses act on x - c with c the componentwise median, so
      // translating the data translates the whole trajectory.
      center_ = family.kind == FamilyKind::GaussianMean ? baseline_componentwise_median(data) : VectorXd::Zero(d_);
      phi_data_ = feature_matrix(family.kernel, data.rowwise() - center_.transpose());
      if (importance_) set_model_points(Z_);
    }
    p_u_ = phi_data_.cols();
    p_f_ = family.kind == FamilyKind::GeneralKernel ? m_ : family.kernel.feature_dim();
    if (!importance_) begin_outer(0);
  }

  Index x_size() const { return p_f_; }
  Index y_size() const { return p_u_ + 1; }
  Index num_model_points() const { return m_; }

  // Euclidean gradients in x and y instead of functional ones (only differs
  // for the general family); used for finite-difference checks.
  void use_euclidean_gradients(bool on) { euclidean_ = on; }

  void begin_outer(int t) {
    if (importance_) return;
    RandomStream rng = make_stream(seed_, "model_draws", static_cast<std::uint64_t>(t));
    xi_ = rng.normal_matrix(m_, d_);
    cached_x_.resize(0);
  }

  bool feasible_x(const VectorXd& x) const {
    if (family_.kind != FamilyKind::GaussianCovariance) return x.allFinite();
    const MatrixXd P = MatrixXd::Identity(d_, d_) + as_matrix(x);
    Eigen::LLT<MatrixXd> llt(P);
    return llt.info() == Eigen::Success && x.allFinite();
  }

  double f_squared_norm(const VectorXd& x) const {
    switch (family_.kind) {
      case FamilyKind::GaussianMean: return x.squaredNorm();
      case FamilyKind::GaussianCovariance: return 0.25 * x.squaredNorm();
      case FamilyKind::GeneralKernel: return std::max(0.0, x.dot(K_ZZ() * x));
    }
    return 0.0;
  }

  double u_squared_norm(const VectorXd& theta) const {
    if (family_.kind == FamilyKind::GeneralKernel) return std::max(0.0, theta.dot(K_all_ * theta));
    return theta.squaredNorm();
  }

  VectorXd project_x(const VectorXd& x) const {
    if (cfg_.variant != LearnVariant::HardConstraint) return x;
    const double nrm = std::sqrt(f_squared_norm(x));
    return nrm <= cfg_.r ? x : VectorXd(x * (cfg_.r / nrm));
  }

  VectorXd project_y(const VectorXd& y) const {
    VectorXd out = y;
    if (cfg_.variant != LearnVariant::FullReg) {
      const double nrm = std::sqrt(u_squared_norm(y.head(p_u_)));
      if (nrm > cfg_.U) out.head(p_u_) *= cfg_.U / nrm;
    }
    out(p_u_) = std::clamp(out(p_u_), -cfg_.bias_bound, cfg_.bias_bound);
    return out;
  }

  MinimaxEval evaluate(const VectorXd& x, const VectorXd& y) {
    prepare_model(x);
    const auto theta = y.head(p_u_);
    const double b = y(p_u_);
    const VectorXd s_data = phi_data_ * theta;
    const VectorXd s_model = phi_model_ * theta;

    VectorXd slope_data(n_);
    double e_data = 0.0;
    for (Index i = 0; i < n_; ++i) {
      e_data += cfg_.sigma(s_data(i) - b);
      slope_data(i) = cfg_.sigma.derivative(s_data(i) - b) / static_cast<double>(n_);
    }
    e_data /= static_cast<double>(n_);

    VectorXd sig_model(m_), slope_model(m_);
    for (Index j = 0; j < m_; ++j) {
      sig_model(j) = cfg_.sigma(s_model(j) - b);
      slope_model(j) = weights_(j) * cfg_.sigma.derivative(s_model(j) - b);
    }
    const double e_model = weights_.dot(sig_model);

    MinimaxEval out;
    out.value = e_model - e_data;

    // d/dx: weighted covariance of sigma with the sufficient statistics.
    const VectorXd centred = weights_.array() * (sig_model.array() - e_model);
    if (family_.kind == FamilyKind::GeneralKernel) {
      out.grad_x = euclidean_ ? VectorXd(K_ZZ() * centred) : centred;
    } else {
      out.grad_x = stats_.transpose() * centred;
    }

    out.grad_y.resize(p_u_ + 1);
    if (family_.kind == FamilyKind::GeneralKernel) {
      VectorXd coef(n_ + m_);
      coef << -slope_data, slope_model;
      out.grad_y.head(p_u_) = euclidean_ ? VectorXd(K_all_ * coef) : coef;
    } else {
      out.grad_y.head(p_u_) = phi_model_.transpose() * slope_model - phi_data_.transpose() * slope_data;
    }
    out.grad_y(p_u_) = slope_data.sum() - slope_model.sum();

    if (cfg_.variant != LearnVariant::HardConstraint) {
      const double inv_r2 = 1.0 / (cfg_.r * cfg_.r);
      out.value += inv_r2 * f_squared_norm(x);
      switch (family_.kind) {
        case FamilyKind::GaussianMean: out.grad_x += 2.0 * inv_r2 * x; break;
        case FamilyKind::GaussianCovariance: out.grad_x += 0.5 * inv_r2 * x; break;
        case FamilyKind::GeneralKernel:
          out.grad_x += 2.0 * inv_r2 * (euclidean_ ? VectorXd(K_ZZ() * x) : x);
          break;
      }
    }
    if (cfg_.variant == LearnVariant::FullReg) {
      const double inv_u2 = 1.0 / (cfg_.U * cfg_.U);
      out.value -= inv_u2 * u_squared_norm(theta);
      if (family_.kind == FamilyKind::GeneralKernel && euclidean_) {
        out.grad_y.head(p_u_) -= 2.0 * inv_u2 * (K_all_ * theta);
      } else {
        out.grad_y.head(p_u_) -= 2.0 * inv_u2 * theta;
      }
    }
    return out;
  }

  // Witness coordinates for a starting point: the mean-difference direction
  // (jittered for restarts > 0) scaled to `radius`, with the sign of u and b
  // chosen by a scan over quantiles of the pooled scores.
  VectorXd initial_witness(const VectorXd& x, double radius, int restart) {
    prepare_model(x);
    VectorXd y = VectorXd::Zero(p_u_ + 1);
    VectorXd direction;
    if (family_.kind == FamilyKind::GeneralKernel) {
      direction.resize(n_ + m_);
      direction << VectorXd::Constant(n_, -1.0 / static_cast<double>(n_)), weights_;
    } else {
      direction = phi_model_.transpose() * weights_ - phi_data_.colwise().mean().transpose();
    }
    const double base_norm = std::sqrt(u_squared_norm(direction));
    if (base_norm > 0.0) direction /= base_norm;
    if (restart > 0 || base_norm == 0.0) {
      RandomStream rng = make_stream(seed_, "witness_init", static_cast<std::uint64_t>(restart));
      VectorXd noise = rng.normal_vector(p_u_);
      const double noise_norm = std::sqrt(u_squared_norm(noise));
      if (noise_norm > 0.0) direction += (base_norm > 0.0 ? kRestartJitter : 1.0) * noise / noise_norm;
    }
    if (direction.size() == p_u_) {
      const double nrm = std::sqrt(u_squared_norm(direction));
      if (nrm > 0.0) y.head(p_u_) = direction * (radius / nrm);
    }
    const VectorXd s_data = phi_data_ * y.head(p_u_);
    const VectorXd s_model = phi_model_ * y.head(p_u_);
    VectorXd scores(n_ + m_), w(n_ + m_);
    scores << s_data, s_model;
    w << VectorXd::Constant(n_, 0.5 / static_cast<double>(n_)), 0.5 * weights_;
    y(p_u_) = std::clamp(weighted_median(scores, w), -cfg_.bias_bound, cfg_.bias_bound);
    if (y.head(p_u_).squaredNorm() == 0.0) return y;

    // Scan the sign of u and b over quantiles of the pooled scores.
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    VectorXd best = y;
    double best_value = evaluate(x, y).value;
    constexpr int kGrid = 64;
    for (int sign : {1, -1}) {
      VectorXd cand = y;
      cand.head(p_u_) *= sign;
      for (int q = 1; q < kGrid; ++q) {
        const auto at = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) / kGrid);
        cand(p_u_) = std::clamp(sign * sorted[at], -cfg_.bias_bound, cfg_.bias_bound);
        const double v = evaluate(x, cand).value;
        if (v > best_value) {
          best_value = v;
          best = cand;
        }
      }
    }
    return best;
  }

  RkhsFunction to_function(const VectorXd& x) const {
    switch (family_.kind) {
      case FamilyKind::GaussianMean: return RkhsFunction::from_vector(family_.kernel, x);
      case FamilyKind::GaussianCovariance: return RkhsFunction::from_matrix(family_.kernel, -0.5 * as_matrix(x));
      case FamilyKind::GeneralKernel: return RkhsFunction::representer(family_.kernel, Z_, x);
    }
    return RkhsFunction::zero(family_.kernel);
  }

  Witness to_witness(const VectorXd& y) const {
    const VectorXd theta = y.head(p_u_);
    if (family_.kind == FamilyKind::GeneralKernel)
      return {RkhsFunction::representer(family_.kernel, anchors_, theta), y(p_u_)};
    const double shift = family_.kind == FamilyKind::GaussianMean ? theta.dot(center_) : 0.0;
    return {RkhsFunction::from_features(family_.kernel, theta), y(p_u_) + shift};
  }

  const VectorXd& model_weights() const { return weights_; }
  const MatrixXd& proposal_points() const { return Z_; }
  const VectorXd& proposal_log_q() const { return log_q_; }

 private:
  MatrixXd as_matrix(const VectorXd& x) const {
    MatrixXd F = Eigen::Map<const MatrixXd>(x.data(), d_, d_);
    return 0.5 * (F + F.transpose());
  }

  Eigen::Block<const MatrixXd> K_ZZ() const { return K_all_.bottomRightCorner(m_, m_); }

  void set_model_points(const MatrixXd& X) {
    phi_model_ = feature_matrix(family_.kernel, X.rowwise() - center_.transpose());
    stats_ = family_.kind == FamilyKind::GaussianMean ? phi_model_ : MatrixXd(-0.5 * phi_model_);
  }

  void prepare_model(const VectorXd& x) {
    if (cached_x_.size() == x.size() && cached_x_ == x) return;
    if (importance_) {
      VectorXd logits;
      switch (family_.kind) {
        case FamilyKind::GaussianMean: logits = Z_ * x; break;
        case FamilyKind::GaussianCovariance: logits = stats_ * x; break;
        case FamilyKind::GeneralKernel: logits = K_ZZ() * x; break;
      }
      weights_ = softmax_from_logits(logits - log_q_);
    } else {
      KernelExpFamilyModel model = family_.kind == FamilyKind::GaussianMean
                                       ? KernelExpFamilyModel::gaussian_mean(x)
                                       : KernelExpFamilyModel::gaussian_covariance(as_matrix(x));
      set_model_points(transform_standard_draws(model, xi_));
      weights_ = VectorXd::Constant(m_, 1.0 / static_cast<double>(m_));
    }
    cached_x_ = x;
  }

  ModelFamily family_;
  StvLearnConfig cfg_;
  std::uint64_t seed_;
  Index n_, d_, m_ = 0, p_u_ = 0, p_f_ = 0;
  bool importance_ = false;
  bool euclidean_ = false;

  MatrixXd phi_data_;   // n x p_u witness features of the data
  MatrixXd phi_model_;  // m x p_u witness features of the model points
  MatrixXd stats_;      // m x p_f sufficient statistics of the model points
  MatrixXd Z_, anchors_, K_all_, xi_;
  VectorXd center_, log_q_, weights_, cached_x_;
};

}  // namespace detail

inline VectorXd initial_model_parameters(const MatrixXd& data, const ModelFamily& family, FitInit init) {
  switch (family.kind) {
    case FamilyKind::GaussianMean:
      return init == FitInit::Robust ? baseline_componentwise_median(data) : VectorXd::Zero(family.dimension());
    case FamilyKind::GaussianCovariance: return VectorXd::Zero(family.dimension() * family.dimension());
    case FamilyKind::GeneralKernel: break;
  }
  return {};
}

/// Regularized STV learning by alternating gradient descent-ascent.
///
/// Runs `optimizer.restarts` GDA runs from the same model start. The first
/// starts the witness along the mean-difference direction; later ones jitter
/// that direction and use their own model draws. Each run is summarized by
/// its iterates averaged over the tail of the schedule. By default the model
/// parameters of all runs are averaged (the parameter sets are convex);
/// alternatively the run with the lowest tail-averaged objective is kept.
/// The reported witness and trace come from the lowest-objective run.
inline FitResult fit_stv(const MatrixXd& data, const ModelFamily& family, const StvLearnConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  if (data.rows() < 1) throw InputError("fit_stv: empty data");
  const auto started = std::chrono::steady_clock::now();

  FitResult out;
  out.family = family.kind;
  out.base = family.base;
  if (cfg.U < 2.0 * cfg.r) {
    std::ostringstream os;
    os << "U = " << cfg.U << " is below 2r = " << 2.0 * cfg.r << "; error guarantees assume U >= 2r";
    out.diagnostics.messages.push_back(os.str());
  }

  const bool importance = cfg.model_expectation.kind == ModelExpectation::Kind::ImportanceSampling;
  std::vector<GdaResult> runs;
  for (int r = 0; r < cfg.optimizer.restarts; ++r) {
    // The proposal draws Z are shared by all restarts.
    const std::uint64_t objective_seed =
        importance ? seed : derive_seed(seed, {tag_of("fit_restart"), static_cast<std::uint64_t>(r)});
    detail::StvLearningObjective objective(data, family, cfg, objective_seed);
    VectorXd x0 = family.kind == FamilyKind::GeneralKernel ? VectorXd::Zero(objective.x_size())
                                                           : initial_model_parameters(data, family, cfg.init);
    x0 = objective.project_x(x0);
    const double radius = std::min(cfg.witness_init_radius, cfg.U);
    const VectorXd y0 = objective.initial_witness(x0, radius, r);

    runs.push_back(gda_minimax(
        objective, x0, y0, cfg.optimizer, [&](const VectorXd& x) { return objective.project_x(x); },
        [&](const VectorXd& y) { return objective.project_y(y); }));
    out.diagnostics.iterations += runs.back().iterations;
    out.diagnostics.truncated = out.diagnostics.truncated || runs.back().truncated;
  }

  detail::StvLearningObjective judge(data, family, cfg, importance ? seed : derive_seed(seed, {tag_of("judge")}));
  std::size_t best = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out.diagnostics.restart_values.push_back(runs[i].tail.value);
    if (runs[i].tail.value < runs[best].tail.value) best = i;
  }
  out.diagnostics.best_restart = static_cast<int>(best);
  VectorXd x_hat = runs[best].tail.x;
  if (cfg.restart_selection == RestartSelection::Average) {
    x_hat.setZero();
    for (const GdaResult& run : runs) x_hat += run.tail.x;
    x_hat /= static_cast<double>(runs.size());
  }
  const GdaResult& win = runs[best];
  out.f_hat = judge.to_function(x_hat);
  out.witness = judge.to_witness(win.tail.y);
  out.objective_trace = win.trace;
  if (importance) {
    judge.evaluate(x_hat, win.tail.y);
    out.diagnostics.degenerate_weights = judge.model_weights().maxCoeff() > 0.999;
  }
  if (out.diagnostics.degenerate_weights)
    out.diagnostics.messages.push_back(
        "importance weights are degenerate (max weight > 0.999); use more proposal draws or a smaller r");
  for (double v : out.objective_trace)
    if (!std::isfinite(v)) throw NumericError("fit_stv: non-finite objective in trace");
  out.diagnostics.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return out;
}

// Estimated mean (mean model) or covariance (covariance model).
inline VectorXd fitted_mean(const FitResult& fit) { return fit.f_hat.vector(); }

inline MatrixXd fitted_covariance(const FitResult& fit) { return to_gaussian(fit.model()).cov; }

}  // namespace stv
