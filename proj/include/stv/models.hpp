#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "stv/errors.hpp"
#include "stv/kernels.hpp"
#include "stv/random.hpp"

namespace stv {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// Multivariate normal N(mean, cov) with a cached Cholesky factor.
class Gaussian {
 public:
  Gaussian(VectorXd mean, MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
      throw InputError("Gaussian: covariance shape does not match mean");
    Eigen::LLT<MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) throw DomainError("Gaussian: covariance is not positive definite");
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  }

  static Gaussian standard(Index d) { return Gaussian(VectorXd::Zero(d), MatrixXd::Identity(d, d)); }

  Index dimension() const { return mean_.size(); }
  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }

  // Row i is mean + L xi_i with xi_i drawn coordinate by coordinate.
  MatrixXd sample(Index n, RandomStream& rng) const {
    MatrixXd xi = rng.normal_matrix(n, dimension());
    return (xi * chol_.transpose()).rowwise() + mean_.transpose();
  }

  double log_density(const PointRef& x) const {
    const VectorXd centred = x - mean_;
    const VectorXd solved = chol_.triangularView<Eigen::Lower>().solve(centred);
    return -0.5 * (dimension() * kLogTwoPi + log_det_ + solved.squaredNorm());
  }

  VectorXd log_density_rows(const PointsRef& X) const {
    MatrixXd centred = (X.rowwise() - mean_.transpose()).transpose();
    chol_.triangularView<Eigen::Lower>().solveInPlace(centred);
    const VectorXd q = centred.colwise().squaredNorm().transpose();
    return (-0.5 * (q.array() + dimension() * kLogTwoPi + log_det_)).matrix();
  }

 private:
  VectorXd mean_;
  MatrixXd cov_;
  MatrixXd chol_;
  double log_det_ = 0.0;
};

/// Base measure mu of the exponential family, with a sampler and a
/// log-density w.r.t. Lebesgue measure.
class BaseMeasure {
 public:
  enum class Kind { StdNormal, UniformBox, Custom };
  using Sampler = std::function<MatrixXd(Index, RandomStream&)>;
  using LogDensity = std::function<double(const PointRef&)>;

  static BaseMeasure std_normal(Index d) {
    if (d < 1) throw InputError("std_normal: dimension must be positive");
    BaseMeasure m(Kind::StdNormal, d);
    m.normalized_ = true;
    return m;
  }

  static BaseMeasure uniform_box(VectorXd lower, VectorXd upper) {
    if (lower.size() != upper.size() || lower.size() < 1)
      throw InputError("uniform_box: bounds must have equal positive length");
    if (!(upper.array() > lower.array()).all()) throw InputError("uniform_box: empty box");
    BaseMeasure m(Kind::UniformBox, lower.size());
    m.normalized_ = true;
    m.lower_ = std::move(lower);
    m.upper_ = std::move(upper);
    return m;
  }

  static BaseMeasure custom(Index d, Sampler sampler, LogDensity log_density, bool normalized) {
    if (!sampler || !log_density)
      throw InputError("custom base measure needs both a sampler and a log-density");
    BaseMeasure m(Kind::Custom, d);
    m.normalized_ = normalized;
    m.sampler_ = std::move(sampler);
    m.log_density_ = std::move(log_density);
    return m;
  }

  static BaseMeasure gaussian(VectorXd mean, MatrixXd cov) {
    auto g = std::make_shared<const Gaussian>(std::move(mean), std::move(cov));
    return custom(
        g->dimension(), [g](Index n, RandomStream& rng) { return g->sample(n, rng); },
        [g](const PointRef& x) { return g->log_density(x); }, true);
  }

  Kind kind() const { return kind_; }
  Index dimension() const { return dim_; }
  bool normalized() const { return normalized_; }

  MatrixXd sample(Index n, RandomStream& rng) const {
    switch (kind_) {
      case Kind::StdNormal: return rng.normal_matrix(n, dim_);
      case Kind::UniformBox: {
        MatrixXd out(n, dim_);
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < dim_; ++j)
            out(i, j) = lower_(j) + (upper_(j) - lower_(j)) * rng.uniform();
        return out;
      }
      case Kind::Custom: return sampler_(n, rng);
    }
    return {};
  }

  double log_density(const PointRef& x) const {
    switch (kind_) {
      case Kind::StdNormal: return -0.5 * (dim_ * kLogTwoPi + x.squaredNorm());
      case Kind::UniformBox: {
        if ((x.array() < lower_.array()).any() || (x.array() > upper_.array()).any())
          return -std::numeric_limits<double>::infinity();
        return -(upper_ - lower_).array().log().sum();
      }
      case Kind::Custom: return log_density_(x);
    }
    return 0.0;
  }

  VectorXd log_density_rows(const PointsRef& X) const {
    VectorXd out(X.rows());
    if (kind_ == Kind::StdNormal) {
      out = (-0.5 * (X.rowwise().squaredNorm().array() + dim_ * kLogTwoPi)).matrix();
      return out;
    }
    for (Index i = 0; i < X.rows(); ++i) out(i) = log_density(X.row(i).transpose());
    return out;
  }

 private:
  BaseMeasure(Kind k, Index d) : kind_(k), dim_(d) {}

  Kind kind_;
  Index dim_;
  bool normalized_ = true;
  VectorXd lower_, upper_;
  Sampler sampler_;
  LogDensity log_density_;
};

enum class Submodel { GaussianMean, GaussianCovariance, General };

struct GaussianParams {
  VectorXd mean;
  MatrixXd cov;
};

/// p_f = exp(f - A(f)) d mu.
///
/// Two submodels over the standard normal base measure have closed forms:
/// the mean model (linear kernel, f(x) = v.x, law N(v, I)) and the
/// covariance model (quadratic kernel, f(x) = -x^T F x / 2, law
/// N(0, (I + F)^{-1})). For the covariance model the stored RKHS function
/// is the matrix -F/2, so ||f|| = ||F||_F / 2.
class KernelExpFamilyModel {
 public:
  KernelExpFamilyModel(BaseMeasure base, RkhsFunction f) : base_(std::move(base)), f_(std::move(f)) {
    if (base_.dimension() != f_.kernel().dimension)
      throw InputError("model: base measure and kernel dimensions differ");
  }

  static KernelExpFamilyModel gaussian_mean(const VectorXd& mean) {
    const Index d = mean.size();
    return {BaseMeasure::std_normal(d), RkhsFunction::from_vector(KernelSpec::linear(d), mean)};
  }

  // Law N(0, (I + F)^{-1}).
  static KernelExpFamilyModel gaussian_covariance(const MatrixXd& F) {
    const Index d = F.rows();
    KernelExpFamilyModel m(BaseMeasure::std_normal(d),
                           RkhsFunction::from_matrix(KernelSpec::quadratic(d), -0.5 * F));
    m.precision_factor();  // validates I + F > 0
    return m;
  }

  KernelExpFamilyModel(const KernelExpFamilyModel& o) : base_(o.base_), f_(o.f_), log_z_(o.cached_log_partition()) {}
  KernelExpFamilyModel& operator=(const KernelExpFamilyModel& o) {
    if (this != &o) {
      base_ = o.base_;
      f_ = o.f_;
      const auto cached = o.cached_log_partition();
      std::lock_guard lock(mutex_);
      log_z_ = cached;
    }
    return *this;
  }

  const BaseMeasure& base() const { return base_; }
  const RkhsFunction& f() const { return f_; }
  Index dimension() const { return base_.dimension(); }

  void set_f(RkhsFunction f) {
    if (!(f.kernel() == f_.kernel())) throw InputError("set_f: kernel mismatch");
    f_ = std::move(f);
    std::lock_guard lock(mutex_);
    log_z_.reset();
  }

  Submodel submodel() const {
    if (base_.kind() != BaseMeasure::Kind::StdNormal) return Submodel::General;
    if (f_.kernel().kind == KernelKind::Linear) return Submodel::GaussianMean;
    if (f_.kernel().kind == KernelKind::Quadratic) return Submodel::GaussianCovariance;
    return Submodel::General;
  }

  // F with f(x) = -x^T F x / 2 (covariance model only).
  MatrixXd precision_offset() const {
    if (submodel() != Submodel::GaussianCovariance)
      throw UnsupportedError("precision_offset: not a covariance model");
    return -2.0 * f_.matrix();
  }

  std::optional<double> cached_log_partition() const {
    std::lock_guard lock(mutex_);
    return log_z_;
  }

  // Stores an externally computed A(f), e.g. from mc_log_partition. The
  // cache is logically part of f, hence const.
  void set_log_partition(double value) const {
    std::lock_guard lock(mutex_);
    log_z_ = value;
  }

  bool has_exact_log_partition() const { return submodel() != Submodel::General; }

  // Cholesky factor of I + F for the covariance model.
  Eigen::LLT<MatrixXd> precision_factor() const {
    const MatrixXd P = MatrixXd::Identity(dimension(), dimension()) + precision_offset();
    Eigen::LLT<MatrixXd> llt(P);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all())
      throw DomainError("covariance model: I + F is not positive definite");
    return llt;
  }

 private:
  BaseMeasure base_;
  RkhsFunction f_;
  mutable std::mutex mutex_;
  mutable std::optional<double> log_z_;
};

inline double log_partition(const KernelExpFamilyModel& m) {
  if (auto cached = m.cached_log_partition()) return *cached;
  double value = 0.0;
  switch (m.submodel()) {
    case Submodel::GaussianMean: value = 0.5 * m.f().vector().squaredNorm(); break;
    case Submodel::GaussianCovariance: {
      const auto llt = m.precision_factor();
      value = -MatrixXd(llt.matrixL()).diagonal().array().log().sum();
      break;
    }
    case Submodel::General:
      throw UnsupportedError(
          "log_partition: no closed form for this model; use mc_log_partition and "
          "set_log_partition");
  }
  m.set_log_partition(value);
  return value;
}

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// log( (1/l) sum_j exp(f(Z_j)) dmu/dq(Z_j) ), Z_j ~ proposal, with a
/// delta-method standard error.
inline McEstimate mc_log_partition(const KernelExpFamilyModel& m, const BaseMeasure& proposal,
                                   Index ell, std::uint64_t seed) {
  if (ell < 2) throw InputError("mc_log_partition: need at least 2 draws");
  if (proposal.dimension() != m.dimension())
    throw InputError("mc_log_partition: proposal dimension mismatch");
  RandomStream rng = make_stream(seed, "mc_log_partition");
  const MatrixXd Z = proposal.sample(ell, rng);
  VectorXd log_w = m.f().evaluate_rows(Z) + m.base().log_density_rows(Z) - proposal.log_density_rows(Z);
  double top = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < ell; ++j) {
    if (std::isnan(log_w(j)) || log_w(j) == std::numeric_limits<double>::infinity()) {
      std::ostringstream os;
      os << "mc_log_partition: non-finite log-weight at draw " << j;
      throw NumericError(os.str());
    }
    top = std::max(top, log_w(j));
  }
  if (!std::isfinite(top)) throw NumericError("mc_log_partition: all importance weights are zero");
  const Eigen::ArrayXd w = (log_w.array() - top).exp();
  const double mean = w.mean();
  const double var = (w - mean).square().sum() / static_cast<double>(ell - 1);
  return {top + std::log(mean), std::sqrt(var / static_cast<double>(ell)) / mean};
}

inline McEstimate mc_log_partition(const KernelExpFamilyModel& m, Index ell, std::uint64_t seed) {
  return mc_log_partition(m, m.base(), ell, seed);
}

/// log p_f(x) w.r.t. mu, or w.r.t. Lebesgue measure when `ambient` is set.
inline double log_density(const KernelExpFamilyModel& m, const PointRef& x, bool ambient = false) {
  double log_z;
  if (auto cached = m.cached_log_partition()) {
    log_z = *cached;
  } else if (m.has_exact_log_partition()) {
    log_z = log_partition(m);
  } else {
    throw StateError("log_density: log-partition not available; call set_log_partition first");
  }
  double out = m.f()(x) - log_z;
  if (ambient) out += m.base().log_density(x);
  return out;
}

inline VectorXd log_density_rows(const KernelExpFamilyModel& m, const PointsRef& X, bool ambient = false) {
  const double log_z = m.has_exact_log_partition() ? log_partition(m) : [&] {
    auto cached = m.cached_log_partition();
    if (!cached) throw StateError("log_density: log-partition not available");
    return *cached;
  }();
  VectorXd out = m.f().evaluate_rows(X).array() - log_z;
  if (ambient) out += m.base().log_density_rows(X);
  return out;
}

inline GaussianParams to_gaussian(const KernelExpFamilyModel& m) {
  const Index d = m.dimension();
  switch (m.submodel()) {
    case Submodel::GaussianMean: return {m.f().vector(), MatrixXd::Identity(d, d)};
    case Submodel::GaussianCovariance: {
      const auto llt = m.precision_factor();
      MatrixXd cov = llt.solve(MatrixXd::Identity(d, d));
      return {VectorXd::Zero(d), 0.5 * (cov + cov.transpose())};
    }
    case Submodel::General: break;
  }
  throw UnsupportedError("to_gaussian: model is not a Gaussian submodel");
}

// Exact draws for the Gaussian submodels, from n x d standard normals xi:
// mean model rows are v + xi_i, covariance model rows are L^{-T} xi_i with
// L L^T = I + F.
inline MatrixXd transform_standard_draws(const KernelExpFamilyModel& m, MatrixXd xi) {
  switch (m.submodel()) {
    case Submodel::GaussianMean: return xi.rowwise() + m.f().vector().transpose();
    case Submodel::GaussianCovariance: {
      const auto llt = m.precision_factor();
      MatrixXd t = xi.transpose();
      llt.matrixU().solveInPlace(t);
      return t.transpose();
    }
    case Submodel::General: break;
  }
  throw UnsupportedError("sample_model: only Gaussian submodels can be sampled exactly");
}

inline MatrixXd sample_model(const KernelExpFamilyModel& m, Index n, std::uint64_t seed) {
  if (n < 0) throw InputError("sample_model: n must be nonnegative");
  if (m.submodel() == Submodel::General)
    throw UnsupportedError("sample_model: only Gaussian submodels can be sampled exactly");
  RandomStream rng = make_stream(seed, "sample_model");
  return transform_standard_draws(m, rng.normal_matrix(n, m.dimension()));
}

}  // namespace stv
