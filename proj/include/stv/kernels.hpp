#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "stv/errors.hpp"

namespace stv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using PointRef = Eigen::Ref<const VectorXd>;
using PointsRef = Eigen::Ref<const MatrixXd>;  // one point per row

enum class KernelKind { Linear, Quadratic, Rbf };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Quadratic: return "quadratic";
    case KernelKind::Rbf: return "rbf";
  }
  return "?";
}

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double bandwidth = 1.0;  // Rbf only
  Index dimension = 1;

  static KernelSpec linear(Index d) { return KernelSpec{KernelKind::Linear, 1.0, d}.validated(); }
  static KernelSpec quadratic(Index d) {
    return KernelSpec{KernelKind::Quadratic, 1.0, d}.validated();
  }
  static KernelSpec rbf(Index d, double bandwidth) {
    return KernelSpec{KernelKind::Rbf, bandwidth, d}.validated();
  }

  KernelSpec validated() const {
    if (dimension < 1) throw InputError("kernel dimension must be positive");
    if (kind == KernelKind::Rbf && !(bandwidth > 0.0 && std::isfinite(bandwidth)))
      throw InputError("rbf bandwidth must be positive");
    return *this;
  }

  // Linear and quadratic kernels have explicit finite feature maps.
  bool finite_rank() const { return kind != KernelKind::Rbf; }

  Index feature_dim() const {
    switch (kind) {
      case KernelKind::Linear: return dimension;
      case KernelKind::Quadratic: return dimension * dimension;
      case KernelKind::Rbf: break;
    }
    throw UnsupportedError("rbf kernel has no finite feature map");
  }

  // sup_x sqrt(k(x,x)); finite only for the rbf kernel.
  double sup_norm_bound() const {
    return kind == KernelKind::Rbf ? 1.0 : std::numeric_limits<double>::infinity();
  }

  friend bool operator==(const KernelSpec& a, const KernelSpec& b) {
    if (a.kind != b.kind || a.dimension != b.dimension) return false;
    return a.kind != KernelKind::Rbf || a.bandwidth == b.bandwidth;
  }
};

namespace detail {

inline void check_dim(const KernelSpec& k, Index got, const char* what) {
  if (got != k.dimension) {
    std::ostringstream os;
    os << what << ": expected dimension " << k.dimension << ", got " << got;
    throw InputError(os.str());
  }
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& k, const PointRef& x, const PointRef& z) {
  detail::check_dim(k, x.size(), "kernel_eval");
  detail::check_dim(k, z.size(), "kernel_eval");
  switch (k.kind) {
    case KernelKind::Linear: return x.dot(z);
    case KernelKind::Quadratic: {
      const double t = x.dot(z);
      return t * t;
    }
    case KernelKind::Rbf:
      return std::exp(-(x - z).squaredNorm() / (2.0 * k.bandwidth * k.bandwidth));
  }
  return 0.0;
}

// Cross-Gram matrix K(i, j) = k(X_i, Z_j).
inline MatrixXd gram(const KernelSpec& k, const PointsRef& X, const PointsRef& Z) {
  if (X.rows() > 0) detail::check_dim(k, X.cols(), "gram");
  if (Z.rows() > 0) detail::check_dim(k, Z.cols(), "gram");
  MatrixXd inner = X * Z.transpose();
  switch (k.kind) {
    case KernelKind::Linear: return inner;
    case KernelKind::Quadratic: return inner.array().square().matrix();
    case KernelKind::Rbf: {
      const VectorXd xn = X.rowwise().squaredNorm();
      const VectorXd zn = Z.rowwise().squaredNorm();
      const double scale = -1.0 / (2.0 * k.bandwidth * k.bandwidth);
      for (Index j = 0; j < inner.cols(); ++j)
        for (Index i = 0; i < inner.rows(); ++i) {
          const double sq = std::max(0.0, xn(i) + zn(j) - 2.0 * inner(i, j));
          inner(i, j) = std::exp(scale * sq);
        }
      return inner;
    }
  }
  return inner;
}

// Explicit feature vector: x (linear) or vec(x x^T) column-major (quadratic).
inline VectorXd feature_map(const KernelSpec& k, const PointRef& x) {
  detail::check_dim(k, x.size(), "feature_map");
  if (k.kind == KernelKind::Linear) return x;
  if (k.kind == KernelKind::Quadratic) {
    MatrixXd outer = x * x.transpose();
    return Eigen::Map<const VectorXd>(outer.data(), outer.size());
  }
  throw UnsupportedError("rbf kernel has no finite feature map");
}

// Rows are feature vectors of the rows of X.
inline MatrixXd feature_matrix(const KernelSpec& k, const PointsRef& X) {
  if (X.rows() > 0) detail::check_dim(k, X.cols(), "feature_matrix");
  if (k.kind == KernelKind::Linear) return X;
  if (k.kind == KernelKind::Quadratic) {
    const Index d = k.dimension;
    MatrixXd out(X.rows(), d * d);
    for (Index i = 0; i < X.rows(); ++i)
      for (Index b = 0; b < d; ++b)
        for (Index a = 0; a < d; ++a) out(i, b * d + a) = X(i, a) * X(i, b);
    return out;
  }
  throw UnsupportedError("rbf kernel has no finite feature map");
}

/// An element of the RKHS of `kernel()`.
///
/// Linear-kernel functions are stored as a vector v (f(x) = v.x), quadratic-
/// kernel functions as a symmetric matrix F (f(x) = x^T F x), and rbf-kernel
/// functions as coefficients over anchor points. Representers over the
/// linear or quadratic kernel are collapsed to the explicit form on
/// construction.
class RkhsFunction {
 public:
  struct ExplicitVector {
    VectorXd v;
  };
  struct ExplicitMatrix {
    MatrixXd F;
  };
  struct Representer {
    MatrixXd anchors;  // one anchor per row
    VectorXd coefficients;
  };
  using Representation = std::variant<ExplicitVector, ExplicitMatrix, Representer>;

  static RkhsFunction zero(const KernelSpec& k) {
    const KernelSpec kk = k.validated();
    switch (kk.kind) {
      case KernelKind::Linear: return RkhsFunction(kk, ExplicitVector{VectorXd::Zero(kk.dimension)});
      case KernelKind::Quadratic:
        return RkhsFunction(kk, ExplicitMatrix{MatrixXd::Zero(kk.dimension, kk.dimension)});
      case KernelKind::Rbf: return RkhsFunction(kk, Representer{MatrixXd(0, kk.dimension), VectorXd(0)});
    }
    return RkhsFunction(kk, ExplicitVector{});
  }

  static RkhsFunction from_vector(const KernelSpec& k, VectorXd v) {
    if (k.kind != KernelKind::Linear) throw InputError("explicit vector requires the linear kernel");
    detail::check_dim(k, v.size(), "RkhsFunction::from_vector");
    return RkhsFunction(k.validated(), ExplicitVector{std::move(v)});
  }

  static RkhsFunction from_matrix(const KernelSpec& k, MatrixXd F) {
    if (k.kind != KernelKind::Quadratic)
      throw InputError("explicit matrix requires the quadratic kernel");
    if (F.rows() != k.dimension || F.cols() != k.dimension)
      throw InputError("RkhsFunction::from_matrix: matrix must be d x d");
    const double scale = std::max(1.0, F.cwiseAbs().maxCoeff());
    if ((F - F.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InputError("RkhsFunction::from_matrix: matrix is not symmetric");
    return RkhsFunction(k.validated(), ExplicitMatrix{std::move(F)});
  }

  static RkhsFunction representer(const KernelSpec& k, MatrixXd anchors, VectorXd coefficients) {
    if (anchors.rows() != coefficients.size())
      throw InputError("representer: anchor and coefficient counts differ");
    if (anchors.rows() > 0) detail::check_dim(k, anchors.cols(), "representer");
    switch (k.kind) {
      case KernelKind::Linear:
        return RkhsFunction(k.validated(), ExplicitVector{anchors.transpose() * coefficients});
      case KernelKind::Quadratic: {
        MatrixXd F = anchors.transpose() * coefficients.asDiagonal() * anchors;
        F = 0.5 * (F + F.transpose());
        return RkhsFunction(k.validated(), ExplicitMatrix{std::move(F)});
      }
      case KernelKind::Rbf: break;
    }
    if (anchors.rows() == 0) anchors.resize(0, k.dimension);
    return RkhsFunction(k.validated(), Representer{std::move(anchors), std::move(coefficients)});
  }

  // The kernel section k(x, .).
  static RkhsFunction section(const KernelSpec& k, const PointRef& x) {
    return representer(k, x.transpose(), VectorXd::Ones(1));
  }

  // Inverse of features() for finite-rank kernels.
  static RkhsFunction from_features(const KernelSpec& k, const VectorXd& theta) {
    if (k.kind == KernelKind::Linear) return from_vector(k, theta);
    if (k.kind == KernelKind::Quadratic) {
      if (theta.size() != k.dimension * k.dimension)
        throw InputError("from_features: expected d*d coordinates");
      MatrixXd F = Eigen::Map<const MatrixXd>(theta.data(), k.dimension, k.dimension);
      return from_matrix(k, 0.5 * (F + F.transpose()));
    }
    throw UnsupportedError("rbf kernel has no finite feature map");
  }

  const KernelSpec& kernel() const { return kernel_; }
  const Representation& representation() const { return rep_; }
  bool is_representer() const { return std::holds_alternative<Representer>(rep_); }

  // Coordinates in the explicit feature space (finite-rank kernels only).
  VectorXd features() const {
    if (const auto* ev = std::get_if<ExplicitVector>(&rep_)) return ev->v;
    if (const auto* em = std::get_if<ExplicitMatrix>(&rep_))
      return Eigen::Map<const VectorXd>(em->F.data(), em->F.size());
    throw UnsupportedError("representer functions have no explicit features");
  }

  const VectorXd& vector() const {
    if (const auto* ev = std::get_if<ExplicitVector>(&rep_)) return ev->v;
    throw UnsupportedError("function is not stored as an explicit vector");
  }

  const MatrixXd& matrix() const {
    if (const auto* em = std::get_if<ExplicitMatrix>(&rep_)) return em->F;
    throw UnsupportedError("function is not stored as an explicit matrix");
  }

  const Representer& representer_form() const {
    if (const auto* r = std::get_if<Representer>(&rep_)) return *r;
    throw UnsupportedError("function is not stored in representer form");
  }

  double operator()(const PointRef& x) const {
    detail::check_dim(kernel_, x.size(), "rkhs_eval");
    return std::visit(
        [&](const auto& r) -> double {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, ExplicitVector>) {
            return r.v.dot(x);
          } else if constexpr (std::is_same_v<R, ExplicitMatrix>) {
            return x.dot(r.F * x);
          } else {
            if (r.anchors.rows() == 0) return 0.0;
            return (gram(kernel_, x.transpose(), r.anchors) * r.coefficients)(0);
          }
        },
        rep_);
  }

  // Values at every row of X.
  VectorXd evaluate_rows(const PointsRef& X) const {
    if (X.rows() > 0) detail::check_dim(kernel_, X.cols(), "rkhs_eval");
    return std::visit(
        [&](const auto& r) -> VectorXd {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, ExplicitVector>) {
            return X * r.v;
          } else if constexpr (std::is_same_v<R, ExplicitMatrix>) {
            return ((X * r.F).array() * X.array()).rowwise().sum().matrix();
          } else {
            if (r.anchors.rows() == 0) return VectorXd::Zero(X.rows());
            return gram(kernel_, X, r.anchors) * r.coefficients;
          }
        },
        rep_);
  }

  RkhsFunction scaled(double s) const {
    RkhsFunction out = *this;
    std::visit(
        [s](auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, ExplicitVector>) r.v *= s;
          else if constexpr (std::is_same_v<R, ExplicitMatrix>) r.F *= s;
          else r.coefficients *= s;
        },
        out.rep_);
    return out;
  }

  friend RkhsFunction operator+(const RkhsFunction& a, const RkhsFunction& b) {
    if (!(a.kernel_ == b.kernel_)) throw InputError("cannot add functions of different kernels");
    if (a.is_representer()) {
      const auto& ra = a.representer_form();
      const auto& rb = b.representer_form();
      MatrixXd anchors(ra.anchors.rows() + rb.anchors.rows(), a.kernel_.dimension);
      anchors << ra.anchors, rb.anchors;
      VectorXd coef(ra.coefficients.size() + rb.coefficients.size());
      coef << ra.coefficients, rb.coefficients;
      return representer(a.kernel_, std::move(anchors), std::move(coef));
    }
    return from_features(a.kernel_, a.features() + b.features());
  }

  friend RkhsFunction operator-(const RkhsFunction& a, const RkhsFunction& b) {
    return a + b.scaled(-1.0);
  }

 private:
  RkhsFunction(KernelSpec k, Representation rep) : kernel_(k), rep_(std::move(rep)) {}

  KernelSpec kernel_;
  Representation rep_;
};

inline double rkhs_eval(const RkhsFunction& f, const PointRef& x) { return f(x); }

inline double rkhs_inner(const RkhsFunction& f, const RkhsFunction& g) {
  if (!(f.kernel() == g.kernel())) throw InputError("rkhs_inner: kernel mismatch");
  if (f.is_representer() != g.is_representer())
    throw InputError("rkhs_inner: mixed explicit/representer forms");
  if (f.is_representer()) {
    const auto& rf = f.representer_form();
    const auto& rg = g.representer_form();
    if (rf.anchors.rows() == 0 || rg.anchors.rows() == 0) return 0.0;
    return rf.coefficients.dot(gram(f.kernel(), rf.anchors, rg.anchors) * rg.coefficients);
  }
  return f.features().dot(g.features());
}

inline double rkhs_norm(const RkhsFunction& f) {
  return std::sqrt(std::max(0.0, rkhs_inner(f, f)));
}

inline RkhsFunction project_ball(const RkhsFunction& f, double radius) {
  if (!(radius > 0.0)) throw InputError("project_ball: radius must be positive");
  const double nrm = rkhs_norm(f);
  if (nrm <= radius) return f;
  return f.scaled(radius / nrm);
}

/// Functions restricted to a fixed point set, parameterized by a coefficient
/// vector theta with values `design() * theta`.
///
/// Finite-rank kernels use explicit feature coordinates (the RKHS norm is the
/// Euclidean norm of theta). The rbf kernel uses representer coefficients
/// over the evaluation points themselves, so design() is the Gram matrix and
/// ||f||^2 = theta^T K theta. In both cases the functional (RKHS) gradient of
/// sum_i g_i f(x_i) has coordinates functional_gradient(g).
class EvaluationBasis {
 public:
  EvaluationBasis(const KernelSpec& k, MatrixXd points) : kernel_(k.validated()), points_(std::move(points)) {
    if (points_.rows() > 0) detail::check_dim(kernel_, points_.cols(), "EvaluationBasis");
    design_ = kernel_.finite_rank() ? feature_matrix(kernel_, points_) : gram(kernel_, points_, points_);
  }

  const KernelSpec& kernel() const { return kernel_; }
  const MatrixXd& points() const { return points_; }
  const MatrixXd& design() const { return design_; }
  Index num_points() const { return points_.rows(); }
  Index num_params() const { return design_.cols(); }

  VectorXd values(const VectorXd& theta) const { return design_ * theta; }

  VectorXd functional_gradient(const VectorXd& point_weights) const {
    return kernel_.finite_rank() ? VectorXd(design_.transpose() * point_weights) : point_weights;
  }

  VectorXd euclidean_gradient(const VectorXd& point_weights) const {
    return design_.transpose() * point_weights;
  }

  double squared_norm(const VectorXd& theta) const {
    if (kernel_.finite_rank()) return theta.squaredNorm();
    return std::max(0.0, theta.dot(design_ * theta));
  }

  double norm(const VectorXd& theta) const { return std::sqrt(squared_norm(theta)); }

  // Gradient of squared_norm: in functional coordinates it is 2 theta for
  // both parameterizations; the euclidean one differs for representers.
  VectorXd squared_norm_gradient(const VectorXd& theta, bool functional) const {
    if (functional || kernel_.finite_rank()) return 2.0 * theta;
    return 2.0 * (design_ * theta);
  }

  VectorXd project(const VectorXd& theta, double radius) const {
    const double nrm = norm(theta);
    return nrm <= radius ? theta : VectorXd(theta * (radius / nrm));
  }

  RkhsFunction to_function(const VectorXd& theta) const {
    if (kernel_.finite_rank()) return RkhsFunction::from_features(kernel_, theta);
    return RkhsFunction::representer(kernel_, points_, theta);
  }

 private:
  KernelSpec kernel_;
  MatrixXd points_;
  MatrixXd design_;
};

}  // namespace stv
