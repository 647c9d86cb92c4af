#pragma once

#include <cmath>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "stv/errors.hpp"
#include "stv/models.hpp"
#include "stv/random.hpp"

namespace stv {

struct PointMass {
  VectorXd location;
};

using OutlierLaw = std::variant<Gaussian, PointMass>;

enum class Mixing { Bernoulli, ExactCount };

/// (1 - eps) core + eps outlier.
struct ContaminationSpec {
  double eps = 0.0;
  Gaussian core = Gaussian::standard(1);
  OutlierLaw outlier = PointMass{VectorXd::Zero(1)};
  Mixing mixing = Mixing::Bernoulli;

  Index dimension() const { return core.dimension(); }

  void validate() const {
    if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("ContaminationSpec: eps must lie in [0, 1]");
    const Index od = std::visit(
        [](const auto& o) -> Index {
          if constexpr (std::is_same_v<std::decay_t<decltype(o)>, Gaussian>) return o.dimension();
          else return o.location.size();
        },
        outlier);
    if (od != core.dimension()) throw InputError("ContaminationSpec: core and outlier dimensions differ");
  }
};

struct ContaminatedData {
  MatrixXd data;
  std::vector<bool> outlier;  // diagnostics only
};

/// Rows are drawn from three independent streams derived from `seed`: the
/// labels, the core rows and the outlier rows. Row i is the i-th core draw
/// unless labelled an outlier, so datasets that differ only in eps share
/// their core rows.
inline ContaminatedData sample_huber(const ContaminationSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 0) throw InputError("sample_huber: n must be nonnegative");
  RandomStream label_rng = make_stream(seed, "labels");
  RandomStream core_rng = make_stream(seed, "core");
  RandomStream outlier_rng = make_stream(seed, "outliers");

  std::vector<bool> labels(static_cast<std::size_t>(n), false);
  if (spec.mixing == Mixing::Bernoulli) {
    for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = label_rng.uniform() < spec.eps;
  } else {
    const auto k = static_cast<std::size_t>(std::llround(spec.eps * static_cast<double>(n)));
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(label_rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      labels[idx[i]] = true;
    }
  }

  MatrixXd data = spec.core.sample(n, core_rng);
  for (Index i = 0; i < n; ++i) {
    if (!labels[static_cast<std::size_t>(i)]) continue;
    if (const auto* g = std::get_if<Gaussian>(&spec.outlier)) {
      data.row(i) = g->sample(1, outlier_rng).row(0);
    } else {
      data.row(i) = std::get<PointMass>(spec.outlier).location.transpose();
    }
  }
  return {std::move(data), std::move(labels)};
}

// 0.9 N(0, I) + 0.1 N(5 e, I).
inline ContaminationSpec scenario_mean(Index d) {
  if (d < 1) throw InputError("scenario_mean: d must be >= 1");
  return {0.1, Gaussian::standard(d), Gaussian(VectorXd::Constant(d, 5.0), MatrixXd::Identity(d, d)),
          Mixing::Bernoulli};
}

// Sigma_ij = 2^{-|i-j|}.
inline MatrixXd geometric_covariance(Index d) {
  MatrixXd S(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) S(i, j) = std::ldexp(1.0, -static_cast<int>(std::abs(i - j)));
  return S;
}

// 0.8 N(0, Sigma) + 0.2 N(6 e, Sigma).
inline ContaminationSpec scenario_cov(Index d) {
  if (d < 1) throw InputError("scenario_cov: d must be >= 1");
  const MatrixXd S = geometric_covariance(d);
  return {0.2, Gaussian(VectorXd::Zero(d), S), Gaussian(VectorXd::Constant(d, 6.0), S), Mixing::Bernoulli};
}

}  // namespace stv
