#pragma once

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "stv/errors.hpp"
#include "stv/kernels.hpp"

namespace stv {

/// Self-normalized importance weights over proposal draws Z:
/// w_i proportional to exp(f(Z_i)) / q(Z_i), i.e. a softmax of the logits
/// f(Z_i) - log q(Z_i), computed after subtracting the largest logit.
inline VectorXd softmax_from_logits(const VectorXd& logits) {
  if (logits.size() < 1) throw InputError("softmax_weights: need at least one draw");
  for (Index i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits(i))) {
      std::ostringstream os;
      os << "softmax_weights: non-finite logit " << logits(i) << " at index " << i;
      throw NumericError(os.str());
    }
  }
  const double top = logits.maxCoeff();
  VectorXd w = (logits.array() - top).exp().matrix();
  return w / w.sum();
}

inline VectorXd softmax_weights(const RkhsFunction& f, const PointsRef& Z, const VectorXd& log_q) {
  if (Z.rows() != log_q.size()) throw InputError("softmax_weights: Z and log_q lengths differ");
  if (Z.rows() < 1) throw InputError("softmax_weights: need at least one draw");
  return softmax_from_logits(f.evaluate_rows(Z) - log_q);
}

}  // namespace stv
