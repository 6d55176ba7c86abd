#pragma once

#include <Eigen/Dense>

#include "core/errors.hpp"

namespace modec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) fail(ErrorCode::NonFinite, std::string(what) + " contains NaN or Inf");
}

inline void require_shape(bool ok, const std::string& message) {
  if (!ok) fail(ErrorCode::ShapeMismatch, message);
}

// Max absolute asymmetry relative to the largest entry magnitude.
inline double symmetry_gap(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

}  // namespace modec
