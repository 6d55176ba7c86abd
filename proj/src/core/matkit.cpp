#include "core/matkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace modec::matkit {
namespace {

constexpr double kSymmetryTol = 1e-9;
constexpr double kPsdTol = 1e-10;

// Makes the first entry with non-negligible magnitude positive. Entries below
// 1e-12 of the column max are skipped so the convention does not hinge on
// roundoff-level values.
void fix_column_signs(Matrix& m) {
  for (int c = 0; c < m.cols(); ++c) {
    double colmax = m.col(c).cwiseAbs().maxCoeff();
    if (colmax == 0.0) continue;
    for (int r = 0; r < m.rows(); ++r) {
      double v = m(r, c);
      if (std::abs(v) > 1e-12 * colmax) {
        if (v < 0.0) m.col(c) = -m.col(c);
        break;
      }
    }
  }
}

void require_symmetric_input(const Matrix& a, const char* op) {
  require_shape(a.rows() == a.cols(), std::string(op) + ": matrix must be square");
  require_finite(a, op);
  if (symmetry_gap(a) > kSymmetryTol)
    fail(ErrorCode::NonSymmetric, std::string(op) + ": input exceeds symmetry tolerance");
}

void require_cutoff(double rel_cutoff, const char* op) {
  if (!(rel_cutoff > 0.0 && rel_cutoff < 1.0))
    fail(ErrorCode::BadConfig, std::string(op) + ": rel_cutoff must lie in (0,1)");
}

// Eigen returns ascending eigenvalues; reorder descending with a stable
// tie-break so repeated eigenvalues keep the solver's natural vector order.
SymEig sorted_descending(const Eigen::SelfAdjointEigenSolver<Matrix>& solver) {
  const Vector& vals = solver.eigenvalues();
  const Matrix& vecs = solver.eigenvectors();
  int n = static_cast<int>(vals.size());

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return vals(i) > vals(j); });

  SymEig out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(vecs.rows(), n);
  for (int i = 0; i < n; ++i) {
    out.eigenvalues(i) = vals(order[i]);
    out.eigenvectors.col(i) = vecs.col(order[i]);
  }
  fix_column_signs(out.eigenvectors);
  return out;
}

// Shared eigen-path for the PSD transforms: clamp tiny negatives, apply f to
// the spectrum, rebuild symmetrically.
Matrix psd_transform(const Matrix& c, const char* op, double rel_cutoff,
                     double (*f)(double, double, double)) {
  require_symmetric_input(c, op);
  Matrix sym = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  SymEig eig = sorted_descending(solver);

  double lmax = eig.eigenvalues.size() > 0 ? std::max(eig.eigenvalues(0), 0.0) : 0.0;
  double lmin = eig.eigenvalues.size() > 0 ? eig.eigenvalues(eig.eigenvalues.size() - 1) : 0.0;
  if (lmin < -kPsdTol * std::max(lmax, 1e-300))
    fail(ErrorCode::NotPsd, std::string(op) + ": negative eigenvalue beyond clamp tolerance");

  Vector mapped(eig.eigenvalues.size());
  for (int i = 0; i < mapped.size(); ++i)
    mapped(i) = f(std::max(eig.eigenvalues(i), 0.0), lmax, rel_cutoff);

  Matrix out = eig.eigenvectors * mapped.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
  require_symmetric_input(a, "sym_eig");
  Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  return sorted_descending(solver);
}

Matrix psd_sqrt(const Matrix& c) {
  return psd_transform(c, "psd_sqrt", 0.0,
                       [](double l, double, double) { return std::sqrt(l); });
}

Matrix psd_inv_sqrt(const Matrix& c, double rel_cutoff) {
  require_cutoff(rel_cutoff, "psd_inv_sqrt");
  return psd_transform(c, "psd_inv_sqrt", rel_cutoff,
                       [](double l, double lmax, double cut) {
                         return l > cut * lmax ? 1.0 / std::sqrt(l) : 0.0;
                       });
}

Svd svd(const Matrix& a) {
  require_finite(a, "svd");
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out;
  out.u = solver.matrixU();
  out.singular_values = solver.singularValues();
  Matrix v = solver.matrixV();

  // Flip signs on U columns and mirror the flip on V so U S V^T is unchanged.
  for (int c = 0; c < out.u.cols(); ++c) {
    double colmax = out.u.col(c).cwiseAbs().maxCoeff();
    if (colmax == 0.0) continue;
    for (int r = 0; r < out.u.rows(); ++r) {
      double val = out.u(r, c);
      if (std::abs(val) > 1e-12 * colmax) {
        if (val < 0.0) {
          out.u.col(c) = -out.u.col(c);
          v.col(c) = -v.col(c);
        }
        break;
      }
    }
  }
  out.vt = v.transpose();
  return out;
}

Matrix pinv(const Matrix& a, double rel_cutoff) {
  require_cutoff(rel_cutoff, "pinv");
  require_finite(a, "pinv");
  Svd dec = svd(a);
  double smax = dec.singular_values.size() > 0 ? dec.singular_values(0) : 0.0;
  Vector inv(dec.singular_values.size());
  for (int i = 0; i < inv.size(); ++i) {
    double s = dec.singular_values(i);
    inv(i) = s > rel_cutoff * smax ? 1.0 / s : 0.0;
  }
  return dec.vt.transpose() * inv.asDiagonal() * dec.u.transpose();
}

}  // namespace modec::matkit
