#pragma once

#include "core/matrix.hpp"

namespace modec::matkit {

struct SymEig {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns, column i pairs with eigenvalues(i)
};

struct Svd {
  Matrix u;
  Vector singular_values;  // descending, nonnegative
  Matrix vt;
};

// Eigendecomposition of a symmetric matrix with a fixed sign convention
// (first nonzero entry of each eigenvector is positive) so results are
// reproducible bit for bit.
SymEig sym_eig(const Matrix& a);

// Symmetric PSD square root. Eigenvalues slightly below zero (down to
// -1e-10 * lambda_max) are treated as roundoff and clamped.
Matrix psd_sqrt(const Matrix& c);

// Pseudo-inverse square root: eigenvalues at or below rel_cutoff * lambda_max
// map to zero instead of blowing up.
Matrix psd_inv_sqrt(const Matrix& c, double rel_cutoff = 1e-12);

// Thin SVD with the same deterministic sign convention applied to U's columns.
Svd svd(const Matrix& a);

// Moore-Penrose pseudo-inverse via SVD with relative singular-value cutoff.
Matrix pinv(const Matrix& a, double rel_cutoff = 1e-12);

}  // namespace modec::matkit
