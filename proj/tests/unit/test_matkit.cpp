#include <doctest.h>

#include <cmath>
#include <functional>

#include "core/matkit.hpp"
#include "core/rng.hpp"

using modec::Error;
using modec::ErrorCode;
using modec::Matrix;
using modec::Rng;
using modec::Vector;

namespace mk = modec::matkit;

namespace {

Matrix random_symmetric(int n, Rng& rng) {
  Matrix a = rng.gaussian_matrix(n, n);
  return 0.5 * (a + a.transpose());
}

Matrix random_psd(int n, int rank, Rng& rng) {
  Matrix b = rng.gaussian_matrix(n, rank);
  return b * b.transpose();
}

ErrorCode thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::BadConfig;
}

}  // namespace

TEST_SUITE("matkit") {

TEST_CASE("sym_eig identity") {
  Matrix eye = Matrix::Identity(3, 3);
  mk::SymEig eig = mk::sym_eig(eye);
  for (int i = 0; i < 3; ++i) CHECK(eig.eigenvalues(i) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((eig.eigenvectors - eye).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sym_eig diagonal is sorted descending") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  mk::SymEig eig = mk::sym_eig(d);
  CHECK(eig.eigenvalues(0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(eig.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((eig.eigenvectors - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sym_eig reconstruction and orthonormality") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_symmetric(5, rng);
    mk::SymEig eig = mk::sym_eig(a);
    Matrix rebuilt = eig.eigenvectors * eig.eigenvalues.asDiagonal() * eig.eigenvectors.transpose();
    CHECK((rebuilt - a).norm() <= 1e-8 * (1.0 + a.norm()));
    Matrix gram = eig.eigenvectors.transpose() * eig.eigenvectors;
    CHECK((gram - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-9);
    for (int i = 0; i + 1 < 5; ++i) CHECK(eig.eigenvalues(i) >= eig.eigenvalues(i + 1));
  }
}

TEST_CASE("sym_eig deterministic across calls") {
  Rng rng(12);
  Matrix a = random_symmetric(6, rng);
  mk::SymEig e1 = mk::sym_eig(a);
  mk::SymEig e2 = mk::sym_eig(a);
  CHECK(e1.eigenvalues == e2.eigenvalues);
  CHECK(e1.eigenvectors == e2.eigenvectors);
}

TEST_CASE("sym_eig rejects bad input") {
  Matrix asym(2, 2);
  asym << 1.0, 2.0, 3.0, 4.0;
  CHECK(thrown_code([&] { mk::sym_eig(asym); }) == ErrorCode::NonSymmetric);

  Matrix nan2 = Matrix::Zero(2, 2);
  nan2(0, 0) = std::nan("");
  CHECK(thrown_code([&] { mk::sym_eig(nan2); }) == ErrorCode::NonFinite);

  Matrix rect = Matrix::Zero(2, 3);
  CHECK(thrown_code([&] { mk::sym_eig(rect); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("psd_sqrt diagonal and identity") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  Matrix root = mk::psd_sqrt(d);
  CHECK(root(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(root(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(root(0, 1)) <= 1e-14);

  Matrix eye = Matrix::Identity(4, 4);
  CHECK((mk::psd_sqrt(eye) - eye).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("psd_sqrt round trip on random PSD") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix c = random_psd(4, 4, rng);
    Matrix root = mk::psd_sqrt(c);
    CHECK((root * root - c).norm() <= 1e-8 * (1.0 + c.norm()));
    CHECK(modec::symmetry_gap(root) <= 1e-12);
  }
}

TEST_CASE("psd_sqrt rejects indefinite input") {
  Matrix neg = -Matrix::Identity(3, 3);
  CHECK(thrown_code([&] { mk::psd_sqrt(neg); }) == ErrorCode::NotPsd);
}

TEST_CASE("psd_inv_sqrt diagonal cases") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  Matrix r = mk::psd_inv_sqrt(d);
  CHECK(r(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r(1, 1) == doctest::Approx(1.0).epsilon(1e-14));

  Matrix sing = Matrix::Zero(2, 2);
  sing(0, 0) = 1.0;
  Matrix rs = mk::psd_inv_sqrt(sing);
  CHECK(rs(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(rs(1, 1)) == 0.0);
}

TEST_CASE("psd_inv_sqrt squares to a pseudo-inverse") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix c = random_psd(5, 2, rng);  // rank deficient on purpose
    Matrix r = mk::psd_inv_sqrt(c);
    Matrix cplus = r * r;
    CHECK((c * cplus * c - c).norm() <= 1e-8 * (1.0 + c.norm()));
    CHECK((cplus * c * cplus - cplus).norm() <= 1e-8 * (1.0 + cplus.norm()));
  }
}

TEST_CASE("psd_inv_sqrt validates rel_cutoff") {
  Matrix eye = Matrix::Identity(2, 2);
  CHECK(thrown_code([&] { mk::psd_inv_sqrt(eye, 0.0); }) == ErrorCode::BadConfig);
  CHECK(thrown_code([&] { mk::psd_inv_sqrt(eye, 1.5); }) == ErrorCode::BadConfig);
}

TEST_CASE("svd diagonal and zero") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 2.0;
  mk::Svd dec = mk::svd(d);
  CHECK(dec.singular_values(0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(dec.singular_values(1) == doctest::Approx(2.0).epsilon(1e-14));

  mk::Svd z = mk::svd(Matrix::Zero(3, 2));
  CHECK(z.singular_values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("svd reconstruction and truncation error") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = rng.gaussian_matrix(6, 3);
    mk::Svd dec = mk::svd(a);
    Matrix rebuilt = dec.u * dec.singular_values.asDiagonal() * dec.vt;
    CHECK((rebuilt - a).norm() <= 1e-8 * (1.0 + a.norm()));

    for (int k = 0; k <= 3; ++k) {
      Matrix approx = dec.u.leftCols(k) *
                      Vector(dec.singular_values.head(k)).asDiagonal() * dec.vt.topRows(k);
      double tail = 0.0;
      for (int i = k; i < dec.singular_values.size(); ++i)
        tail += dec.singular_values(i) * dec.singular_values(i);
      double resid = (a - approx).squaredNorm();
      CHECK(resid == doctest::Approx(tail).epsilon(1e-10).scale(1.0 + tail));
    }
  }
}

TEST_CASE("svd deterministic across calls") {
  Rng rng(16);
  Matrix a = rng.gaussian_matrix(5, 4);
  mk::Svd d1 = mk::svd(a);
  mk::Svd d2 = mk::svd(a);
  CHECK(d1.u == d2.u);
  CHECK(d1.singular_values == d2.singular_values);
  CHECK(d1.vt == d2.vt);
}

TEST_CASE("pinv diagonal cases") {
  CHECK((mk::pinv(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <=
        1e-12);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  Matrix p = mk::pinv(d);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(1, 1) == 0.0);
}

TEST_CASE("pinv satisfies the Moore-Penrose identities") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = trial % 2 == 0 ? random_psd(4, 4, rng) : rng.gaussian_matrix(5, 3);
    Matrix p = mk::pinv(a);
    double scale = 1.0 + a.norm();
    CHECK((a * p * a - a).norm() <= 1e-8 * scale);
    CHECK((p * a * p - p).norm() <= 1e-8 * (1.0 + p.norm()));
    CHECK(modec::symmetry_gap(a * p) <= 1e-8);
    CHECK(modec::symmetry_gap(p * a) <= 1e-8);
  }
}

}  // TEST_SUITE
