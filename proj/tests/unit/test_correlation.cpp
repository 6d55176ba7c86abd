#include <doctest.h>

#include <functional>

#include "core/correlation.hpp"
#include "core/matkit.hpp"
#include "core/rng.hpp"

using modec::Error;
using modec::ErrorCode;
using modec::Matrix;
using modec::Rng;

namespace corr = modec::correlation;
namespace toy = modec::toymodel;

TEST_SUITE("correlation") {

TEST_CASE("single unit row adds a rank-1 outer product") {
  corr::CorrelationMatrix c(3);
  Matrix row = Matrix::Zero(1, 3);
  row(0, 0) = 1.0;
  corr::accumulate(c, row);
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 0) = 1.0;
  CHECK(c.sum == expect);
  CHECK(c.n_tokens == 1);
}

TEST_CASE("zero block leaves the sum unchanged") {
  corr::CorrelationMatrix c(4);
  Rng rng(31);
  corr::accumulate(c, rng.gaussian_matrix(5, 4));
  Matrix before = c.sum;
  corr::accumulate(c, Matrix::Zero(3, 4));
  CHECK(c.sum == before);
  CHECK(c.n_tokens == 8);
}

TEST_CASE("two blocks equal one concatenated block") {
  Rng rng(32);
  Matrix a = rng.gaussian_matrix(6, 5);
  Matrix b = rng.gaussian_matrix(4, 5);

  corr::CorrelationMatrix split(5);
  corr::accumulate(split, a);
  corr::accumulate(split, b);

  Matrix cat(10, 5);
  cat.topRows(6) = a;
  cat.bottomRows(4) = b;
  corr::CorrelationMatrix whole(5);
  corr::accumulate(whole, cat);

  CHECK((split.sum - whole.sum).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + whole.sum.cwiseAbs().maxCoeff()));
}

TEST_CASE("order independence and scaling covariance") {
  Rng rng(33);
  Matrix a = rng.gaussian_matrix(3, 4);
  Matrix b = rng.gaussian_matrix(7, 4);
  Matrix c = rng.gaussian_matrix(5, 4);

  corr::CorrelationMatrix fwd(4), rev(4);
  corr::accumulate(fwd, a);
  corr::accumulate(fwd, b);
  corr::accumulate(fwd, c);
  corr::accumulate(rev, c);
  corr::accumulate(rev, a);
  corr::accumulate(rev, b);
  CHECK((fwd.sum - rev.sum).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + fwd.sum.cwiseAbs().maxCoeff()));

  corr::CorrelationMatrix scaled(4);
  corr::accumulate(scaled, 2.0 * a);
  corr::CorrelationMatrix plain(4);
  corr::accumulate(plain, a);
  CHECK((scaled.sum - 4.0 * plain.sum).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + scaled.sum.cwiseAbs().maxCoeff()));
}

TEST_CASE("accumulated sums stay symmetric and PSD") {
  Rng rng(34);
  corr::CorrelationMatrix c(6);
  for (int i = 0; i < 5; ++i) corr::accumulate(c, rng.gaussian_matrix(4, 6));
  CHECK(modec::symmetry_gap(c.sum) <= 1e-12);
  modec::matkit::SymEig eig = modec::matkit::sym_eig(c.sum);
  double lmax = eig.eigenvalues(0);
  CHECK(eig.eigenvalues(eig.eigenvalues.size() - 1) >= -1e-10 * lmax);
}

TEST_CASE("shape and finiteness violations are rejected") {
  corr::CorrelationMatrix c(3);
  Rng rng(35);
  try {
    corr::accumulate(c, rng.gaussian_matrix(2, 4));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  Matrix bad = Matrix::Zero(1, 3);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    corr::accumulate(c, bad);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("layer correlations match offline recomputation") {
  toy::ModelConfig cfg;
  cfg.d_hidden = 16;
  cfg.d_intermediate = 24;
  cfg.n_heads = 2;
  cfg.n_kv_heads = 2;
  cfg.n_layers = 1;
  toy::Model m = toy::make_toy_model(cfg, 40);
  toy::CalibrationSet calib = toy::make_calibration(3, 6, cfg.d_hidden, 41);
  std::vector<toy::LayerTaps> taps = toy::capture_activations(m, calib);
  corr::LayerCorrelations lc = corr::build_layer_correlations(taps[0], cfg);

  CHECK(lc.mlp.dim() == cfg.d_intermediate);
  CHECK(lc.input.dim() == cfg.d_hidden);
  REQUIRE(lc.query.size() == 2);
  REQUIRE(lc.key.size() == 2);
  CHECK(lc.mlp.n_tokens == 18);

  Matrix mlp_expect = Matrix::Zero(cfg.d_intermediate, cfg.d_intermediate);
  Matrix input_expect = Matrix::Zero(cfg.d_hidden, cfg.d_hidden);
  Matrix q0_expect = Matrix::Zero(cfg.head_dim(), cfg.head_dim());
  for (int s = 0; s < 3; ++s) {
    mlp_expect += taps[0].mlp_act[s].transpose() * taps[0].mlp_act[s];
    input_expect += taps[0].attn_input[s].transpose() * taps[0].attn_input[s];
    q0_expect += taps[0].q_rot[0][s].transpose() * taps[0].q_rot[0][s];
  }
  CHECK((lc.mlp.sum - mlp_expect).cwiseAbs().maxCoeff() <=
        1e-10 * (1.0 + mlp_expect.cwiseAbs().maxCoeff()));
  CHECK((lc.input.sum - input_expect).cwiseAbs().maxCoeff() <=
        1e-10 * (1.0 + input_expect.cwiseAbs().maxCoeff()));
  CHECK((lc.query[0].sum - q0_expect).cwiseAbs().maxCoeff() <=
        1e-10 * (1.0 + q0_expect.cwiseAbs().maxCoeff()));
}

TEST_CASE("one head equals the whole projection; one token gives rank one") {
  toy::ModelConfig cfg;
  cfg.d_hidden = 8;
  cfg.d_intermediate = 8;
  cfg.n_heads = 1;
  cfg.n_kv_heads = 1;
  cfg.n_layers = 1;
  toy::Model m = toy::make_toy_model(cfg, 42);
  toy::CalibrationSet calib =
      toy::make_calibration(1, 1, cfg.d_hidden, 43);  // single token
  std::vector<toy::LayerTaps> taps = toy::capture_activations(m, calib);
  corr::LayerCorrelations lc = corr::build_layer_correlations(taps[0], cfg);

  // With one head, the per-head query correlation covers the whole projection.
  CHECK(lc.query[0].dim() == cfg.d_hidden);

  // A single token row yields a rank-1 Gram matrix.
  modec::matkit::SymEig eig = modec::matkit::sym_eig(lc.query[0].sum);
  for (int i = 1; i < eig.eigenvalues.size(); ++i)
    CHECK(std::abs(eig.eigenvalues(i)) <= 1e-10 * (1.0 + eig.eigenvalues(0)));
}

}  // TEST_SUITE
