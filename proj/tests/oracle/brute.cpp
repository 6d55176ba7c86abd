#include "oracle/brute.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>

namespace oracle {
namespace {

// Euclidean projection onto {sum(phi) = target, lo <= phi_i <= hi} by
// bisecting the shift in phi_i = clip(v_i + tau).
std::vector<double> project_simplex_box(const std::vector<double>& v, double target, double lo,
                                        double hi) {
  auto shifted_sum = [&](double tau) {
    double s = 0.0;
    for (double x : v) s += std::min(hi, std::max(lo, x + tau));
    return s;
  };
  double tlo = -2.0, thi = 2.0;
  for (double x : v) {
    tlo = std::min(tlo, -x - 2.0);
    thi = std::max(thi, 1.0 - x + 2.0);
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (tlo + thi);
    if (shifted_sum(mid) < target)
      tlo = mid;
    else
      thi = mid;
  }
  double tau = 0.5 * (tlo + thi);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::min(hi, std::max(lo, v[i] + tau));
  return out;
}

}  // namespace

double nystrom_error(const Eigen::MatrixXd& c, const std::vector<int>& sel) {
  int k = static_cast<int>(sel.size());
  Eigen::MatrixXd cs(c.rows(), k);
  Eigen::MatrixXd core(k, k);
  for (int j = 0; j < k; ++j) cs.col(j) = c.col(sel[static_cast<std::size_t>(j)]);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      core(i, j) = c(sel[static_cast<std::size_t>(i)], sel[static_cast<std::size_t>(j)]);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(core);
  Eigen::MatrixXd approx = cs * cod.pseudoInverse() * cs.transpose();
  return (c - approx).norm();
}

NystromSearch exhaustive_nystrom(const Eigen::MatrixXd& c, int k) {
  int dim = static_cast<int>(c.rows());
  if (dim > 12 || k > 6) throw TooLargeError("exhaustive_nystrom: dim <= 12 and k <= 6 required");
  if (k < 1 || k > dim) throw std::invalid_argument("exhaustive_nystrom: bad k");

  NystromSearch result;
  result.best_error = std::numeric_limits<double>::infinity();

  std::vector<int> subset(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) subset[static_cast<std::size_t>(i)] = i;
  while (true) {
    double err = nystrom_error(c, subset);
    if (err < result.best_error) {
      result.best_error = err;
      result.best = subset;
    }
    // next lexicographic combination
    int i = k - 1;
    while (i >= 0 && subset[static_cast<std::size_t>(i)] == dim - k + i) --i;
    if (i < 0) break;
    ++subset[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
  }
  return result;
}

Eigen::VectorXd ridge_scores_direct(const Eigen::MatrixXd& c, double lambda) {
  int d = static_cast<int>(c.rows());
  Eigen::MatrixXd shifted = c + lambda * Eigen::MatrixXd::Identity(d, d);
  // Solve (C + lambda I) X = C columnwise, then read the diagonal of X^T
  // (equivalently of C (C + lambda I)^-1 by symmetry).
  Eigen::MatrixXd x = shifted.ldlt().solve(c);
  return x.diagonal();
}

std::vector<double> pg_solver(const std::vector<double>& scores, double phi_avg, double epsilon,
                              int max_iters, double step) {
  std::size_t n = scores.size();
  double target = phi_avg * static_cast<double>(n);
  const double lo = 1e-12, hi = 1.0;

  std::vector<double> phi(n, phi_avg);
  std::vector<double> trial(n);
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      trial[i] = phi[i] + step * (-scores[i] - epsilon * (std::log(phi[i]) + 1.0));
    std::vector<double> next = project_simplex_box(trial, target, lo, hi);
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) resid = std::max(resid, std::abs(next[i] - phi[i]));
    phi = std::move(next);
    if (resid / step <= 1e-6) return phi;
  }
  throw NonConvergenceError("pg_solver: did not reach the fixed-point tolerance");
}

}  // namespace oracle
