#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "core/allocation.hpp"
#include "core/rng.hpp"
#include "oracle/brute.hpp"

using modec::Error;
using modec::ErrorCode;
using modec::Matrix;
using modec::Rng;

namespace alloc = modec::allocation;

namespace {

ErrorCode thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::BadConfig;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double weighted_mean(const std::vector<double>& v, const std::vector<double>& w) {
  double s = 0.0, tw = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += w[i] * v[i];
    tw += w[i];
  }
  return s / tw;
}

}  // namespace

TEST_SUITE("allocation") {

TEST_CASE("block influence: identical, antipodal and orthogonal streams") {
  Rng rng(5000);
  Matrix x = rng.gaussian_matrix(6, 4);
  CHECK(std::abs(alloc::block_influence(x, x)) <= 1e-14);
  CHECK(std::abs(alloc::block_influence(x, Matrix(-x)) - 2.0) <= 1e-12);

  Matrix a = Matrix::Zero(3, 2), b = Matrix::Zero(3, 2);
  for (int r = 0; r < 3; ++r) {
    a(r, 0) = 1.0 + r;
    b(r, 1) = 2.0 - 0.5 * r;
  }
  CHECK(std::abs(alloc::block_influence(a, b) - 1.0) <= 1e-12);
}

TEST_CASE("block influence skips zero rows and checks shapes") {
  Matrix in = Matrix::Zero(3, 2), out = Matrix::Zero(3, 2);
  in(0, 0) = 1.0;
  out(0, 0) = -2.0;  // antipodal, the only row that counts
  in(1, 0) = 1.0;    // out row 1 is zero: skipped
  CHECK(std::abs(alloc::block_influence(in, out) - 2.0) <= 1e-12);
  CHECK(alloc::block_influence(Matrix::Zero(2, 2), Matrix::Zero(2, 2)) == 0.0);

  CHECK(thrown_code([] {
          alloc::block_influence(Matrix::Zero(2, 2), Matrix::Zero(3, 2));
        }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("block influence accumulates across blocks like one big block") {
  Rng rng(5010);
  Matrix a_in = rng.gaussian_matrix(5, 4), a_out = rng.gaussian_matrix(5, 4);
  Matrix b_in = rng.gaussian_matrix(3, 4), b_out = rng.gaussian_matrix(3, 4);

  alloc::BiAccumulator bi;
  bi.add(a_in, a_out);
  bi.add(b_in, b_out);

  Matrix cat_in(8, 4), cat_out(8, 4);
  cat_in << a_in, b_in;
  cat_out << a_out, b_out;
  CHECK(std::abs(bi.score() - alloc::block_influence(cat_in, cat_out)) <= 1e-12);
}

TEST_CASE("allocator closed forms") {
  alloc::SparsityPlan flat = alloc::allocate({1.7, 1.7, 1.7}, 0.4, 2.0);
  for (double p : flat.phi) CHECK(std::abs(p - 0.4) <= 1e-14);
  CHECK_FALSE(flat.epsilon_too_small);

  alloc::SparsityPlan two = alloc::allocate({0.0, std::log(3.0)}, 0.25, 1.0);
  CHECK(std::abs(two.phi[0] - 0.375) <= 1e-12);
  CHECK(std::abs(two.phi[1] - 0.125) <= 1e-12);

  alloc::SparsityPlan wide = alloc::allocate({0.3, 4.1, 2.2, 0.9}, 0.35, 1e6);
  for (double p : wide.phi) CHECK(std::abs(p - 0.35) <= 1e-4);
}

TEST_CASE("allocator input guards") {
  CHECK(thrown_code([] { alloc::allocate({1.0, 2.0}, 0.0, 1.0); }) == ErrorCode::BadTarget);
  CHECK(thrown_code([] { alloc::allocate({1.0, 2.0}, 1.0, 1.0); }) == ErrorCode::BadTarget);
  CHECK(thrown_code([] { alloc::allocate({1.0, 2.0}, 0.3, 0.0); }) == ErrorCode::BadConfig);
  CHECK(thrown_code([] { alloc::allocate({}, 0.3, 1.0); }) == ErrorCode::BadConfig);
  double nan = std::nan("");
  CHECK(thrown_code([&] { alloc::allocate({1.0, nan}, 0.3, 1.0); }) == ErrorCode::NonFinite);
}

TEST_CASE("mean constraint is exact and shift invariant") {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(5100 + trial);
    int layers = 3 + trial % 6;
    std::vector<double> s(static_cast<std::size_t>(layers));
    for (double& x : s) x = 2.0 * rng.gaussian();
    double phi_avg = 0.05 + 0.5 * rng.uniform();
    double eps = 0.3 + 3.0 * rng.uniform();

    alloc::SparsityPlan plan = alloc::allocate(s, phi_avg, eps);
    CHECK(std::abs(mean(plan.phi) - phi_avg) <= 1e-12);

    std::vector<double> shifted = s;
    for (double& x : shifted) x += 17.25;
    alloc::SparsityPlan plan2 = alloc::allocate(shifted, phi_avg, eps);
    for (std::size_t i = 0; i < plan.phi.size(); ++i)
      CHECK(std::abs(plan.phi[i] - plan2.phi[i]) <= 1e-12);

    std::vector<double> mha(s.size());
    for (double& x : mha) x = 2.0 * rng.gaussian();
    alloc::SparsityPlan refined = alloc::allocate_refined(s, mha, phi_avg, eps);
    CHECK(std::abs(weighted_mean(refined.phi, refined.weights) - phi_avg) <= 1e-12);
  }
}

TEST_CASE("lower scores get more sparsity") {
  Rng rng(5200);
  std::vector<double> s(7);
  for (double& x : s) x = rng.gaussian();
  alloc::SparsityPlan plan = alloc::allocate(s, 0.3, 0.8);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[i] < s[j]) CHECK(plan.phi[i] > plan.phi[j]);
}

TEST_CASE("small epsilon flags the plan; clamping restores feasibility") {
  std::vector<double> s = {0.0, 5.0, 6.0, 7.0};
  alloc::SparsityPlan plan = alloc::allocate(s, 0.3, 0.5);
  CHECK(plan.epsilon_too_small);
  CHECK(*std::max_element(plan.phi.begin(), plan.phi.end()) > 1.0);

  alloc::clamp_plan(plan);
  CHECK(plan.clamped);
  CHECK(plan.phi[0] == 1.0);
  for (double p : plan.phi) {
    CHECK(p <= 1.0);
    CHECK(p >= 0.0);
  }
  CHECK(std::abs(mean(plan.phi) - 0.3) <= 1e-12);
  CHECK(plan.phi[1] > plan.phi[2]);
  CHECK(plan.phi[2] > plan.phi[3]);

  // Clamping a feasible plan is a no-op.
  alloc::SparsityPlan ok = alloc::allocate(s, 0.3, 50.0);
  std::vector<double> before = ok.phi;
  alloc::clamp_plan(ok);
  CHECK_FALSE(ok.clamped);
  CHECK(ok.phi == before);
}

TEST_CASE("refined allocator splits mlp and mha") {
  alloc::SparsityPlan zeros = alloc::allocate_refined({0.0, 0.0}, {0.0, 0.0}, 0.3, 1.0);
  for (double p : zeros.phi) CHECK(std::abs(p - 0.3) <= 1e-14);

  // Same score, heavier mlp weight: the mlp block ends up less compressed.
  alloc::SparsityPlan one = alloc::allocate_refined({0.5}, {0.5}, 0.25, 1.0);
  CHECK(one.phi[0] < one.phi[1]);
  CHECK(std::abs(weighted_mean(one.phi, one.weights) - 0.25) <= 1e-12);

  alloc::SparsityPlan cold = alloc::allocate_refined({0.9, 0.1}, {1.4, 0.3}, 0.3, 1e7);
  for (double p : cold.phi) CHECK(std::abs(p - 0.3) <= 1e-4);

  CHECK(thrown_code([] { alloc::allocate_refined({1.0}, {1.0, 2.0}, 0.3, 1.0); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("temperature autotune hits the requested peak") {
  alloc::AutotuneResult flat = alloc::autotune_epsilon({2.0, 2.0, 2.0}, 0.3);
  CHECK(flat.epsilon == 1.0);
  CHECK(std::abs(flat.max_phi - 0.3) <= 1e-12);
  CHECK_FALSE(flat.on_target);

  std::vector<double> s = {0.0, 5.0, 9.0, 10.0};
  alloc::AutotuneResult tuned = alloc::autotune_epsilon(s, 0.3);
  CHECK(tuned.on_target);
  CHECK(tuned.max_phi >= 0.78);
  CHECK(tuned.max_phi <= 0.82);
  alloc::SparsityPlan at = alloc::allocate(s, 0.3, tuned.epsilon);
  CHECK(std::abs(*std::max_element(at.phi.begin(), at.phi.end()) - tuned.max_phi) <= 1e-12);

  // Tighter peaks need colder temperatures.
  double prev = std::numeric_limits<double>::infinity();
  for (double target : {0.5, 0.6, 0.7, 0.8}) {
    alloc::AutotuneResult r = alloc::autotune_epsilon(s, 0.3, target);
    CHECK(r.on_target);
    CHECK(r.epsilon <= prev);
    prev = r.epsilon;
  }

  // Two layers cap the peak at 2 * phi_avg; the result reports the miss.
  alloc::AutotuneResult low = alloc::autotune_epsilon({0.0, 8.0}, 0.3);
  CHECK_FALSE(low.on_target);
  CHECK(low.max_phi <= 0.6 + 1e-9);

  // The weighted variant tunes the same way over both block families.
  std::vector<double> mlp = {0.0, 2.0, 4.0, 6.0};
  std::vector<double> mha = {1.0, 3.0, 5.0, 9.0};
  alloc::AutotuneResult ref = alloc::autotune_epsilon_refined(mlp, mha, 0.3);
  CHECK(ref.on_target);
  alloc::SparsityPlan ref_at = alloc::allocate_refined(mlp, mha, 0.3, ref.epsilon);
  CHECK(std::abs(*std::max_element(ref_at.phi.begin(), ref_at.phi.end()) - ref.max_phi) <= 1e-12);
}

TEST_CASE("closed form matches a projected-gradient solve") {
  int compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(5300 + trial);
    int layers = 4 + trial % 5;
    std::vector<double> s(static_cast<std::size_t>(layers));
    for (double& x : s) x = 0.5 * rng.gaussian();

    alloc::SparsityPlan plan = alloc::allocate(s, 0.2, 1.0);
    if (plan.epsilon_too_small) continue;
    std::vector<double> pg = oracle::pg_solver(s, 0.2, 1.0);
    double gap = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      gap = std::max(gap, std::abs(pg[i] - plan.phi[i]));
    CHECK(gap <= 1e-4);
    ++compared;
  }
  CHECK(compared >= 40);
}

TEST_CASE("plans survive the json round trip") {
  alloc::SparsityPlan plan = alloc::allocate_refined({0.4, 0.1}, {0.8, 0.2}, 0.3, 0.7);
  std::string text = alloc::plan_to_json(plan);
  alloc::SparsityPlan back = alloc::plan_from_json(text);
  CHECK(back.phi == plan.phi);
  CHECK(back.scores == plan.scores);
  CHECK(back.weights == plan.weights);
  CHECK(back.epsilon == plan.epsilon);
  CHECK(back.phi_avg == plan.phi_avg);
  CHECK(back.epsilon_too_small == plan.epsilon_too_small);
  CHECK(back.clamped == plan.clamped);

  CHECK(thrown_code([] { alloc::plan_from_json("{ not json"); }) == ErrorCode::IoError);
}

}  // TEST_SUITE
