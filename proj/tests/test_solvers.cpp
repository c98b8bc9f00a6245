#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "pbf/errors.hpp"
#include "pbf/solvers/bilinear.hpp"
#include "pbf/solvers/linear.hpp"
#include "pbf/solvers/lp.hpp"

using namespace pbf::solvers;

namespace {

Eigen::MatrixXd spd3() {
  Eigen::MatrixXd q(3, 3);
  q << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  return q;
}

}  // namespace

// ---------------------------------------------------------------- linear

TEST_CASE("indefinite factorization solves forward and transposed systems") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd m(6, 6);
  for (Eigen::Index r = 0; r < 6; ++r) {
    for (Eigen::Index c = 0; c < 6; ++c) m(r, c) = gauss(rng);
  }
  Eigen::VectorXd rhs(6);
  for (Eigen::Index r = 0; r < 6; ++r) rhs(r) = gauss(rng);
  const IndefiniteFactorization fact(m, 1e-12, /*require_symmetric=*/false);
  const Eigen::VectorXd x = fact.solve(rhs);
  CHECK((m * x - rhs).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::VectorXd xt = fact.solve_transposed(rhs);
  CHECK((m.transpose() * xt - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("singular systems are reported, not silently solved") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;  // rank 2
  CHECK_THROWS_AS(IndefiniteFactorization(m, 1e-12, false),
                  pbf::SingularMatrix);
}

TEST_CASE("equality-constrained qp matches the reference solution") {
  // Reference computed with a separate dense KKT solve.
  Eigen::VectorXd c(3);
  c << -1, 2, 0.5;
  Eigen::MatrixXd a(2, 3);
  a << 1, 1, 1, 1, -1, 0;
  Eigen::VectorXd b(2);
  b << 1, 0.5;
  const EqQpSolution sol = solve_eq_qp(spd3(), c, a, b);
  CHECK(sol.x(0) == doctest::Approx(0.45000000000000001).epsilon(1e-12));
  CHECK(sol.x(1) == doctest::Approx(-0.049999999999999982).epsilon(1e-12));
  CHECK(sol.x(2) == doctest::Approx(0.59999999999999998).epsilon(1e-12));
  CHECK(sol.duals(0) == doctest::Approx(-1.675).epsilon(1e-12));
  CHECK(sol.duals(1) == doctest::Approx(0.92499999999999993).epsilon(1e-12));
  // Stationarity: Q x + c + A' duals = 0, and feasibility A x = b.
  const Eigen::VectorXd grad =
      spd3() * sol.x + c + a.transpose() * sol.duals;
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-11);
  CHECK((a * sol.x - b).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("box qp matches the reference active set") {
  // Reference computed by enumerating all 27 bound configurations.
  Eigen::VectorXd c(3);
  c << -20, 12, -3;
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(3, 2.0);
  const BoxQpSolution sol = solve_box_qp(spd3(), c, lo, hi);
  CHECK(sol.x(0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(sol.x(1) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(sol.x(2) == doctest::Approx(1.5).epsilon(1e-10));
  const double obj = 0.5 * sol.x.dot(spd3() * sol.x) + c.dot(sol.x);
  CHECK(obj == doctest::Approx(-34.25).epsilon(1e-12));
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("box qp satisfies its optimality conditions on random instances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index n = 2 + Eigen::Index(rng() % 5);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c2 = 0; c2 < n; ++c2) m(r, c2) = gauss(rng);
    }
    const Eigen::MatrixXd q =
        m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd c(n);
    for (Eigen::Index r = 0; r < n; ++r) c(r) = 3.0 * gauss(rng);
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -1.0);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 1.0);
    const BoxQpSolution sol = solve_box_qp(q, c, lo, hi);
    CHECK(sol.kkt_residual <= 1e-8);
    CHECK(sol.x.minCoeff() >= -1.0 - 1e-12);
    CHECK(sol.x.maxCoeff() <= 1.0 + 1e-12);
    // Gradient pushed outward only at active bounds.
    const Eigen::VectorXd grad = q * sol.x + c;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (sol.x(j) > lo(j) + 1e-9 && sol.x(j) < hi(j) - 1e-9) {
        CHECK(std::abs(grad(j)) < 1e-7);
      } else if (sol.x(j) <= lo(j) + 1e-9) {
        CHECK(grad(j) > -1e-7);
      } else {
        CHECK(grad(j) < 1e-7);
      }
    }
  }
}

TEST_CASE("box qp handles unbounded directions through infinite bounds") {
  Eigen::MatrixXd q(2, 2);
  q << 2, 0, 0, 2;
  Eigen::VectorXd c(2);
  c << -4, 6;
  Eigen::VectorXd lo(2), hi(2);
  lo << 0, -kInf;
  hi << kInf, 1;
  const BoxQpSolution sol = solve_box_qp(q, c, lo, hi);
  CHECK(sol.x(0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(sol.x(1) == doctest::Approx(-3.0).epsilon(1e-10));
}

// ---------------------------------------------------------------- lp

TEST_CASE("lp solver matches the reference optimum") {
  // Reference computed with an unrelated interior-point implementation.
  LinearProgram lp;
  lp.c.resize(3);
  lp.c << -2, -3, 1;
  lp.a_ineq.resize(2, 3);
  lp.a_ineq << 1, 1, 1, 2, 1, 0;
  lp.b_ineq.resize(2);
  lp.b_ineq << 4, 5;
  lp.a_eq.resize(1, 3);
  lp.a_eq << 0, 1, 2;
  lp.b_eq.resize(1);
  lp.b_eq << 3;
  lp.lo = Eigen::VectorXd::Zero(3);
  lp.hi = Eigen::VectorXd::Constant(3, 3.0);
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(-11.0).epsilon(1e-10));
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.x(1) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(sol.x(2) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("lp duals satisfy strong duality on random feasible instances") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + Eigen::Index(rng() % 4);
    const Eigen::Index q = 1 + Eigen::Index(rng() % 4);
    LinearProgram lp;
    lp.c.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) lp.c(j) = gauss(rng);
    lp.a_ineq.resize(q, n);
    lp.b_ineq.resize(q);
    Eigen::VectorXd interior(n);
    for (Eigen::Index j = 0; j < n; ++j) interior(j) = unit(rng);
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) lp.a_ineq(i, j) = gauss(rng);
      lp.b_ineq(i) = lp.a_ineq.row(i).dot(interior) + unit(rng);
    }
    lp.lo = Eigen::VectorXd::Zero(n);
    lp.hi = Eigen::VectorXd::Ones(n);
    const LpSolution sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::Optimal);
    // Primal feasibility.
    CHECK((lp.a_ineq * sol.x - lp.b_ineq).maxCoeff() < 1e-8);
    CHECK(sol.x.minCoeff() > -1e-9);
    CHECK(sol.x.maxCoeff() < 1.0 + 1e-9);
    // Dual value equals the primal objective.
    const double dual = -lp.b_ineq.dot(sol.duals_ineq) +
                        lp.lo.dot(sol.duals_lo) - lp.hi.dot(sol.duals_hi);
    CHECK(dual == doctest::Approx(sol.objective).epsilon(1e-7));
    CHECK(sol.duals_ineq.minCoeff() >= 0.0);
    // Stationarity.
    const Eigen::VectorXd station = lp.c +
                                    lp.a_ineq.transpose() * sol.duals_ineq -
                                    sol.duals_lo + sol.duals_hi;
    CHECK(station.cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("infeasible lp yields a verifiable impossibility certificate") {
  LinearProgram lp;
  lp.c.resize(1);
  lp.c << -1;
  lp.a_ineq.resize(1, 1);
  lp.a_ineq << 1;
  lp.b_ineq.resize(1);
  lp.b_ineq << -1;  // x <= -1 against x in [0, 6]
  lp.lo = Eigen::VectorXd::Zero(1);
  lp.hi = Eigen::VectorXd::Constant(1, 6.0);
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Infeasible);
  // Combining the rows with these weights bounds 0 by a negative number.
  CHECK(sol.farkas_ineq.minCoeff() >= 0.0);
  CHECK(sol.farkas_lo.minCoeff() >= 0.0);
  CHECK(sol.farkas_hi.minCoeff() >= 0.0);
  const Eigen::VectorXd comb = lp.a_ineq.transpose() * sol.farkas_ineq -
                               sol.farkas_lo + sol.farkas_hi;
  CHECK(comb.cwiseAbs().maxCoeff() < 1e-9);
  const double bound = lp.b_ineq.dot(sol.farkas_ineq) -
                       lp.lo.dot(sol.farkas_lo) + lp.hi.dot(sol.farkas_hi);
  CHECK(bound < -1e-9);
}

TEST_CASE("infeasible equalities are certified too") {
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Ones(2);
  lp.a_eq.resize(2, 2);
  lp.a_eq << 1, 1, 1, 1;
  lp.b_eq.resize(2);
  lp.b_eq << 2, 3;
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Infeasible);
  const Eigen::VectorXd comb = lp.a_eq.transpose() * sol.farkas_eq;
  CHECK(comb.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(lp.b_eq.dot(sol.farkas_eq) < -1e-9);
}

TEST_CASE("unbounded lp reports a descent ray") {
  LinearProgram lp;
  lp.c.resize(2);
  lp.c << -1, 0;
  lp.a_ineq.resize(1, 2);
  lp.a_ineq << -1, 1;
  lp.b_ineq.resize(1);
  lp.b_ineq << 1;
  lp.lo = Eigen::VectorXd::Zero(2);
  lp.hi = Eigen::VectorXd::Constant(2, kInf);
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Unbounded);
  REQUIRE(sol.ray.size() == 2);
  CHECK(lp.c.dot(sol.ray) < -1e-9);
  CHECK((lp.a_ineq * sol.ray).maxCoeff() < 1e-9);
  CHECK(sol.ray.minCoeff() > -1e-9);
}

TEST_CASE("lp accepts free variables") {
  LinearProgram lp;
  lp.c.resize(2);
  lp.c << 1, 1;
  lp.a_eq.resize(1, 2);
  lp.a_eq << 1, -1;
  lp.b_eq.resize(1);
  lp.b_eq << 4;
  lp.a_ineq.resize(1, 2);
  lp.a_ineq << -1, -1;
  lp.b_ineq.resize(1);
  lp.b_ineq << -2;
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.x(0) - sol.x(1) == doctest::Approx(4.0).epsilon(1e-9));
}

// ---------------------------------------------------------------- bilinear

namespace {

BilinearProgram product_equality_instance() {
  // minimize x + y  subject to  x * y = 1,  x, y in [0.1, 10].
  BilinearProgram bp;
  bp.n = 2;
  bp.c.resize(2);
  bp.c << 1, 1;
  bp.a_eq = Eigen::MatrixXd::Zero(1, 2);
  bp.b_eq = Eigen::VectorXd::Ones(1);
  bp.terms.push_back({0, true, 0, 1, 1.0});
  bp.lo = Eigen::VectorXd::Constant(2, 0.1);
  bp.hi = Eigen::VectorXd::Constant(2, 10.0);
  return bp;
}

BilinearProgram product_inequality_instance() {
  // minimize -x - 2y  subject to  x + y <= 4,  x * y <= 3,  x, y in [0, 3].
  BilinearProgram bp;
  bp.n = 2;
  bp.c.resize(2);
  bp.c << -1, -2;
  bp.a_ineq = Eigen::MatrixXd::Zero(2, 2);
  bp.a_ineq.row(0) << 1, 1;
  bp.b_ineq.resize(2);
  bp.b_ineq << 4, 3;
  bp.terms.push_back({1, false, 0, 1, 1.0});
  bp.lo = Eigen::VectorXd::Zero(2);
  bp.hi = Eigen::VectorXd::Constant(2, 3.0);
  return bp;
}

}  // namespace

TEST_CASE("violation and objective evaluate products row by row") {
  const BilinearProgram bp = product_equality_instance();
  Eigen::VectorXd x(2);
  x << 2, 1;
  CHECK(bilinear_objective(bp, x) == doctest::Approx(3.0));
  CHECK(bilinear_violation(bp, x) == doctest::Approx(1.0));  // 2*1 - 1
  x << 1, 1;
  CHECK(bilinear_violation(bp, x) == doctest::Approx(0.0));
}

TEST_CASE("branch and bound finds the global product-equality optimum") {
  const BilinearSolution sol = solve_bilinear(
      product_equality_instance(), BilinearMethod::BranchAndBound);
  REQUIRE(sol.status == BilinearStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(5e-2));
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(5e-2));
  CHECK(sol.gap <= 1e-4 + 1e-12);
  CHECK(sol.residual <= 1e-6);
}

TEST_CASE("branch and bound finds the global product-inequality optimum") {
  const BilinearSolution sol = solve_bilinear(
      product_inequality_instance(), BilinearMethod::BranchAndBound);
  REQUIRE(sol.status == BilinearStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(-7.0).epsilon(1e-3));
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(sol.x(1) == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("alternating minimization reaches a feasible local point") {
  const BilinearSolution sol = solve_bilinear(
      product_equality_instance(), BilinearMethod::AlternatingMinimization);
  CHECK(sol.residual <= 1e-6);
  CHECK(bilinear_violation(product_equality_instance(), sol.x) <= 1e-6);
}

TEST_CASE("quadratic objective terms pull toward their centers") {
  // minimize (x - 2)^2 + (y - 2)^2  subject to  x * y <= 1, x, y in [0, 4]:
  // symmetric optimum at x = y = 1.
  BilinearProgram bp;
  bp.n = 2;
  bp.c = Eigen::VectorXd::Zero(2);
  bp.quadratic.push_back({0, 1.0, 2.0});
  bp.quadratic.push_back({1, 1.0, 2.0});
  bp.a_ineq = Eigen::MatrixXd::Zero(1, 2);
  bp.b_ineq = Eigen::VectorXd::Ones(1);
  bp.terms.push_back({0, false, 0, 1, 1.0});
  bp.lo = Eigen::VectorXd::Zero(2);
  bp.hi = Eigen::VectorXd::Constant(2, 4.0);
  const BilinearSolution sol =
      solve_bilinear(bp, BilinearMethod::BranchAndBound);
  REQUIRE(sol.status == BilinearStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(sol.x(0) * sol.x(1) <= 1.0 + 1e-6);
}

TEST_CASE("branch and bound requires finite boxes") {
  BilinearProgram bp = product_equality_instance();
  bp.hi(0) = kInf;
  CHECK_THROWS_AS(solve_bilinear(bp, BilinearMethod::BranchAndBound),
                  pbf::BoxMissing);
}

TEST_CASE("contradictory linear rows come back infeasible") {
  BilinearProgram bp;
  bp.n = 2;
  bp.c = Eigen::VectorXd::Ones(2);
  bp.a_eq = Eigen::MatrixXd::Zero(2, 2);
  bp.a_eq(0, 0) = 1.0;
  bp.a_eq(1, 0) = 1.0;
  bp.b_eq.resize(2);
  bp.b_eq << 0.0, 1.0;  // x = 0 and x = 1
  bp.lo = Eigen::VectorXd::Zero(2);
  bp.hi = Eigen::VectorXd::Ones(2);
  const BilinearSolution sol =
      solve_bilinear(bp, BilinearMethod::BranchAndBound);
  CHECK(sol.status == BilinearStatus::Infeasible);
}
