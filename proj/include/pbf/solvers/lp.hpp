#pragma once

#include <iosfwd>
#include <limits>

#include <Eigen/Core>

#include "pbf/errors.hpp"

namespace pbf::solvers {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize c'x  subject to  a_eq x = b_eq,  a_ineq x <= b_ineq,  lo <= x <= hi.
///
/// Constraint blocks may be empty (0 rows). Bound vectors may be empty (all
/// variables free) or hold +-infinity entries.
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_ineq;
  Eigen::VectorXd b_ineq;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

/// Solution report of solve_lp.
///
/// Optimal: duals satisfy the stationarity identity
///   c + a_eq' duals_eq + a_ineq' duals_ineq - duals_lo + duals_hi = 0
/// with duals_ineq, duals_lo, duals_hi >= 0, complementary slackness, and
///   c'x = -b_eq' duals_eq - b_ineq' duals_ineq + lo' duals_lo - hi' duals_hi
/// (bound products taken over finite bounds; duals vanish at infinite ones).
///
/// Unbounded: `ray` is a feasible recession direction with c' ray < 0.
///
/// Infeasible: the Farkas certificate (farkas_eq free, the others >= 0)
/// satisfies  a_eq' farkas_eq + a_ineq' farkas_ineq - farkas_lo + farkas_hi = 0
/// while  b_eq' farkas_eq + b_ineq' farkas_ineq - lo' farkas_lo + hi' farkas_hi
/// is strictly negative, so no x can satisfy all constraints at once.
struct LpSolution {
  LpStatus status = LpStatus::Optimal;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd duals_eq, duals_ineq, duals_lo, duals_hi;
  Eigen::VectorXd ray;
  Eigen::VectorXd farkas_eq, farkas_ineq, farkas_lo, farkas_hi;
  int iterations = 0;
};

struct LpOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  int max_iterations = 200000;
};

/// Dense two-phase primal simplex with row scaling. Pivoting uses the most
/// negative reduced cost with lowest-index ties and switches to Bland's rule
/// after 10 * m degenerate pivots, which guarantees termination. Throws
/// NumericalFailure when the recovered duals fail the internal strong-duality
/// and complementarity checks.
LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options = {});

/// Writes a plain-text dump of the instance (17 significant digits), useful
/// for reproducing solver issues outside the library.
void dump_lp(const LinearProgram& lp, std::ostream& os);

}  // namespace pbf::solvers
