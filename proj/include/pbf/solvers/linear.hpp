#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include "pbf/errors.hpp"

namespace pbf::solvers {

/// Reusable factorization of a square symmetric (possibly indefinite) matrix
/// with rank detection. Throws SingularMatrix at construction when the pivot
/// ratio falls below singular_tol.
class IndefiniteFactorization {
 public:
  explicit IndefiniteFactorization(const Eigen::MatrixXd& m,
                                   double singular_tol = 1e-12,
                                   bool require_symmetric = true);

  /// Solves M x = rhs with two steps of iterative refinement.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  /// Solves M' x = rhs with two steps of iterative refinement.
  Eigen::MatrixXd solve_transposed(const Eigen::MatrixXd& rhs) const;

  Eigen::Index rows() const { return matrix_.rows(); }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> matrix_wide_;
  Eigen::VectorXd scaling_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

/// Solves the square symmetric system M x = rhs. Pivots whose magnitude falls
/// below singular_tol times the largest pivot raise SingularMatrix.
Eigen::VectorXd solve_symmetric_indefinite(const Eigen::MatrixXd& m,
                                           const Eigen::VectorXd& rhs,
                                           double singular_tol = 1e-12);

/// Matrix right-hand-side overload.
Eigen::MatrixXd solve_symmetric_indefinite(const Eigen::MatrixXd& m,
                                           const Eigen::MatrixXd& rhs,
                                           double singular_tol = 1e-12);

/// Solution of min 0.5 x'Qx + c'x subject to A x = b.
struct EqQpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd duals;  ///< multipliers mu with Qx + c + A'mu = 0
};

/// Solves the equality-constrained quadratic program through its stationarity
/// system. Throws SingularKkt when that system is singular or the solve does
/// not reach residual 1e-10 * (1 + ||rhs||).
EqQpSolution solve_eq_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& c,
                         const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// Solution of min 0.5 x'Qx + c'x subject to lo <= x <= hi.
struct BoxQpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lower_duals;  ///< >= 0, nonzero only at active lower bounds
  Eigen::VectorXd upper_duals;  ///< >= 0, nonzero only at active upper bounds
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Primal active-set method for convex box-constrained quadratic programs.
/// Q must be symmetric positive semidefinite; entries of lo/hi may be
/// +-infinity. Throws NumericalFailure if the active-set loop stalls.
BoxQpSolution solve_box_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& c,
                           const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                           double tol = 1e-10);

}  // namespace pbf::solvers
