#pragma once

#include <vector>

#include <Eigen/Core>

#include "pbf/errors.hpp"
#include "pbf/solvers/lp.hpp"

namespace pbf::solvers {

/// One product coeff * x_i * x_j added to a constraint row (i == j gives a
/// square). Products never appear in the objective; convex quadratic
/// objective pieces go through QuadraticTerm instead.
struct BilinearTerm {
  Eigen::Index row = 0;
  bool in_equality = true;  ///< row indexes a_eq when true, a_ineq otherwise
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  double coeff = 1.0;
};

/// weight * (x_var - center)^2 added to the objective; weight must be >= 0.
struct QuadraticTerm {
  Eigen::Index var = 0;
  double weight = 1.0;
  double center = 0.0;
};

/// minimize  c'x + sum_k weight_k (x_k - center_k)^2
/// subject to  a_eq x + products = b_eq,  a_ineq x + products <= b_ineq,
///             lo <= x <= hi,
/// where `products` collects the BilinearTerm entries of each row.
struct BilinearProgram {
  Eigen::Index n = 0;
  Eigen::VectorXd c;
  std::vector<QuadraticTerm> quadratic;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_ineq;
  Eigen::VectorXd b_ineq;
  std::vector<BilinearTerm> terms;
  Eigen::VectorXd lo, hi;  ///< finite boxes are mandatory for BranchAndBound
};

enum class BilinearMethod {
  AlternatingMinimization,  ///< penalty continuation between variable blocks
  BranchAndBound            ///< spatial search over McCormick relaxations
};

enum class BilinearStatus { Optimal, LocalOptimum, Infeasible, IterationLimit };

struct BilinearSolution {
  BilinearStatus status = BilinearStatus::LocalOptimum;
  Eigen::VectorXd x;
  double objective = 0.0;
  double gap = 0.0;       ///< relative bound gap (BranchAndBound only)
  double residual = 0.0;  ///< worst constraint violation at x
  int iterations = 0;     ///< outer rounds, or processed nodes
};

struct BilinearOptions {
  double tol_residual = 1e-8;   ///< AltMin convergence on constraint violation
  int max_iterations = 500;     ///< AltMin outer rounds
  double penalty_init = 1.0;
  double penalty_growth = 10.0;
  double gap = 1e-4;            ///< BranchAndBound relative gap target
  int max_nodes = 200000;
  double feas_tol = 1e-6;       ///< incumbent acceptance violation
  /// BranchAndBound gives up (IterationLimit, best incumbent attached) after
  /// this many consecutive nodes without improving the incumbent; 0 disables.
  int stall_nodes = 0;
  /// Run the local-polish pass every k-th node (always while no incumbent
  /// exists); 1 polishes every node.
  int polish_every = 1;
  /// Cap on objective-linearization rounds per node relaxation; fewer rounds
  /// weaken the node bound but never invalidate it.
  int refine_rounds = 12;
  /// Optional candidate tried as the first incumbent before the search
  /// starts (ignored unless its size matches the program).
  Eigen::VectorXd warm_start;
};

/// Worst violation of the constraint rows of `bp` at `x`, products included.
double bilinear_violation(const BilinearProgram& bp, const Eigen::VectorXd& x);

/// Objective of `bp` at `x`.
double bilinear_objective(const BilinearProgram& bp, const Eigen::VectorXd& x);

/// AlternatingMinimization two-colors the product graph and alternates convex
/// box-QP steps under a growing penalty; it returns a locally optimal point
/// (or IterationLimit with the best iterate). BranchAndBound explores box
/// splits best-first, bounding each node by an LP over McCormick envelopes,
/// and returns a global optimum within the relative gap, or Infeasible.
/// Throws BoxMissing when BranchAndBound is asked to run without finite
/// variable boxes.
BilinearSolution solve_bilinear(const BilinearProgram& bp,
                                BilinearMethod method,
                                const BilinearOptions& options = {});

}  // namespace pbf::solvers
