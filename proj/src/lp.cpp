#include "pbf/solvers/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <vector>

#include <Eigen/LU>

namespace pbf::solvers {
namespace {

constexpr double kPivotTol = 1e-9;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

enum class VarKind { Shift, Mirror, Split };

struct VarMap {
  VarKind kind = VarKind::Shift;
  Eigen::Index col_p = -1;  // standard column moving with +x
  Eigen::Index col_m = -1;  // second column of a split variable
  double offset = 0.0;      // x = offset + v (Shift/Split) or offset - v
  Eigen::Index bound_row = -1;  // row enforcing the upper bound, if two-sided
};

enum class RowKind { Eq, Ineq, Bound };

struct RowMap {
  RowKind kind = RowKind::Eq;
  Eigen::Index orig = -1;  // row index in a_eq / a_ineq, or variable index
  double scale = 1.0;
  double sign = 1.0;
};

struct StandardForm {
  std::vector<VarMap> vars;
  std::vector<RowMap> rows;
  Eigen::MatrixXd a;     // m x n_struct, structural columns incl. slacks
  Eigen::VectorXd b;     // m, nonnegative
  Eigen::VectorXd cost;  // n_struct, phase-2 costs
};

// Simplex tableau over [A | I | b] with a maintained reduced-cost row.
struct Tableau {
  Eigen::MatrixXd t;  // (m+1) x (n_struct + m + 1)
  std::vector<Eigen::Index> basis;
  Eigen::Index m = 0, n_struct = 0;
  int iterations = 0;
  int degenerate = 0;
  int since_refactor = 0;
  int refactor_count = 0;  // TEMP DEBUG
  bool bland = false;
  double b_scale = 1.0;  // 1 + max rhs of the standard form

  Eigen::Index cols() const { return n_struct + m; }
  double rhs(Eigen::Index i) const { return t(i, cols()); }

  void pivot(Eigen::Index row, Eigen::Index col) {
    t.row(row) /= t(row, col);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i == row) continue;
      const double factor = t(i, col);
      if (factor != 0.0) t.row(i) -= factor * t.row(row);
    }
    basis[std::size_t(row)] = col;
    ++since_refactor;
  }

  void rebuild_cost_row(const Eigen::VectorXd& costs) {
    for (Eigen::Index j = 0; j <= cols(); ++j) {
      double v = j < cols() ? costs(j) : 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double cb = costs(basis[std::size_t(i)]);
        if (cb != 0.0) v -= cb * t(i, j);
      }
      t(m, j) = v;
    }
  }
};

enum class PhaseOutcome { Optimal, Unbounded, IterationCap };

double refactorize(Tableau& tab, const StandardForm& sf, double clamp_below);

// Roundoff and ratio-test slack compound multiplicatively over long pivot
// stretches, so the tableau is rebuilt exactly from the standard form after
// this many pivots.
constexpr int kRefactorInterval = 64;

// Runs simplex iterations until no reduced cost is negative. Columns at or
// beyond `enter_limit` (the artificials) never enter the basis.
PhaseOutcome run_phase(Tableau& tab, const StandardForm& sf,
                       const Eigen::VectorXd& costs, Eigen::Index enter_limit,
                       double rc_tol, int max_iterations,
                       Eigen::Index* unbounded_col) {
  const int bland_trigger = 10 * int(tab.m);
  while (true) {
    if (tab.iterations >= max_iterations) return PhaseOutcome::IterationCap;
    if (!tab.bland && tab.degenerate > bland_trigger) tab.bland = true;
    if (tab.since_refactor >= kRefactorInterval) {
      if (refactorize(tab, sf, -1e-6 * tab.b_scale) < -1e-6 * tab.b_scale) {
        throw NumericalFailure("solve_lp: basic solution lost feasibility");
      }
      tab.rebuild_cost_row(costs);
    }

    Eigen::Index enter = -1;
    if (tab.bland) {
      for (Eigen::Index j = 0; j < enter_limit; ++j) {
        if (tab.t(tab.m, j) < -rc_tol) {
          enter = j;
          break;
        }
      }
    } else {
      double best = -rc_tol;
      for (Eigen::Index j = 0; j < enter_limit; ++j) {
        if (tab.t(tab.m, j) < best) {
          best = tab.t(tab.m, j);
          enter = j;
        }
      }
    }
    if (enter < 0) return PhaseOutcome::Optimal;

    // Two-pass ratio test: bound the step with a small feasibility slack,
    // then pick the largest pivot element among the near-tied blocking rows.
    // Tiny pivots amplify tableau roundoff by their reciprocal, so avoiding
    // them keeps long runs numerically sane.
    // Ratios are floored at zero: a row whose basic value has drifted a hair
    // negative must block the step entirely, not drive it backwards.
    const double feas_slack = 1e-10 * tab.b_scale;
    double theta = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < tab.m; ++i) {
      const double a = tab.t(i, enter);
      if (a <= kPivotTol) continue;
      theta = std::min(theta, std::max((tab.rhs(i) + feas_slack) / a, 0.0));
    }
    if (!std::isfinite(theta)) {
      if (unbounded_col != nullptr) *unbounded_col = enter;
      return PhaseOutcome::Unbounded;
    }
    Eigen::Index leave = -1;
    double best_pivot = 0.0;
    for (Eigen::Index i = 0; i < tab.m; ++i) {
      const double a = tab.t(i, enter);
      if (a <= kPivotTol) continue;
      if (tab.rhs(i) / a > theta) continue;
      bool take = false;
      if (leave < 0) {
        take = true;
      } else if (tab.bland) {
        // Lowest basic-variable index among the candidates under Bland.
        take = tab.basis[std::size_t(i)] < tab.basis[std::size_t(leave)];
      } else {
        take = a > best_pivot;
      }
      if (take) {
        leave = i;
        best_pivot = a;
      }
    }
    if (leave < 0) {
      if (unbounded_col != nullptr) *unbounded_col = enter;
      return PhaseOutcome::Unbounded;
    }
    if (tab.rhs(leave) <= kPivotTol) ++tab.degenerate;
    if (tab.rhs(leave) < 0.0) tab.t(leave, tab.cols()) = 0.0;
    tab.pivot(leave, enter);
    ++tab.iterations;
  }
}

// Rebuilds the tableau rows exactly from the standard-form data and the
// current basis, discarding the roundoff accumulated by pivoting. Throws when
// the basis matrix is no longer reliably invertible. Basic values that come
// out negative are clamped to zero when they are above `clamp_below`
// (micro-drift), left in place otherwise, and the worst one is returned so
// the caller can decide whether the basis needs repair.
double refactorize(Tableau& tab, const StandardForm& sf, double clamp_below) {
  const Eigen::Index m = tab.m;
  const Eigen::Index ns = tab.n_struct;
  Eigen::MatrixXd basis_cols(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = tab.basis[std::size_t(i)];
    if (j < ns) {
      basis_cols.col(i) = sf.a.col(j);
    } else {
      basis_cols.col(i) = Eigen::VectorXd::Unit(m, j - ns);
    }
  }
  Eigen::MatrixXd all(m, ns + m + 1);
  all.leftCols(ns) = sf.a;
  all.middleCols(ns, m).setIdentity();
  all.col(ns + m) = sf.b;
  const double residual_cap = 1e-7 * (1.0 + all.cwiseAbs().maxCoeff());
  Eigen::MatrixXd fresh = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_cols)
                              .solve(all);
  double residual = (basis_cols * fresh - all).cwiseAbs().maxCoeff();
  if (!(residual <= residual_cap)) {
    // Partial pivoting can lose a nearly singular basis; retry with full
    // pivoting before giving up.
    fresh = Eigen::FullPivLU<Eigen::MatrixXd>(basis_cols).solve(all);
    residual = (basis_cols * fresh - all).cwiseAbs().maxCoeff();
    if (!(residual <= residual_cap)) {
      throw NumericalFailure("solve_lp: basis refactorization failed");
    }
  }
  tab.t.topRows(m) = fresh;
  tab.since_refactor = 0;
  ++tab.refactor_count;  // TEMP DEBUG
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double& r = tab.t(i, ns + m);
    if (r < 0.0) {
      worst = std::min(worst, r);
      if (r > clamp_below) r = 0.0;
    }
  }
  return worst;
}

// Exact basic solutions may end a phase with a few slightly negative basic
// variables: the ratio test's slack and steps over sub-pivot-tolerance
// entries both leave micro-infeasibility behind. At a settled phase the
// reduced costs are nonnegative to tolerance, which is exactly the situation
// the dual simplex handles: pivot the negative basic variables out while the
// ratio test over reduced costs keeps dual feasibility. Expects freshly
// refactorized rows and a current cost row; returns false when no eligible
// pivot remains or the iteration budget runs out.
bool dual_cleanup(Tableau& tab, const StandardForm& sf,
                  const Eigen::VectorXd& costs, Eigen::Index enter_limit,
                  double dirty_tol, int max_iterations) {
  while (true) {
    Eigen::Index row = -1;
    double worst = -dirty_tol;
    for (Eigen::Index i = 0; i < tab.m; ++i) {
      if (tab.rhs(i) < worst) {
        worst = tab.rhs(i);
        row = i;
      }
    }
    if (row < 0) return true;
    if (tab.iterations >= max_iterations) return false;
    // Two-pass ratio test over the reduced costs, mirroring the primal one:
    // find the tightest ratio, then take the largest-magnitude pivot among
    // the near-tied columns so the basis stays comfortably invertible.
    double row_max = 0.0;
    for (Eigen::Index j = 0; j < enter_limit; ++j) {
      row_max = std::max(row_max, std::abs(tab.t(row, j)));
    }
    const double a_tol = std::max(kPivotTol, 1e-9 * row_max);
    double theta = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < enter_limit; ++j) {
      const double a = tab.t(row, j);
      if (a >= -a_tol) continue;
      theta = std::min(theta, tab.t(tab.m, j) / -a);
    }
    if (!std::isfinite(theta)) return false;
    Eigen::Index enter = -1;
    double best_abs = 0.0;
    const double ratio_slack = theta + 1e-9 * (1.0 + std::abs(theta));
    for (Eigen::Index j = 0; j < enter_limit; ++j) {
      const double a = tab.t(row, j);
      if (a >= -a_tol) continue;
      if (tab.t(tab.m, j) / -a > ratio_slack) continue;
      if (-a > best_abs) {
        best_abs = -a;
        enter = j;
      }
    }
    if (enter < 0) return false;
    tab.pivot(row, enter);
    ++tab.iterations;
    if (tab.since_refactor >= kRefactorInterval) {
      refactorize(tab, sf, -dirty_tol);
      tab.rebuild_cost_row(costs);
    }
  }
}

// Iterates a phase to a trustworthy conclusion: every claimed optimum is
// re-checked on a freshly refactorized tableau (resuming when drift hid
// entering columns or left basic variables negative), and an unbounded claim
// is only accepted when it was derived from clean rows.
PhaseOutcome settle_phase(Tableau& tab, const StandardForm& sf,
                          const Eigen::VectorXd& costs,
                          Eigen::Index enter_limit, double rc_tol,
                          int max_iterations, Eigen::Index* unbounded_col) {
  const double dirty_tol = 1e-11 * tab.b_scale;
  for (int round = 0; round < 10; ++round) {
    const PhaseOutcome out = run_phase(tab, sf, costs, enter_limit, rc_tol,
                                       max_iterations, unbounded_col);
    if (out == PhaseOutcome::IterationCap) return out;
    if (out == PhaseOutcome::Unbounded && tab.since_refactor == 0) {
      // No pivots since the last refactorization (or since the exact initial
      // tableau), so the unbounded column was read off clean data.
      return out;
    }
    const double worst_neg = refactorize(tab, sf, -dirty_tol);
    if (worst_neg < -1e-6 * tab.b_scale) {
      throw NumericalFailure("solve_lp: basic solution lost feasibility");
    }
    tab.rebuild_cost_row(costs);
    if (out != PhaseOutcome::Optimal) continue;
    if (worst_neg < -dirty_tol) {
      if (!dual_cleanup(tab, sf, costs, enter_limit, dirty_tol,
                        max_iterations)) {
        return PhaseOutcome::IterationCap;
      }
      if (refactorize(tab, sf, -dirty_tol) < -dirty_tol) continue;
      tab.rebuild_cost_row(costs);
    }
    double worst_rc = 0.0;
    for (Eigen::Index j = 0; j < enter_limit; ++j) {
      worst_rc = std::min(worst_rc, tab.t(tab.m, j));
    }
    if (worst_rc >= -rc_tol) return out;
  }
  throw NumericalFailure("solve_lp: refactorization did not settle");
}

StandardForm build_standard_form(const LinearProgram& lp, Eigen::Index n,
                                 const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  StandardForm sf;
  sf.vars.resize(std::size_t(n));
  Eigen::Index n_v = 0;
  Eigen::Index n_bound_rows = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    VarMap& vm = sf.vars[std::size_t(j)];
    const bool lo_fin = std::isfinite(lo(j));
    const bool hi_fin = std::isfinite(hi(j));
    if (lo_fin) {
      vm.kind = VarKind::Shift;
      vm.offset = lo(j);
      vm.col_p = n_v++;
      if (hi_fin) ++n_bound_rows;
    } else if (hi_fin) {
      vm.kind = VarKind::Mirror;
      vm.offset = hi(j);
      vm.col_p = n_v++;
    } else {
      vm.kind = VarKind::Split;
      vm.col_p = n_v++;
      vm.col_m = n_v++;
    }
  }

  const Eigen::Index p = lp.a_eq.rows();
  const Eigen::Index q = lp.a_ineq.rows();
  const Eigen::Index m = p + q + n_bound_rows;
  const Eigen::Index n_struct = n_v + q + n_bound_rows;
  sf.a = Eigen::MatrixXd::Zero(m, n_struct);
  sf.b = Eigen::VectorXd::Zero(m);
  sf.cost = Eigen::VectorXd::Zero(n_struct);
  sf.rows.resize(std::size_t(m));

  for (Eigen::Index j = 0; j < n; ++j) {
    const VarMap& vm = sf.vars[std::size_t(j)];
    switch (vm.kind) {
      case VarKind::Shift:
        sf.cost(vm.col_p) = lp.c(j);
        break;
      case VarKind::Mirror:
        sf.cost(vm.col_p) = -lp.c(j);
        break;
      case VarKind::Split:
        sf.cost(vm.col_p) = lp.c(j);
        sf.cost(vm.col_m) = -lp.c(j);
        break;
    }
  }

  auto fill_structural = [&](Eigen::Index row,
                             const Eigen::RowVectorXd& coeffs, double rhs) {
    double shift = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = coeffs(j);
      if (a == 0.0) continue;
      const VarMap& vm = sf.vars[std::size_t(j)];
      switch (vm.kind) {
        case VarKind::Shift:
          sf.a(row, vm.col_p) += a;
          shift += a * vm.offset;
          break;
        case VarKind::Mirror:
          sf.a(row, vm.col_p) -= a;
          shift += a * vm.offset;
          break;
        case VarKind::Split:
          sf.a(row, vm.col_p) += a;
          sf.a(row, vm.col_m) -= a;
          break;
      }
    }
    sf.b(row) = rhs - shift;
  };

  for (Eigen::Index i = 0; i < p; ++i) {
    sf.rows[std::size_t(i)] = {RowKind::Eq, i, 1.0, 1.0};
    fill_structural(i, lp.a_eq.row(i), lp.b_eq(i));
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    sf.rows[std::size_t(p + i)] = {RowKind::Ineq, i, 1.0, 1.0};
    fill_structural(p + i, lp.a_ineq.row(i), lp.b_ineq(i));
  }

  // Rows are scaled to unit infinity norm before slacks enter.
  for (Eigen::Index i = 0; i < p + q; ++i) {
    const double s = std::max(sf.a.row(i).cwiseAbs().maxCoeff(), 1e-12);
    sf.rows[std::size_t(i)].scale = s;
    sf.a.row(i) /= s;
    sf.b(i) /= s;
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    sf.a(p + i, n_v + i) = 1.0;
  }

  Eigen::Index bound_row = p + q;
  Eigen::Index bound_slack = n_v + q;
  for (Eigen::Index j = 0; j < n; ++j) {
    VarMap& vm = sf.vars[std::size_t(j)];
    if (vm.kind == VarKind::Shift && std::isfinite(hi(j))) {
      vm.bound_row = bound_row;
      sf.rows[std::size_t(bound_row)] = {RowKind::Bound, j, 1.0, 1.0};
      sf.a(bound_row, vm.col_p) = 1.0;
      sf.a(bound_row, bound_slack) = 1.0;
      sf.b(bound_row) = hi(j) - lo(j);
      ++bound_row;
      ++bound_slack;
    }
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    if (sf.b(i) < 0.0) {
      sf.a.row(i) = -sf.a.row(i);
      sf.b(i) = -sf.b(i);
      sf.rows[std::size_t(i)].sign = -1.0;
    }
  }
  return sf;
}

// Maps standard-form row duals back to the caller's constraint blocks. The
// same recovery serves the optimal duals (with_cost = true) and the Farkas
// certificate from phase 1 (with_cost = false); see LpSolution for the
// identities both satisfy.
struct RecoveredDuals {
  Eigen::VectorXd y_eq, y_in, z_lo, z_hi;
};

RecoveredDuals map_duals(const LinearProgram& lp, const StandardForm& sf,
                         const Eigen::VectorXd& y_std, Eigen::Index n,
                         bool with_cost) {
  const Eigen::Index p = lp.a_eq.rows();
  const Eigen::Index q = lp.a_ineq.rows();
  RecoveredDuals out;
  out.y_eq = Eigen::VectorXd::Zero(p);
  out.y_in = Eigen::VectorXd::Zero(q);
  out.z_lo = Eigen::VectorXd::Zero(n);
  out.z_hi = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd rho =
      with_cost ? Eigen::VectorXd(lp.c) : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  for (std::size_t k = 0; k < sf.rows.size(); ++k) {
    const RowMap& rm = sf.rows[k];
    const double w = rm.sign * y_std(Eigen::Index(k)) / rm.scale;
    const double f = -w;
    switch (rm.kind) {
      case RowKind::Eq:
        out.y_eq(rm.orig) = f;
        rho += lp.a_eq.row(rm.orig).transpose() * f;
        break;
      case RowKind::Ineq:
        out.y_in(rm.orig) = std::max(f, 0.0);
        rho += lp.a_ineq.row(rm.orig).transpose() * out.y_in(rm.orig);
        break;
      case RowKind::Bound:
        out.z_hi(rm.orig) = std::max(f, 0.0);
        rho(rm.orig) += out.z_hi(rm.orig);
        break;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const VarMap& vm = sf.vars[std::size_t(j)];
    if (vm.kind == VarKind::Shift) {
      out.z_lo(j) = std::max(rho(j), 0.0);
    } else if (vm.kind == VarKind::Mirror) {
      out.z_hi(j) += std::max(-rho(j), 0.0);
    }
  }
  return out;
}

double dual_value(const LinearProgram& lp, const RecoveredDuals& d,
                  const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double v = 0.0;
  if (d.y_eq.size() > 0) v -= lp.b_eq.dot(d.y_eq);
  if (d.y_in.size() > 0) v -= lp.b_ineq.dot(d.y_in);
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    if (d.z_lo(j) != 0.0) v += lo(j) * d.z_lo(j);
    if (d.z_hi(j) != 0.0) v -= hi(j) * d.z_hi(j);
  }
  return v;
}

// Residual of  base + a_eq'y_eq + a_ineq'y_in - z_lo + z_hi = 0.
double stationarity_residual(const LinearProgram& lp, const RecoveredDuals& d,
                             const Eigen::VectorXd& base) {
  Eigen::VectorXd r = base - d.z_lo + d.z_hi;
  if (d.y_eq.size() > 0) r += lp.a_eq.transpose() * d.y_eq;
  if (d.y_in.size() > 0) r += lp.a_ineq.transpose() * d.y_in;
  return r.cwiseAbs().maxCoeff();
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options) {
  const Eigen::Index n = lp.c.size();
  const Eigen::Index p = lp.a_eq.rows();
  const Eigen::Index q = lp.a_ineq.rows();
  if (n < 1) {
    throw DimensionMismatch("solve_lp: objective must have variables");
  }
  if ((p > 0 && lp.a_eq.cols() != n) || lp.b_eq.size() != p ||
      (q > 0 && lp.a_ineq.cols() != n) || lp.b_ineq.size() != q) {
    throw DimensionMismatch("solve_lp: constraint blocks disagree with c");
  }
  if ((lp.lo.size() != 0 && lp.lo.size() != n) ||
      (lp.hi.size() != 0 && lp.hi.size() != n)) {
    throw DimensionMismatch("solve_lp: bound vectors have wrong length");
  }
  const Eigen::VectorXd lo =
      lp.lo.size() == n ? lp.lo : Eigen::VectorXd::Constant(n, -kInf);
  const Eigen::VectorXd hi =
      lp.hi.size() == n ? lp.hi : Eigen::VectorXd::Constant(n, kInf);

  LpSolution sol;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lo(j) > hi(j)) {
      sol.status = LpStatus::Infeasible;
      sol.farkas_eq = Eigen::VectorXd::Zero(p);
      sol.farkas_ineq = Eigen::VectorXd::Zero(q);
      sol.farkas_lo = Eigen::VectorXd::Zero(n);
      sol.farkas_hi = Eigen::VectorXd::Zero(n);
      sol.farkas_lo(j) = 1.0;
      sol.farkas_hi(j) = 1.0;
      return sol;
    }
  }

  const StandardForm sf = build_standard_form(lp, n, lo, hi);
  const Eigen::Index m = sf.a.rows();
  const Eigen::Index n_struct = sf.a.cols();

  Tableau tab;
  tab.m = m;
  tab.n_struct = n_struct;
  tab.b_scale = 1.0 + (m > 0 ? sf.b.maxCoeff() : 0.0);
  tab.t = Eigen::MatrixXd::Zero(m + 1, n_struct + m + 1);
  tab.t.block(0, 0, m, n_struct) = sf.a;
  tab.t.block(0, n_struct, m, m) = Eigen::MatrixXd::Identity(m, m);
  tab.t.col(n_struct + m).head(m) = sf.b;
  tab.basis.resize(std::size_t(m));
  for (Eigen::Index i = 0; i < m; ++i) tab.basis[std::size_t(i)] = n_struct + i;

  auto recover_x = [&]() {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_struct + m);
    for (Eigen::Index i = 0; i < m; ++i) {
      v(tab.basis[std::size_t(i)]) = tab.rhs(i);
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const VarMap& vm = sf.vars[std::size_t(j)];
      switch (vm.kind) {
        case VarKind::Shift:
          x(j) = vm.offset + v(vm.col_p);
          break;
        case VarKind::Mirror:
          x(j) = vm.offset - v(vm.col_p);
          break;
        case VarKind::Split:
          x(j) = v(vm.col_p) - v(vm.col_m);
          break;
      }
    }
    return x;
  };

  auto standard_duals = [&](bool phase_one) {
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double rc = tab.t(m, n_struct + i);
      y(i) = phase_one ? 1.0 - rc : -rc;
    }
    return y;
  };

  // Phase 1: minimize the artificial total.
  Eigen::VectorXd phase1_costs = Eigen::VectorXd::Zero(n_struct + m);
  phase1_costs.tail(m).setOnes();
  tab.rebuild_cost_row(phase1_costs);
  if (settle_phase(tab, sf, phase1_costs, n_struct, options.opt_tol,
                   options.max_iterations, nullptr) ==
      PhaseOutcome::IterationCap) {
    throw NumericalFailure("solve_lp: phase 1 hit the iteration cap");
  }
  const double b_scale = tab.b_scale;
  const double phase1_obj = -tab.t(m, n_struct + m);
  if (phase1_obj > options.feas_tol * b_scale) {
    const Eigen::VectorXd y = standard_duals(true);
    const RecoveredDuals d = map_duals(lp, sf, y, n, false);
    sol.status = LpStatus::Infeasible;
    sol.farkas_eq = d.y_eq;
    sol.farkas_ineq = d.y_in;
    sol.farkas_lo = d.z_lo;
    sol.farkas_hi = d.z_hi;
    sol.iterations = tab.iterations;
    // dual_value computes the dual objective; the certificate's combined
    // bound  b_eq'f_eq + b_ineq'f_in - lo'f_lo + hi'f_hi  is its negation
    // and must be strictly negative.
    const double bound = -dual_value(lp, d, lo, hi);
    const double residual =
        stationarity_residual(lp, d, Eigen::VectorXd::Zero(n));
    if (!(bound < 0.0) || residual > 1e-7 * (1.0 - bound)) {
      throw NumericalFailure("solve_lp: Farkas certificate failed validation");
    }
    return sol;
  }

  // Drive any zero-level artificial out of the basis, pivoting on the
  // largest available element; rows that resist are redundant and stay
  // pinned at zero.
  for (Eigen::Index i = 0; i < m; ++i) {
    if (tab.basis[std::size_t(i)] < n_struct) continue;
    Eigen::Index best = -1;
    double best_abs = kPivotTol;
    for (Eigen::Index j = 0; j < n_struct; ++j) {
      if (std::abs(tab.t(i, j)) > best_abs) {
        best_abs = std::abs(tab.t(i, j));
        best = j;
      }
    }
    if (best >= 0) tab.pivot(i, best);
  }

  // Phase 2: original costs.
  Eigen::VectorXd phase2_costs = Eigen::VectorXd::Zero(n_struct + m);
  phase2_costs.head(n_struct) = sf.cost;
  tab.rebuild_cost_row(phase2_costs);
  tab.degenerate = 0;
  Eigen::Index unbounded_col = -1;
  const double rc_tol =
      options.opt_tol * (1.0 + sf.cost.cwiseAbs().maxCoeff());
  const PhaseOutcome outcome =
      settle_phase(tab, sf, phase2_costs, n_struct, rc_tol,
                   options.max_iterations, &unbounded_col);
  sol.iterations = tab.iterations;
  if (std::getenv("PBF_LP_TRACE") != nullptr) {  // TEMP DEBUG
    std::fprintf(stderr, "lp n=%ld p=%ld q=%ld iters=%d refac=%d outcome=%d\n",
                 long(n), long(p), long(q), tab.iterations, tab.refactor_count,
                 int(outcome));
  }
  if (outcome == PhaseOutcome::IterationCap) {
    throw NumericalFailure("solve_lp: phase 2 hit the iteration cap");
  }

  if (outcome == PhaseOutcome::Unbounded) {
    Eigen::VectorXd v_ray = Eigen::VectorXd::Zero(n_struct);
    v_ray(unbounded_col) = 1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (tab.basis[std::size_t(i)] < n_struct) {
        v_ray(tab.basis[std::size_t(i)]) = std::max(-tab.t(i, unbounded_col),
                                                    0.0);
      }
    }
    Eigen::VectorXd ray = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const VarMap& vm = sf.vars[std::size_t(j)];
      switch (vm.kind) {
        case VarKind::Shift:
          ray(j) = v_ray(vm.col_p);
          break;
        case VarKind::Mirror:
          ray(j) = -v_ray(vm.col_p);
          break;
        case VarKind::Split:
          ray(j) = v_ray(vm.col_p) - v_ray(vm.col_m);
          break;
      }
    }
    sol.status = LpStatus::Unbounded;
    sol.x = recover_x();
    sol.ray = ray;
    // A valid recession direction must strictly improve the objective and
    // keep every constraint satisfiable for arbitrarily large steps.
    const double ray_scale = 1.0 + ray.cwiseAbs().maxCoeff();
    double recession = 0.0;
    if (p > 0) recession = (lp.a_eq * ray).cwiseAbs().maxCoeff();
    if (q > 0) {
      recession = std::max(recession, (lp.a_ineq * ray).maxCoeff());
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::isfinite(lo(j))) recession = std::max(recession, -ray(j));
      if (std::isfinite(hi(j))) recession = std::max(recession, ray(j));
    }
    if (!(lp.c.dot(ray) < 0.0) || recession > 1e-7 * ray_scale) {
      throw NumericalFailure("solve_lp: unbounded ray failed validation");
    }
    return sol;
  }

  Eigen::VectorXd x = recover_x();
  for (Eigen::Index j = 0; j < n; ++j) {
    x(j) = std::clamp(x(j), lo(j), hi(j));
  }
  const Eigen::VectorXd y = standard_duals(false);
  const RecoveredDuals d = map_duals(lp, sf, y, n, true);

  sol.status = LpStatus::Optimal;
  sol.x = x;
  sol.objective = lp.c.dot(x);
  sol.duals_eq = d.y_eq;
  sol.duals_ineq = d.y_in;
  sol.duals_lo = d.z_lo;
  sol.duals_hi = d.z_hi;

  // Self-check: the reported point must satisfy the original constraints, and
  // strong duality and complementary slackness must hold, or the recovered
  // certificate is worthless to callers.
  double primal_infeas = 0.0;
  if (p > 0) {
    primal_infeas = (lp.a_eq * x - lp.b_eq).cwiseAbs().maxCoeff();
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    primal_infeas =
        std::max(primal_infeas, lp.a_ineq.row(i).dot(x) - lp.b_ineq(i));
  }
  if (primal_infeas > 1e-7 * b_scale) {
    char msg[120];  // TEMP DEBUG
    std::snprintf(msg, sizeof(msg),
                  "solve_lp: solution violates the constraints "
                  "(infeas=%.3e b_scale=%.3e)",
                  primal_infeas, b_scale);
    throw NumericalFailure(msg);
  }
  const double gap = std::abs(sol.objective - dual_value(lp, d, lo, hi));
  double comp = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    comp = std::max(comp, d.y_in(i) * std::abs(lp.b_ineq(i) -
                                               lp.a_ineq.row(i).dot(x)));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(lo(j))) {
      comp = std::max(comp, d.z_lo(j) * std::abs(x(j) - lo(j)));
    }
    if (std::isfinite(hi(j))) {
      comp = std::max(comp, d.z_hi(j) * std::abs(hi(j) - x(j)));
    }
  }
  // The achievable tightness is a backward-error quantity: it degrades with
  // the magnitudes of the primal point, the duals, and the objective, so the
  // thresholds must carry those scales or healthy solves on large-magnitude
  // problems would be rejected.
  const double obj_scale = 1.0 + std::abs(sol.objective);
  const double point_scale = 1.0 + x.cwiseAbs().maxCoeff();
  const double dual_scale =
      1.0 + std::max({d.y_eq.size() ? d.y_eq.cwiseAbs().maxCoeff() : 0.0,
                      d.y_in.size() ? d.y_in.cwiseAbs().maxCoeff() : 0.0,
                      d.z_lo.cwiseAbs().maxCoeff(),
                      d.z_hi.cwiseAbs().maxCoeff()});
  const double stat = stationarity_residual(lp, d, lp.c);
  if (gap > 1e-8 * obj_scale * dual_scale * point_scale ||
      comp > 1e-8 * obj_scale * dual_scale * point_scale ||
      stat > 1e-7 * dual_scale * (1.0 + lp.c.cwiseAbs().maxCoeff())) {
    throw NumericalFailure("solve_lp: duality checks failed");
  }
  return sol;
}

void dump_lp(const LinearProgram& lp, std::ostream& os) {
  const Eigen::Index n = lp.c.size();
  os << "lp " << n << " vars, " << lp.a_eq.rows() << " eq, "
     << lp.a_ineq.rows() << " ineq\nminimize\n";
  for (Eigen::Index j = 0; j < n; ++j) {
    os << (j ? " " : "") << fmt(lp.c(j));
  }
  os << "\n";
  for (Eigen::Index i = 0; i < lp.a_eq.rows(); ++i) {
    os << "eq:";
    for (Eigen::Index j = 0; j < n; ++j) os << " " << fmt(lp.a_eq(i, j));
    os << " = " << fmt(lp.b_eq(i)) << "\n";
  }
  for (Eigen::Index i = 0; i < lp.a_ineq.rows(); ++i) {
    os << "ineq:";
    for (Eigen::Index j = 0; j < n; ++j) os << " " << fmt(lp.a_ineq(i, j));
    os << " <= " << fmt(lp.b_ineq(i)) << "\n";
  }
  if (lp.lo.size() == n || lp.hi.size() == n) {
    os << "bounds\n";
    for (Eigen::Index j = 0; j < n; ++j) {
      const double lo = lp.lo.size() == n ? lp.lo(j) : -kInf;
      const double hi = lp.hi.size() == n ? lp.hi(j) : kInf;
      os << fmt(lo) << " <= x" << (j + 1) << " <= " << fmt(hi) << "\n";
    }
  }
}

}  // namespace pbf::solvers
