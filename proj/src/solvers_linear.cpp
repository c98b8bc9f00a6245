#include "pbf/solvers/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>

namespace pbf::solvers {
namespace {

void require_symmetric(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("symmetric solve: matrix must be square");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DimensionMismatch("symmetric solve: matrix is not symmetric");
  }
}

}  // namespace

IndefiniteFactorization::IndefiniteFactorization(const Eigen::MatrixXd& m,
                                                 double singular_tol,
                                                 bool symmetric)
    : matrix_(m) {
  if (symmetric) {
    require_symmetric(m);
  } else if (m.rows() != m.cols()) {
    throw DimensionMismatch("factorization: matrix must be square");
  }
  // Blocks of wildly different magnitude (stiff penalties next to tiny
  // regularizers) inflate the condition number far beyond what the underlying
  // problem requires, so the matrix is symmetrically equilibrated first:
  // factor D M D with D chosen by a couple of row-norm balancing sweeps, and
  // map solutions back through D. Refinement below still targets the
  // original matrix, so the answer's residual is judged unscaled.
  const Eigen::Index n = m.rows();
  scaling_ = Eigen::VectorXd::Ones(n);
  for (int sweep = 0; sweep < 2; ++sweep) {
    const Eigen::MatrixXd scaled =
        scaling_.asDiagonal() * m * scaling_.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row_norm = scaled.row(i).cwiseAbs().maxCoeff();
      if (row_norm > 0.0) scaling_(i) /= std::sqrt(row_norm);
    }
  }
  lu_.compute(scaling_.asDiagonal() * m * scaling_.asDiagonal());
  const Eigen::VectorXd pivots = lu_.matrixLU().diagonal().cwiseAbs();
  const double max_pivot = pivots.size() > 0 ? pivots.maxCoeff() : 0.0;
  if (max_pivot <= 0.0 || pivots.minCoeff() < singular_tol * max_pivot) {
    throw SingularMatrix("factorization: matrix is numerically singular");
  }
  matrix_wide_ = m.cast<long double>();
}

Eigen::MatrixXd IndefiniteFactorization::solve(
    const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != matrix_.rows()) {
    throw DimensionMismatch("factorization solve: rhs has wrong row count");
  }
  const auto d = scaling_.asDiagonal();
  using WideMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const WideMatrix rhs_wide = rhs.cast<long double>();
  Eigen::MatrixXd z = lu_.solve(Eigen::MatrixXd(d * rhs));
  Eigen::MatrixXd x = d * z;
  // Residuals are accumulated in extended precision; plain double residuals
  // would leave the answer's forward error at the condition number times
  // machine epsilon no matter how many refinement passes run.
  for (int refine = 0; refine < 3; ++refine) {
    const Eigen::MatrixXd residual =
        (rhs_wide - matrix_wide_ * x.cast<long double>()).cast<double>();
    z = lu_.solve(Eigen::MatrixXd(d * residual));
    x += d * z;
  }
  return x;
}

Eigen::MatrixXd IndefiniteFactorization::solve_transposed(
    const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != matrix_.rows()) {
    throw DimensionMismatch("factorization solve: rhs has wrong row count");
  }
  const auto d = scaling_.asDiagonal();
  using WideMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const WideMatrix rhs_wide = rhs.cast<long double>();
  Eigen::MatrixXd z = lu_.transpose().solve(Eigen::MatrixXd(d * rhs));
  Eigen::MatrixXd x = d * z;
  for (int refine = 0; refine < 3; ++refine) {
    const Eigen::MatrixXd residual =
        (rhs_wide - matrix_wide_.transpose() * x.cast<long double>())
            .cast<double>();
    z = lu_.transpose().solve(Eigen::MatrixXd(d * residual));
    x += d * z;
  }
  return x;
}

Eigen::MatrixXd solve_symmetric_indefinite(const Eigen::MatrixXd& m,
                                           const Eigen::MatrixXd& rhs,
                                           double singular_tol) {
  const IndefiniteFactorization fact(m, singular_tol);
  return fact.solve(rhs);
}

Eigen::VectorXd solve_symmetric_indefinite(const Eigen::MatrixXd& m,
                                           const Eigen::VectorXd& rhs,
                                           double singular_tol) {
  const Eigen::MatrixXd x =
      solve_symmetric_indefinite(m, Eigen::MatrixXd(rhs), singular_tol);
  return x.col(0);
}

EqQpSolution solve_eq_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& c,
                         const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = q.rows();
  const Eigen::Index m = a.rows();
  if (q.cols() != n || c.size() != n || (m > 0 && a.cols() != n) ||
      b.size() != m) {
    throw DimensionMismatch("solve_eq_qp: inconsistent dimensions");
  }
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = 0.5 * (q + q.transpose());
  if (m > 0) {
    kkt.topRightCorner(n, m) = a.transpose();
    kkt.bottomLeftCorner(m, n) = a;
  }
  Eigen::VectorXd rhs(n + m);
  rhs << -c, b;
  Eigen::VectorXd sol;
  try {
    sol = solve_symmetric_indefinite(kkt, rhs);
  } catch (const SingularMatrix& err) {
    throw SingularKkt(err.what());
  }
  const double residual = (kkt * sol - rhs).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
    throw SingularKkt("solve_eq_qp: stationarity residual too large");
  }
  EqQpSolution out;
  out.x = sol.head(n);
  out.duals = sol.tail(m);
  return out;
}

BoxQpSolution solve_box_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& c,
                           const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                           double tol) {
  const Eigen::Index n = q.rows();
  if (q.cols() != n || c.size() != n || lo.size() != n || hi.size() != n) {
    throw DimensionMismatch("solve_box_qp: inconsistent dimensions");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lo(j) > hi(j)) {
      throw DimensionMismatch("solve_box_qp: lo exceeds hi");
    }
  }
  const Eigen::MatrixXd qs = 0.5 * (q + q.transpose());
  const double ridge =
      1e-10 * std::max(1.0, qs.cwiseAbs().maxCoeff());

  enum class State { Free, AtLo, AtHi };
  std::vector<State> state(std::size_t(n), State::Free);
  // A coordinate whose release leads straight back to the same bound without
  // any movement is numerically stuck there: near-singular free-set systems
  // give its trial direction an arbitrary sign. Such coordinates are locked
  // out of further releases until the iterate actually moves; the final
  // residual reports whatever optimality error that leaves behind.
  std::vector<bool> locked(std::size_t(n), false);
  Eigen::Index last_released = -1;
  Eigen::VectorXd x(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x(j) = std::clamp(0.0, lo(j), hi(j));
  }

  BoxQpSolution out;
  out.lower_duals = Eigen::VectorXd::Zero(n);
  out.upper_duals = Eigen::VectorXd::Zero(n);

  const int max_iter = 100 + 20 * int(n);
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (state[std::size_t(j)] == State::Free) free_idx.push_back(j);
    }
    const Eigen::Index nf = Eigen::Index(free_idx.size());

    Eigen::VectorXd g = qs * x + c;
    // A semidefinite free-set block can be numerically singular; its pseudo-
    // Newton step then blows noise-level gradients up into macroscopic
    // drifting steps, so stationarity is judged on the free gradient itself
    // rather than only on the step length.
    double gf_norm = 0.0;
    for (const Eigen::Index j : free_idx) {
      gf_norm = std::max(gf_norm, std::abs(g(j)));
    }
    const bool stationary = gf_norm <= tol * (1.0 + g.cwiseAbs().maxCoeff());
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    if (!stationary && nf > 0) {
      Eigen::MatrixXd qff(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        gf(r) = g(free_idx[std::size_t(r)]);
        for (Eigen::Index s = 0; s < nf; ++s) {
          qff(r, s) = qs(free_idx[std::size_t(r)], free_idx[std::size_t(s)]);
        }
        qff(r, r) += ridge;
      }
      const Eigen::VectorXd df = qff.ldlt().solve(-gf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        d(free_idx[std::size_t(r)]) = df(r);
      }
    }

    const double step_scale = 1.0 + x.cwiseAbs().maxCoeff();
    if (stationary || d.cwiseAbs().maxCoeff() <= tol * step_scale) {
      // Minimizer over the current free set; test bound multipliers.
      double worst = 0.0;
      Eigen::Index worst_idx = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (locked[std::size_t(j)]) continue;
        double mu = 0.0;
        if (state[std::size_t(j)] == State::AtLo) mu = g(j);
        if (state[std::size_t(j)] == State::AtHi) mu = -g(j);
        if (mu < worst) {
          worst = mu;
          worst_idx = j;
        }
      }
      const double mult_tol = 1e-9 * (1.0 + g.cwiseAbs().maxCoeff());
      if (worst_idx < 0 || worst >= -mult_tol) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (state[std::size_t(j)] == State::AtLo) {
            out.lower_duals(j) = std::max(0.0, g(j));
          }
          if (state[std::size_t(j)] == State::AtHi) {
            out.upper_duals(j) = std::max(0.0, -g(j));
          }
        }
        out.x = x;
        out.iterations = iter + 1;
        const Eigen::VectorXd stat =
            qs * x + c - out.lower_duals + out.upper_duals;
        double residual = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          residual = std::max(residual, std::abs(stat(j)));
        }
        out.kkt_residual = residual;
        return out;
      }
      state[std::size_t(worst_idx)] = State::Free;
      last_released = worst_idx;
      continue;
    }

    // Longest step along d that stays inside the box.
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    State blocking_state = State::Free;
    for (const Eigen::Index j : free_idx) {
      if (d(j) > 0.0 && std::isfinite(hi(j))) {
        const double a = (hi(j) - x(j)) / d(j);
        if (a < alpha) {
          alpha = a;
          blocking = j;
          blocking_state = State::AtHi;
        }
      } else if (d(j) < 0.0 && std::isfinite(lo(j))) {
        const double a = (lo(j) - x(j)) / d(j);
        if (a < alpha) {
          alpha = a;
          blocking = j;
          blocking_state = State::AtLo;
        }
      }
    }
    const bool moved = alpha * d.cwiseAbs().maxCoeff() > 1e-13 * step_scale;
    x += alpha * d;
    if (blocking >= 0) {
      x(blocking) = blocking_state == State::AtLo ? lo(blocking) : hi(blocking);
      state[std::size_t(blocking)] = blocking_state;
      if (!moved && blocking == last_released) {
        locked[std::size_t(blocking)] = true;
      }
    }
    if (moved) {
      std::fill(locked.begin(), locked.end(), false);
      last_released = -1;
    }
  }
  throw NumericalFailure("solve_box_qp: active-set loop did not converge");
}

}  // namespace pbf::solvers
