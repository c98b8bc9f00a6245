#include "pbf/solvers/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

#include "pbf/solvers/linear.hpp"

namespace pbf::solvers {
namespace {

void validate(const BilinearProgram& bp) {
  const Eigen::Index n = bp.n;
  if (n < 1 || bp.c.size() != n) {
    throw DimensionMismatch("bilinear: c must have length n");
  }
  const Eigen::Index p = bp.a_eq.rows();
  const Eigen::Index q = bp.a_ineq.rows();
  if ((p > 0 && bp.a_eq.cols() != n) || bp.b_eq.size() != p ||
      (q > 0 && bp.a_ineq.cols() != n) || bp.b_ineq.size() != q) {
    throw DimensionMismatch("bilinear: constraint blocks disagree with n");
  }
  if ((bp.lo.size() != 0 && bp.lo.size() != n) ||
      (bp.hi.size() != 0 && bp.hi.size() != n)) {
    throw DimensionMismatch("bilinear: bound vectors have wrong length");
  }
  for (const BilinearTerm& t : bp.terms) {
    if (t.i < 0 || t.i >= n || t.j < 0 || t.j >= n) {
      throw DimensionMismatch("bilinear: term variable out of range");
    }
    const Eigen::Index rows = t.in_equality ? p : q;
    if (t.row < 0 || t.row >= rows) {
      throw DimensionMismatch("bilinear: term row out of range");
    }
  }
  for (const QuadraticTerm& t : bp.quadratic) {
    if (t.var < 0 || t.var >= n) {
      throw DimensionMismatch("bilinear: quadratic variable out of range");
    }
    if (t.weight < 0.0) {
      throw DimensionMismatch("bilinear: quadratic weights must be >= 0");
    }
  }
}

Eigen::VectorXd box_lo(const BilinearProgram& bp) {
  return bp.lo.size() == bp.n ? bp.lo
                              : Eigen::VectorXd::Constant(bp.n, -kInf);
}

Eigen::VectorXd box_hi(const BilinearProgram& bp) {
  return bp.hi.size() == bp.n ? bp.hi : Eigen::VectorXd::Constant(bp.n, kInf);
}

void row_values(const BilinearProgram& bp, const Eigen::VectorXd& x,
                Eigen::VectorXd& eq, Eigen::VectorXd& in) {
  eq = bp.a_eq.rows() > 0 ? Eigen::VectorXd(bp.a_eq * x) : Eigen::VectorXd();
  in = bp.a_ineq.rows() > 0 ? Eigen::VectorXd(bp.a_ineq * x)
                            : Eigen::VectorXd();
  for (const BilinearTerm& t : bp.terms) {
    const double v = t.coeff * x(t.i) * x(t.j);
    if (t.in_equality) {
      eq(t.row) += v;
    } else {
      in(t.row) += v;
    }
  }
}

// Colors the product graph with two colors; throws when a square term or an
// odd cycle makes the alternation impossible.
std::vector<int> two_color(const BilinearProgram& bp) {
  std::vector<std::vector<Eigen::Index>> adj(std::size_t(bp.n));
  for (const BilinearTerm& t : bp.terms) {
    if (t.i == t.j) {
      throw NumericalFailure(
          "bilinear: alternation impossible, a square term couples a "
          "variable with itself");
    }
    adj[std::size_t(t.i)].push_back(t.j);
    adj[std::size_t(t.j)].push_back(t.i);
  }
  std::vector<int> color(std::size_t(bp.n), -1);
  for (Eigen::Index s = 0; s < bp.n; ++s) {
    if (color[std::size_t(s)] >= 0 || adj[std::size_t(s)].empty()) continue;
    color[std::size_t(s)] = 0;
    std::vector<Eigen::Index> stack{s};
    while (!stack.empty()) {
      const Eigen::Index v = stack.back();
      stack.pop_back();
      for (const Eigen::Index u : adj[std::size_t(v)]) {
        if (color[std::size_t(u)] < 0) {
          color[std::size_t(u)] = 1 - color[std::size_t(v)];
          stack.push_back(u);
        } else if (color[std::size_t(u)] == color[std::size_t(v)]) {
          throw NumericalFailure(
              "bilinear: alternation impossible, product graph is not "
              "two-colorable");
        }
      }
    }
  }
  for (int& c : color) {
    if (c < 0) c = 0;  // isolated variables ride with the first block
  }
  return color;
}

Eigen::VectorXd altmin_start(const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  Eigen::VectorXd x(lo.size());
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    const bool lf = std::isfinite(lo(j));
    const bool hf = std::isfinite(hi(j));
    if (lf && hf) {
      x(j) = 0.5 * (lo(j) + hi(j));
    } else if (lf) {
      x(j) = lo(j) + 1.0;
    } else if (hf) {
      x(j) = hi(j) - 1.0;
    } else {
      x(j) = 0.0;
    }
  }
  return x;
}

// One penalized half-step: minimize the objective restricted to the block
// plus rho times the squared residual of all equality rows and the violated
// inequality rows, the rest held fixed. Inequality activity is settled by a
// short fixed-point loop over the active set.
void altmin_half_step(const BilinearProgram& bp, const std::vector<int>& color,
                      int block, double rho, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi, Eigen::VectorXd& x) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < bp.n; ++j) {
    if (color[std::size_t(j)] == block) idx.push_back(j);
  }
  const Eigen::Index nb = Eigen::Index(idx.size());
  if (nb == 0) return;

  const Eigen::Index p = bp.a_eq.rows();
  const Eigen::Index q = bp.a_ineq.rows();

  // Rows as affine functions of the block variables at the current x.
  Eigen::MatrixXd lin_eq = Eigen::MatrixXd::Zero(p, nb);
  Eigen::MatrixXd lin_in = Eigen::MatrixXd::Zero(q, nb);
  Eigen::VectorXd rhs_eq(p), rhs_in(q);
  {
    std::vector<Eigen::Index> pos(std::size_t(bp.n), -1);
    for (Eigen::Index k = 0; k < nb; ++k) pos[std::size_t(idx[k])] = k;
    Eigen::VectorXd x_masked = x;
    for (const Eigen::Index j : idx) x_masked(j) = 0.0;
    rhs_eq = p > 0 ? Eigen::VectorXd(bp.b_eq - bp.a_eq * x_masked)
                   : Eigen::VectorXd();
    rhs_in = q > 0 ? Eigen::VectorXd(bp.b_ineq - bp.a_ineq * x_masked)
                   : Eigen::VectorXd();
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index k = 0; k < nb; ++k) lin_eq(i, k) = bp.a_eq(i, idx[k]);
    }
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index k = 0; k < nb; ++k) {
        lin_in(i, k) = bp.a_ineq(i, idx[k]);
      }
    }
    for (const BilinearTerm& t : bp.terms) {
      const Eigen::Index pi = pos[std::size_t(t.i)];
      const Eigen::Index pj = pos[std::size_t(t.j)];
      Eigen::MatrixXd& lin = t.in_equality ? lin_eq : lin_in;
      Eigen::VectorXd& rhs = t.in_equality ? rhs_eq : rhs_in;
      if (pi >= 0) {
        lin(t.row, pi) += t.coeff * x(t.j);  // two-coloring keeps pj < 0 here
      } else if (pj >= 0) {
        lin(t.row, pj) += t.coeff * x(t.i);
      } else {
        rhs(t.row) -= t.coeff * x(t.i) * x(t.j);
      }
    }
  }

  Eigen::VectorXd c_blk(nb), lo_blk(nb), hi_blk(nb), z(nb);
  for (Eigen::Index k = 0; k < nb; ++k) {
    c_blk(k) = bp.c(idx[k]);
    lo_blk(k) = lo(idx[k]);
    hi_blk(k) = hi(idx[k]);
    z(k) = x(idx[k]);
  }
  Eigen::VectorXd quad_w = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXd quad_a = Eigen::VectorXd::Zero(nb);
  {
    std::vector<Eigen::Index> pos(std::size_t(bp.n), -1);
    for (Eigen::Index k = 0; k < nb; ++k) pos[std::size_t(idx[k])] = k;
    for (const QuadraticTerm& t : bp.quadratic) {
      const Eigen::Index k = pos[std::size_t(t.var)];
      if (k >= 0) {
        quad_w(k) += t.weight;
        quad_a(k) = t.center;
      }
    }
  }

  std::vector<bool> active(std::size_t(q), false);
  for (Eigen::Index i = 0; i < q; ++i) {
    active[std::size_t(i)] = lin_in.row(i).dot(z) - rhs_in(i) > -1e-9;
  }
  for (int round = 0; round < 40; ++round) {
    Eigen::MatrixXd qmat = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd cvec = c_blk;
    for (Eigen::Index k = 0; k < nb; ++k) {
      qmat(k, k) += 2.0 * quad_w(k);
      cvec(k) -= 2.0 * quad_w(k) * quad_a(k);
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      qmat += 2.0 * rho * lin_eq.row(i).transpose() * lin_eq.row(i);
      cvec -= 2.0 * rho * rhs_eq(i) * lin_eq.row(i).transpose();
    }
    for (Eigen::Index i = 0; i < q; ++i) {
      if (!active[std::size_t(i)]) continue;
      qmat += 2.0 * rho * lin_in.row(i).transpose() * lin_in.row(i);
      cvec -= 2.0 * rho * rhs_in(i) * lin_in.row(i).transpose();
    }
    z = solve_box_qp(qmat, cvec, lo_blk, hi_blk).x;

    bool changed = false;
    for (Eigen::Index i = 0; i < q; ++i) {
      const bool now = lin_in.row(i).dot(z) - rhs_in(i) > -1e-9;
      if (now != active[std::size_t(i)]) {
        active[std::size_t(i)] = now;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (Eigen::Index k = 0; k < nb; ++k) x(idx[k]) = z(k);
}

BilinearSolution solve_altmin(const BilinearProgram& bp,
                              const BilinearOptions& options,
                              const Eigen::VectorXd* start = nullptr) {
  const std::vector<int> color = two_color(bp);
  const Eigen::VectorXd lo = box_lo(bp);
  const Eigen::VectorXd hi = box_hi(bp);
  Eigen::VectorXd x = start != nullptr ? *start : altmin_start(lo, hi);
  for (Eigen::Index j = 0; j < bp.n; ++j) {
    x(j) = std::clamp(x(j), lo(j), hi(j));
  }

  BilinearSolution best;
  best.x = x;
  best.residual = bilinear_violation(bp, x);
  best.objective = bilinear_objective(bp, x);

  double rho = options.penalty_init;
  for (int it = 0; it < options.max_iterations; ++it) {
    altmin_half_step(bp, color, 0, rho, lo, hi, x);
    altmin_half_step(bp, color, 1, rho, lo, hi, x);
    const double res = bilinear_violation(bp, x);
    const double obj = bilinear_objective(bp, x);
    if (res < best.residual - 1e-12 ||
        (res <= best.residual + 1e-12 && obj < best.objective)) {
      best.x = x;
      best.residual = res;
      best.objective = obj;
    }
    if (res <= options.tol_residual) {
      BilinearSolution sol;
      sol.status = BilinearStatus::LocalOptimum;
      sol.x = x;
      sol.objective = obj;
      sol.residual = res;
      sol.iterations = it + 1;
      return sol;
    }
    rho = std::min(rho * options.penalty_growth, 1e10);
  }
  best.status = BilinearStatus::IterationLimit;
  best.iterations = options.max_iterations;
  return best;
}

// ----- branch and bound over McCormick relaxations -----

struct PairInfo {
  Eigen::Index i = 0, j = 0;  // i <= j
};

struct Node {
  Eigen::VectorXd lo, hi;
  double bound = -kInf;
  Eigen::VectorXd x;  // relaxation point, x part
  Eigen::VectorXd w;  // relaxation products
  long id = 0;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    return std::tie(a.bound, a.id) > std::tie(b.bound, b.id);
  }
};

struct Relaxer {
  const BilinearProgram& bp;
  int refine_rounds = 12;
  std::vector<PairInfo> pairs;
  std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::Index> pair_of;

  explicit Relaxer(const BilinearProgram& bp_in) : bp(bp_in) {
    for (const BilinearTerm& t : bp.terms) {
      const auto key = std::minmax(t.i, t.j);
      if (pair_of.emplace(key, Eigen::Index(pairs.size())).second) {
        pairs.push_back({key.first, key.second});
      }
    }
  }

  Eigen::Index pair_index(const BilinearTerm& t) const {
    return pair_of.at(std::minmax(t.i, t.j));
  }

  // Solves the node relaxation, refining the quadratic epigraph tangents at
  // the iterate until they support it. Returns false when infeasible.
  bool solve(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
             double* bound, Eigen::VectorXd* x_out,
             Eigen::VectorXd* w_out) const {
    const Eigen::Index n = bp.n;
    const Eigen::Index np = Eigen::Index(pairs.size());
    const Eigen::Index nq = Eigen::Index(bp.quadratic.size());
    const Eigen::Index total = n + np + nq;
    const Eigen::Index p = bp.a_eq.rows();

    LinearProgram lp;
    lp.c = Eigen::VectorXd::Zero(total);
    lp.c.head(n) = bp.c;
    for (Eigen::Index k = 0; k < nq; ++k) {
      lp.c(n + np + k) = bp.quadratic[std::size_t(k)].weight;
    }

    lp.lo = Eigen::VectorXd::Constant(total, -kInf);
    lp.hi = Eigen::VectorXd::Constant(total, kInf);
    lp.lo.head(n) = lo;
    lp.hi.head(n) = hi;
    for (Eigen::Index k = 0; k < np; ++k) {
      const PairInfo& pr = pairs[std::size_t(k)];
      const double c1 = lo(pr.i) * lo(pr.j), c2 = lo(pr.i) * hi(pr.j);
      const double c3 = hi(pr.i) * lo(pr.j), c4 = hi(pr.i) * hi(pr.j);
      lp.lo(n + k) = std::min({c1, c2, c3, c4});
      lp.hi(n + k) = std::max({c1, c2, c3, c4});
    }
    for (Eigen::Index k = 0; k < nq; ++k) {
      const QuadraticTerm& t = bp.quadratic[std::size_t(k)];
      const double dl = lo(t.var) - t.center, dh = hi(t.var) - t.center;
      lp.lo(n + np + k) = 0.0;
      lp.hi(n + np + k) = std::max(dl * dl, dh * dh);
    }

    lp.a_eq = Eigen::MatrixXd::Zero(p, total);
    lp.b_eq = bp.b_eq;
    if (p > 0) lp.a_eq.leftCols(n) = bp.a_eq;

    std::vector<Eigen::RowVectorXd> ineq_rows;
    std::vector<double> ineq_rhs;
    const Eigen::Index q = bp.a_ineq.rows();
    for (Eigen::Index i = 0; i < q; ++i) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(total);
      row.head(n) = bp.a_ineq.row(i);
      ineq_rows.push_back(row);
      ineq_rhs.push_back(bp.b_ineq(i));
    }
    for (const BilinearTerm& t : bp.terms) {
      const Eigen::Index k = pair_index(t);
      if (t.in_equality) {
        lp.a_eq(t.row, n + k) += t.coeff;
      } else {
        ineq_rows[std::size_t(t.row)](n + k) += t.coeff;
      }
    }

    auto add_row = [&](const Eigen::RowVectorXd& row, double rhs) {
      ineq_rows.push_back(row);
      ineq_rhs.push_back(rhs);
    };
    for (Eigen::Index k = 0; k < np; ++k) {
      const PairInfo& pr = pairs[std::size_t(k)];
      const double li = lo(pr.i), ui = hi(pr.i);
      const double lj = lo(pr.j), uj = hi(pr.j);
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(total);
      if (pr.i == pr.j) {
        // Square: tangents below, secant above.
        row.setZero();
        row(pr.i) = 2.0 * li;
        row(n + k) = -1.0;
        add_row(row, li * li);
        row.setZero();
        row(pr.i) = 2.0 * ui;
        row(n + k) = -1.0;
        add_row(row, ui * ui);
        row.setZero();
        row(pr.i) = -(li + ui);
        row(n + k) = 1.0;
        add_row(row, -li * ui);
        continue;
      }
      row.setZero();
      row(pr.j) = li;
      row(pr.i) = lj;
      row(n + k) = -1.0;
      add_row(row, li * lj);
      row.setZero();
      row(pr.j) = ui;
      row(pr.i) = uj;
      row(n + k) = -1.0;
      add_row(row, ui * uj);
      row.setZero();
      row(n + k) = 1.0;
      row(pr.j) = -ui;
      row(pr.i) = -lj;
      add_row(row, -ui * lj);
      row.setZero();
      row(n + k) = 1.0;
      row(pr.j) = -li;
      row(pr.i) = -uj;
      add_row(row, -li * uj);
    }

    auto add_tangent = [&](Eigen::Index k, double at) {
      const QuadraticTerm& t = bp.quadratic[std::size_t(k)];
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(total);
      row(t.var) = 2.0 * (at - t.center);
      row(n + np + k) = -1.0;
      add_row(row, at * at - t.center * t.center);
    };
    for (Eigen::Index k = 0; k < nq; ++k) {
      const QuadraticTerm& t = bp.quadratic[std::size_t(k)];
      add_tangent(k, lo(t.var));
      add_tangent(k, hi(t.var));
      add_tangent(k, 0.5 * (lo(t.var) + hi(t.var)));
    }

    LpSolution sol;
    const int rounds = std::max(1, refine_rounds);
    for (int round = 0; round < rounds; ++round) {
      lp.a_ineq.resize(Eigen::Index(ineq_rows.size()), total);
      lp.b_ineq.resize(Eigen::Index(ineq_rows.size()));
      for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
        lp.a_ineq.row(Eigen::Index(r)) = ineq_rows[r];
        lp.b_ineq(Eigen::Index(r)) = ineq_rhs[r];
      }
      sol = solve_lp(lp);
      if (sol.status != LpStatus::Optimal) return false;  // boxes are finite
      bool refined = false;
      for (Eigen::Index k = 0; k < nq; ++k) {
        const QuadraticTerm& t = bp.quadratic[std::size_t(k)];
        const double d = sol.x(t.var) - t.center;
        if (d * d - sol.x(n + np + k) > 1e-9 * (1.0 + d * d)) {
          add_tangent(k, sol.x(t.var));
          refined = true;
        }
      }
      if (!refined) break;
    }
    *bound = sol.objective;
    *x_out = sol.x.head(n);
    *w_out = np > 0 ? Eigen::VectorXd(sol.x.segment(n, np))
                    : Eigen::VectorXd();
    return true;
  }
};

BilinearSolution solve_branch_and_bound(const BilinearProgram& bp,
                                        const BilinearOptions& options) {
  const Eigen::VectorXd glo = box_lo(bp);
  const Eigen::VectorXd ghi = box_hi(bp);
  for (Eigen::Index j = 0; j < bp.n; ++j) {
    if (!std::isfinite(glo(j)) || !std::isfinite(ghi(j))) {
      throw BoxMissing(
          "bilinear: branch and bound needs finite boxes on every variable");
    }
  }
  bool can_polish = true;
  try {
    two_color(bp);
  } catch (const NumericalFailure&) {
    can_polish = false;
  }

  Relaxer relaxer(bp);
  relaxer.refine_rounds = options.refine_rounds;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
  long next_id = 0;

  Node root;
  root.lo = glo;
  root.hi = ghi;
  root.id = next_id++;
  if (!relaxer.solve(root.lo, root.hi, &root.bound, &root.x, &root.w)) {
    BilinearSolution sol;
    sol.status = BilinearStatus::Infeasible;
    return sol;
  }
  queue.push(root);

  double ub = kInf;
  Eigen::VectorXd best_x;
  int processed = 0;
  int since_improve = 0;
  double lb = root.bound;

  auto try_incumbent = [&](const Eigen::VectorXd& cand) {
    Eigen::VectorXd x = cand;
    for (Eigen::Index j = 0; j < bp.n; ++j) {
      x(j) = std::clamp(x(j), glo(j), ghi(j));
    }
    if (bilinear_violation(bp, x) > options.feas_tol) return;
    const double obj = bilinear_objective(bp, x);
    if (obj < ub - 1e-12 * (1.0 + std::abs(obj))) {
      ub = obj;
      best_x = x;
      since_improve = 0;
    }
  };

  if (options.warm_start.size() == bp.n) try_incumbent(options.warm_start);

  auto stopped_early = [&](const Node& node) {
    BilinearSolution sol;
    sol.status = BilinearStatus::IterationLimit;
    sol.x = std::isfinite(ub) ? best_x : node.x;
    sol.objective = std::isfinite(ub) ? ub : node.bound;
    sol.gap = std::isfinite(ub)
                  ? (ub - lb) / std::max(1.0, std::abs(ub))
                  : kInf;
    sol.residual = bilinear_violation(bp, sol.x);
    sol.iterations = processed;
    return sol;
  };

  while (!queue.empty()) {
    const Node node = queue.top();
    queue.pop();
    lb = node.bound;
    if (std::isfinite(ub) && ub - lb <= options.gap * std::max(1.0, std::abs(ub))) {
      break;
    }
    if (processed >= options.max_nodes) return stopped_early(node);
    if (options.stall_nodes > 0 && std::isfinite(ub) &&
        since_improve >= options.stall_nodes) {
      return stopped_early(node);
    }
    ++processed;
    ++since_improve;

    try_incumbent(node.x);
    const bool polish_now =
        can_polish && (!std::isfinite(ub) || options.polish_every <= 1 ||
                       (processed - 1) % options.polish_every == 0);
    if (polish_now) {
      BilinearOptions popt;
      popt.max_iterations = 40;
      popt.tol_residual = std::min(1e-9, options.feas_tol * 1e-2);
      popt.penalty_init = 10.0;
      try {
        const BilinearSolution local = solve_altmin(bp, popt, &node.x);
        if (local.residual <= options.feas_tol) try_incumbent(local.x);
      } catch (const Error&) {
      }
    }

    // Branch on the most violated product.
    Eigen::Index branch_pair = -1;
    double worst = options.feas_tol;
    for (std::size_t k = 0; k < relaxer.pairs.size(); ++k) {
      const PairInfo& pr = relaxer.pairs[k];
      const double err =
          std::abs(node.w(Eigen::Index(k)) - node.x(pr.i) * node.x(pr.j));
      if (err > worst) {
        worst = err;
        branch_pair = Eigen::Index(k);
      }
    }
    if (branch_pair < 0) continue;  // relaxation already tight here

    const PairInfo& pr = relaxer.pairs[std::size_t(branch_pair)];
    const double wi = node.hi(pr.i) - node.lo(pr.i);
    const double wj = node.hi(pr.j) - node.lo(pr.j);
    const Eigen::Index v = wi >= wj ? pr.i : pr.j;
    const double width = std::max(wi, wj);
    if (width <= 1e-12) continue;
    const double split = std::clamp(node.x(v), node.lo(v) + 0.2 * width,
                                    node.hi(v) - 0.2 * width);

    for (int side = 0; side < 2; ++side) {
      Node child;
      child.lo = node.lo;
      child.hi = node.hi;
      if (side == 0) {
        child.hi(v) = split;
      } else {
        child.lo(v) = split;
      }
      child.id = next_id++;
      if (!relaxer.solve(child.lo, child.hi, &child.bound, &child.x,
                         &child.w)) {
        continue;
      }
      child.bound = std::max(child.bound, node.bound);
      if (std::isfinite(ub) &&
          ub - child.bound <= options.gap * std::max(1.0, std::abs(ub))) {
        try_incumbent(child.x);
        continue;
      }
      queue.push(child);
    }
  }

  BilinearSolution sol;
  if (!std::isfinite(ub)) {
    sol.status = BilinearStatus::Infeasible;
    return sol;
  }
  if (queue.empty()) lb = ub;
  sol.status = BilinearStatus::Optimal;
  sol.x = best_x;
  sol.objective = ub;
  sol.gap = std::max(0.0, (ub - lb) / std::max(1.0, std::abs(ub)));
  sol.residual = bilinear_violation(bp, best_x);
  sol.iterations = processed;
  return sol;
}

}  // namespace

double bilinear_violation(const BilinearProgram& bp, const Eigen::VectorXd& x) {
  Eigen::VectorXd eq, in;
  row_values(bp, x, eq, in);
  double v = 0.0;
  for (Eigen::Index i = 0; i < eq.size(); ++i) {
    v = std::max(v, std::abs(eq(i) - bp.b_eq(i)));
  }
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    v = std::max(v, in(i) - bp.b_ineq(i));
  }
  return v;
}

double bilinear_objective(const BilinearProgram& bp, const Eigen::VectorXd& x) {
  double obj = bp.c.dot(x);
  for (const QuadraticTerm& t : bp.quadratic) {
    const double d = x(t.var) - t.center;
    obj += t.weight * d * d;
  }
  return obj;
}

BilinearSolution solve_bilinear(const BilinearProgram& bp,
                                BilinearMethod method,
                                const BilinearOptions& options) {
  validate(bp);
  if (method == BilinearMethod::AlternatingMinimization) {
    return solve_altmin(bp, options);
  }
  return solve_branch_and_bound(bp, options);
}

}  // namespace pbf::solvers
