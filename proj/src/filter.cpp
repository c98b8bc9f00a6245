#include "pbf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "pbf/solvers/linear.hpp"
#include "pbf/solvers/lp.hpp"

namespace pbf {
namespace {

constexpr double kPenaltyCap = 1e8;
constexpr Eigen::Index kProbePoolCap = 60;

/// Sizes shared by every view of the filter problem. Per segment, the lifted
/// variable block is [sigma | g | kappa] of sizes n_si, n_g, n_kap.
struct Dims {
  Eigen::Index t_init = 0, n_h = 0, n_y = 0, n_u = 0;
  Eigen::Index n_si = 0, n_ui = 0, n_up = 0, n_g = 0, n_kap = 0, s = 0;
  Eigen::Index segments = 1;
  Eigen::Index n_data = 0;
  Eigen::Index n_z = 0;
  Eigen::Index rule_rows = 0;
};

Dims make_dims(const HankelSystem& h, Eigen::Index segments,
               Eigen::Index rule_rows) {
  Dims d;
  d.t_init = h.t_init;
  d.n_h = h.n_h;
  d.n_y = h.n_y();
  d.n_u = h.n_u();
  d.n_si = h.t_init * d.n_y;
  d.n_ui = h.t_init * d.n_u;
  d.n_up = h.n_h * d.n_u;
  d.n_g = h.n_cols();
  d.n_kap = d.n_ui + d.n_up;
  d.s = d.n_si + d.n_g + d.n_kap;
  d.segments = segments;
  d.n_data = h.source.outputs.size();
  d.n_z = segments * d.s;
  d.rule_rows = rule_rows;
  return d;
}

void check_problem(const FilterProblem& p) {
  if (p.segments < 1) {
    throw DimensionMismatch("filter: segments must be >= 1");
  }
  if (p.segments > 1 && p.system.t_init != p.system.n_h) {
    throw SplitRequiresEqualDepths(
        "filter: chained segments need t_init == n_h");
  }
  if (p.config.t_init != p.system.t_init || p.config.n_h != p.system.n_h) {
    throw DimensionMismatch(
        "filter: config window lengths disagree with the Hankel system");
  }
  p.config.regularizer_matrix(p.system.n_cols());
  validate_rule(p.rule, p.system, p.segments);
}

/// Visits every record-dependent entry of the chained lifted stationarity
/// matrix as f(row, col, record_index, sign); the entry's value is
/// sign * record[record_index]. Covers the initialization-output block, its
/// transpose, and (for later segments) the chaining block against the
/// previous segment's g columns.
template <typename F>
void for_each_data_entry(const Dims& d, F&& f) {
  for (Eigen::Index seg = 0; seg < d.segments; ++seg) {
    const Eigen::Index o = seg * d.s;
    for (Eigen::Index c = 0; c < d.n_g; ++c) {
      for (Eigen::Index t = 0; t < d.t_init; ++t) {
        for (Eigen::Index ch = 0; ch < d.n_y; ++ch) {
          const Eigen::Index row = t * d.n_y + ch;
          const Eigen::Index idx = (c + t) * d.n_y + ch;
          f(o + row, o + d.n_si + c, idx, 1.0);
          f(o + d.n_si + c, o + row, idx, 1.0);
        }
      }
      if (seg > 0) {
        for (Eigen::Index i = 0; i < d.n_h; ++i) {
          for (Eigen::Index ch = 0; ch < d.n_y; ++ch) {
            const Eigen::Index row = i * d.n_y + ch;
            const Eigen::Index idx = (c + d.t_init + i) * d.n_y + ch;
            f(o + row, o - d.s + d.n_si + c, idx, -1.0);
          }
        }
      }
    }
  }
}

/// Visits the record dependence of rule row r's value over the lifted
/// variables as f(z_col, record_index, weight): the row value is
/// sum weight * record[record_index] * z[z_col] (nonzero only on g columns).
template <typename F>
void for_each_objective_entry(const Dims& d, const Eigen::MatrixXd& rule_h,
                              Eigen::Index r, F&& f) {
  for (Eigen::Index seg = 0; seg < d.segments; ++seg) {
    for (Eigen::Index c = 0; c < d.n_g; ++c) {
      const Eigen::Index q = seg * d.s + d.n_si + c;
      for (Eigen::Index i = 0; i < d.n_h; ++i) {
        for (Eigen::Index ch = 0; ch < d.n_y; ++ch) {
          const double w = rule_h(r, seg * d.n_h * d.n_y + i * d.n_y + ch);
          if (w == 0.0) continue;
          f(q, (c + d.t_init + i) * d.n_y + ch, w);
        }
      }
    }
  }
}

Eigen::VectorXd objective_row(const Dims& d, const Eigen::MatrixXd& rule_h,
                              Eigen::Index r, const Eigen::VectorXd& ytilde) {
  Eigen::VectorXd obj = Eigen::VectorXd::Zero(d.n_z);
  for_each_objective_entry(
      d, rule_h, r, [&](Eigen::Index q, Eigen::Index idx, double w) {
        obj(q) += w * ytilde(idx);
      });
  return obj;
}

/// Inequality rows of the parameter polytope, block diagonal over the stack
/// (y_init; u_init; u_pred_1..k). Constant: only the recorded outputs move.
struct ParamRows {
  Eigen::MatrixXd h_rows;
  Eigen::VectorXd rhs;
};

ParamRows param_rows(const PhysicalRule& rule) {
  const Polyhedron blocks[3] = {as_rows(rule.y_init), as_rows(rule.u_init),
                                as_rows(rule.u_pred)};
  Eigen::Index rows = 0, cols = 0;
  for (const Polyhedron& b : blocks) {
    rows += b.H.rows();
    cols += b.dim();
  }
  ParamRows out;
  out.h_rows = Eigen::MatrixXd::Zero(rows, cols);
  out.rhs = Eigen::VectorXd::Zero(rows);
  Eigen::Index r0 = 0, c0 = 0;
  for (const Polyhedron& b : blocks) {
    out.h_rows.block(r0, c0, b.H.rows(), b.dim()) = b.H;
    out.rhs.segment(r0, b.h.size()) = b.h;
    r0 += b.H.rows();
    c0 += b.dim();
  }
  return out;
}

/// Problem-static data shared by the certification and reformulation paths.
struct Geometry {
  Dims d;
  Eigen::MatrixXd selector;
  ParamRows sets;
};

Geometry make_geometry(const FilterProblem& p) {
  Geometry g;
  g.d = make_dims(p.system, p.segments, p.rule.y_pred.H.rows());
  g.selector = rhs_selector(p.system, p.segments);
  g.sets = param_rows(p.rule);
  if (g.sets.h_rows.cols() != g.selector.cols()) {
    throw DimensionMismatch(
        "filter: parameter sets disagree with the selector width");
  }
  return g;
}

/// Exact worst case of one rule row together with the multipliers proving it.
struct RowCertificate {
  double max_value = 0.0;      ///< certified max of the row value + offset
  Eigen::VectorXd lambda;      ///< lifted multipliers, length n_z
  Eigen::VectorXd nu;          ///< parameter-set multipliers, >= 0
  Eigen::VectorXd probe;       ///< a worst-case parameter stack
};

/// Everything known about one candidate record: the factorized stationarity
/// system and the certified worst case of every rule row.
struct Snapshot {
  solvers::IndefiniteFactorization fact;
  std::vector<RowCertificate> rows;
  double worst = 0.0;  ///< max over rows of (max_value - rule rhs)
};

solvers::IndefiniteFactorization factor_at(const FilterProblem& p,
                                           const Eigen::VectorXd& ytilde) {
  const HankelSystem h = rebuild_with_outputs(p.system, ytilde);
  try {
    // The chained matrix is block lower triangular, hence nonsymmetric.
    return solvers::IndefiniteFactorization(
        kkt_matrix_schur_split(h, p.config, p.segments), 1e-12,
        /*require_symmetric=*/false);
  } catch (const SingularMatrix& err) {
    throw SingularKkt(err.what());
  }
}

Snapshot take_snapshot(const FilterProblem& p, const Geometry& g,
                       const Eigen::VectorXd& ytilde) {
  Snapshot snap{factor_at(p, ytilde), {}, -std::numeric_limits<double>::max()};
  snap.rows.reserve(static_cast<std::size_t>(g.d.rule_rows));
  for (Eigen::Index r = 0; r < g.d.rule_rows; ++r) {
    RowCertificate cert;
    const Eigen::VectorXd obj = objective_row(g.d, p.rule.y_pred.H, r, ytilde);
    cert.lambda = snap.fact.solve_transposed(obj);
    const Eigen::VectorXd w = g.selector.transpose() * cert.lambda;

    solvers::LinearProgram lp;
    lp.c = -w;
    lp.a_ineq = g.sets.h_rows;
    lp.b_ineq = g.sets.rhs;
    const solvers::LpSolution sol = solve_lp(lp);
    if (sol.status == solvers::LpStatus::Unbounded) {
      throw UnboundedInnerProblem(
          "filter: parameter sets do not bound the worst case");
    }
    if (sol.status == solvers::LpStatus::Infeasible) {
      throw NumericalFailure("filter: parameter set is empty");
    }
    cert.max_value = -sol.objective;
    cert.nu = sol.duals_ineq;
    cert.probe = sol.x;
    snap.worst = std::max(snap.worst, cert.max_value - p.rule.y_pred.h(r));
    snap.rows.push_back(std::move(cert));
  }
  return snap;
}

/// A remembered worst-case parameter for one rule row. Its linear cut in the
/// record is rebuilt at every round from the current column weights.
struct Probe {
  Eigen::Index row = 0;
  Eigen::VectorXd params;
};

/// Linearized rule rows at the current record: freezing the column weights
/// that each probe induces makes row value <= rhs linear in the record.
void build_cuts(const FilterProblem& p, const Geometry& g,
                const Snapshot& snap, const std::deque<Probe>& pool,
                Eigen::MatrixXd& a, Eigen::VectorXd& b) {
  const Dims& d = g.d;
  a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pool.size()), d.n_data);
  b.resize(static_cast<Eigen::Index>(pool.size()));
  Eigen::Index k = 0;
  for (const Probe& probe : pool) {
    const Eigen::VectorXd z = snap.fact.solve(g.selector * probe.params);
    for (Eigen::Index seg = 0; seg < d.segments; ++seg) {
      for (Eigen::Index c = 0; c < d.n_g; ++c) {
        const double gv = z(seg * d.s + d.n_si + c);
        if (gv == 0.0) continue;
        for (Eigen::Index i = 0; i < d.n_h; ++i) {
          for (Eigen::Index ch = 0; ch < d.n_y; ++ch) {
            a(k, (c + d.t_init + i) * d.n_y + ch) +=
                p.rule.y_pred.H(probe.row,
                                seg * d.n_h * d.n_y + i * d.n_y + ch) *
                gv;
          }
        }
      }
    }
    b(k) = p.rule.y_pred.h(probe.row);
    ++k;
  }
}

double perturbation_size(const Eigen::VectorXd& delta, FilterNorm norm) {
  return norm == FilterNorm::SquaredL2 ? delta.squaredNorm()
                                       : delta.lpNorm<1>();
}

/// min 0.5 sum w_i (y_i - raw_i)^2 + 0.5 rho sum max(a_k'y - b_k, 0)^2 by
/// iterated active-set normal equations; the L1 norm enters through
/// reweighting w_i = 1 / max(|y_i - raw_i|, eps).
Eigen::VectorXd refit_record(const Eigen::VectorXd& y_raw,
                             const Eigen::MatrixXd& a,
                             const Eigen::VectorXd& b, double rho,
                             FilterNorm norm, Eigen::VectorXd ytilde) {
  const Eigen::Index n = y_raw.size();
  std::vector<char> active(static_cast<std::size_t>(a.rows()), 0);
  for (int round = 0; round < 40; ++round) {
    Eigen::VectorXd weights = Eigen::VectorXd::Ones(n);
    if (norm == FilterNorm::L1) {
      weights = ((ytilde - y_raw).cwiseAbs().array().max(1e-6)).inverse();
    }
    Eigen::MatrixXd lhs = weights.asDiagonal();
    Eigen::VectorXd rhs = weights.cwiseProduct(y_raw);
    std::vector<char> now(static_cast<std::size_t>(a.rows()), 0);
    for (Eigen::Index k = 0; k < a.rows(); ++k) {
      if (a.row(k).dot(ytilde) - b(k) > 0.0) {
        now[static_cast<std::size_t>(k)] = 1;
        lhs.noalias() += rho * a.row(k).transpose() * a.row(k);
        rhs.noalias() += rho * b(k) * a.row(k).transpose();
      }
    }
    const Eigen::VectorXd next = lhs.ldlt().solve(rhs);
    const bool same_set = now == active;
    const bool settled =
        (next - ytilde).lpNorm<Eigen::Infinity>() <=
        1e-12 * (1.0 + ytilde.lpNorm<Eigen::Infinity>());
    active = std::move(now);
    ytilde = next;
    if (same_set && settled) break;
  }
  return ytilde;
}

ConsistencyReport build_report(const FilterProblem& p, const Geometry& g,
                               const Snapshot& snap, Eigen::Index n_samples,
                               std::uint64_t seed) {
  ConsistencyReport report;
  report.certified_row_violations.resize(g.d.rule_rows);
  report.certified_max_violation = -std::numeric_limits<double>::max();
  for (Eigen::Index r = 0; r < g.d.rule_rows; ++r) {
    report.certified_row_violations(r) =
        snap.rows[static_cast<std::size_t>(r)].max_value - p.rule.y_pred.h(r);
    report.certified_max_violation = std::max(
        report.certified_max_violation, report.certified_row_violations(r));
  }
  if (n_samples < 1) return report;

  report.n_samples = n_samples;
  double worst = -std::numeric_limits<double>::max();
  const Eigen::MatrixXd draws = sample(p.rule.u_pred, n_samples, seed);
  PredictionRequest req;
  req.y_init = Eigen::VectorXd::Zero(g.d.n_si);
  req.u_init = Eigen::VectorXd::Zero(g.d.n_ui);
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    req.u_pred = draws.col(j);
    const PredictionResult pred =
        p.segments == 1 ? predict(p.system, p.config, req)
                        : predict_split(p.system, p.config, req);
    worst = std::max(
        worst,
        (p.rule.y_pred.H * pred.y_pred - p.rule.y_pred.h).maxCoeff());
  }
  report.worst_sampled_violation = worst;
  return report;
}

FilterResult solve_filter_exact(const FilterProblem& p, const Geometry& g,
                                const SolverOptions& options) {
  const Eigen::VectorXd y_raw = p.system.source.stacked_outputs();
  const RobustCounterpart rc =
      assemble_robust_counterpart(p, options.mccormick);

  solvers::BilinearOptions bopt;
  bopt.gap = options.mccormick.gap;
  // The search would need to close envelope gaps over the full data box to
  // certify optimality, which grows exponentially with the record length;
  // instead seed the incumbent from the local solver, spend a bounded number
  // of nodes trying to beat it, and report the bound gap honestly.
  bopt.refine_rounds = 3;
  bopt.polish_every = 25;
  bopt.stall_nodes = 60;
  bopt.max_nodes = 400;
  try {
    SolverOptions it_options = options;
    it_options.mccormick.enabled = false;
    it_options.verify_samples = 0;
    const FilterResult it = solve_filter(p, it_options);
    const Eigen::Index rows = Eigen::Index(it.certificate.lambda.size());
    if (it.status != FilterStatus::Infeasible && rows == rc.rule_rows) {
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(rc.program.n);
      x0.head(rc.n_data) = it.y_filtered;
      bool shaped = true;
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& lam = it.certificate.lambda[std::size_t(r)];
        const auto& nu = it.certificate.nu[std::size_t(r)];
        if (lam.size() != rc.n_lifted || nu.size() != rc.n_set_rows) {
          shaped = false;
          break;
        }
        x0.segment(rc.lambda_offset(r), rc.n_lifted) = lam;
        x0.segment(rc.nu_offset(r), rc.n_set_rows) = nu;
      }
      const Eigen::Index slack_offset =
          rc.n_data + rc.rule_rows * (rc.n_lifted + rc.n_set_rows);
      for (Eigen::Index i = slack_offset; i < rc.program.n; ++i) {
        x0(i) = std::abs(it.y_filtered(i - slack_offset) -
                         y_raw(i - slack_offset));
      }
      if (shaped) bopt.warm_start = x0;
    }
  } catch (const Error&) {
    // Seeding is best-effort; the search still runs unseeded.
  }
  const solvers::BilinearSolution sol = solve_bilinear(
      rc.program, solvers::BilinearMethod::BranchAndBound, bopt);

  FilterResult result;
  result.outer_iterations = sol.iterations;
  if (sol.status == solvers::BilinearStatus::Infeasible) {
    result.y_filtered = y_raw;
    result.status = FilterStatus::Infeasible;
  } else {
    result.y_filtered = sol.x.head(rc.n_data);
    switch (sol.status) {
      case solvers::BilinearStatus::Optimal:
        result.status = FilterStatus::Optimal;
        break;
      case solvers::BilinearStatus::IterationLimit:
        result.status = FilterStatus::IterationLimit;
        break;
      default:
        result.status = FilterStatus::LocalOptimum;
        break;
    }
  }
  result.objective = perturbation_size(result.y_filtered - y_raw, p.norm);

  FilterProblem at_result = p;
  at_result.system = rebuild_with_outputs(p.system, result.y_filtered);
  const Snapshot snap = take_snapshot(at_result, g, result.y_filtered);
  result.final_residual = std::max(0.0, snap.worst);
  result.certificate.lambda.reserve(snap.rows.size());
  result.certificate.nu.reserve(snap.rows.size());
  for (const RowCertificate& cert : snap.rows) {
    result.certificate.lambda.push_back(cert.lambda);
    result.certificate.nu.push_back(cert.nu);
  }
  result.verification = build_report(at_result, g, snap,
                                     options.verify_samples, options.seed);
  return result;
}

}  // namespace

SingleLevelSystem::SingleLevelSystem(const FilterProblem& p) : problem_(p) {
  check_problem(problem_);
  selector_ = rhs_selector(problem_.system, problem_.segments);
  const Dims d = make_dims(problem_.system, problem_.segments,
                           problem_.rule.y_pred.H.rows());
  n_data_ = d.n_data;
  n_z_ = d.n_z;
}

Eigen::MatrixXd SingleLevelSystem::matrix(const Eigen::VectorXd& ytilde) const {
  const HankelSystem h = rebuild_with_outputs(problem_.system, ytilde);
  return kkt_matrix_schur_split(h, problem_.config, problem_.segments);
}

Eigen::VectorXd SingleLevelSystem::residual(const Eigen::VectorXd& ytilde,
                                            const Eigen::VectorXd& z,
                                            const Eigen::VectorXd& p) const {
  if (z.size() != n_z_ || p.size() != selector_.cols()) {
    throw DimensionMismatch("single-level residual: wrong block sizes");
  }
  return matrix(ytilde) * z - selector_ * p;
}

Eigen::VectorXd SingleLevelSystem::rule_values(const Eigen::VectorXd& ytilde,
                                               const Eigen::VectorXd& z) const {
  if (z.size() != n_z_) {
    throw DimensionMismatch("single-level rule values: wrong block sizes");
  }
  const HankelSystem h = rebuild_with_outputs(problem_.system, ytilde);
  const Dims d = make_dims(h, problem_.segments, rule_rows());
  Eigen::VectorXd y_pred(d.segments * d.n_h * d.n_y);
  for (Eigen::Index seg = 0; seg < d.segments; ++seg) {
    y_pred.segment(seg * d.n_h * d.n_y, d.n_h * d.n_y) =
        h.y_pred_block * z.segment(seg * d.s + d.n_si, d.n_g);
  }
  return problem_.rule.y_pred.H * y_pred - problem_.rule.y_pred.h;
}

SingleLevelSystem assemble_single_level(const FilterProblem& p) {
  return SingleLevelSystem(p);
}

RobustCounterpart assemble_robust_counterpart(const FilterProblem& p,
                                              const McCormickOptions& options) {
  check_problem(p);
  const Geometry g = make_geometry(p);
  const Dims& d = g.d;
  const Eigen::VectorXd y_raw = p.system.source.stacked_outputs();

  Eigen::Index entry_count = 0;
  for_each_data_entry(d, [&](Eigen::Index, Eigen::Index, Eigen::Index,
                             double) { ++entry_count; });
  const Eigen::Index term_count = d.rule_rows * entry_count;
  if (term_count > options.max_bilinear_terms) {
    throw ConfigError(
        "exact filter: " + std::to_string(term_count) +
        " bilinear terms exceed the limit of " +
        std::to_string(options.max_bilinear_terms) +
        "; raise max_bilinear_terms or use the default solver");
  }

  RobustCounterpart rc;
  rc.n_data = d.n_data;
  rc.n_lifted = d.n_z;
  rc.n_set_rows = g.sets.h_rows.rows();
  rc.rule_rows = d.rule_rows;

  const Eigen::Index n_slack = p.norm == FilterNorm::L1 ? d.n_data : 0;
  const Eigen::Index slack_offset =
      d.n_data + d.rule_rows * (rc.n_lifted + rc.n_set_rows);
  const Eigen::Index n = slack_offset + n_slack;
  const Eigen::Index n_eq = d.rule_rows * (d.n_z + g.selector.cols());
  const Eigen::Index n_ineq = d.rule_rows + 2 * n_slack;

  solvers::BilinearProgram& bp = rc.program;
  bp.n = n;
  bp.c = Eigen::VectorXd::Zero(n);
  bp.a_eq = Eigen::MatrixXd::Zero(n_eq, n);
  bp.b_eq = Eigen::VectorXd::Zero(n_eq);
  bp.a_ineq = Eigen::MatrixXd::Zero(n_ineq, n);
  bp.b_ineq = Eigen::VectorXd::Zero(n_ineq);
  bp.lo = Eigen::VectorXd::Zero(n);
  bp.hi = Eigen::VectorXd::Zero(n);

  bp.lo.head(d.n_data) = y_raw.array() - options.data_halfwidth;
  bp.hi.head(d.n_data) = y_raw.array() + options.data_halfwidth;

  const Eigen::MatrixXd m0 =
      kkt_matrix_schur_split(rebuild_with_outputs(p.system,
                                                  Eigen::VectorXd::Zero(
                                                      d.n_data)),
                             p.config, p.segments);

  for (Eigen::Index r = 0; r < d.rule_rows; ++r) {
    const Eigen::Index lam = rc.lambda_offset(r);
    const Eigen::Index nu = rc.nu_offset(r);
    const Eigen::Index base = r * (d.n_z + g.selector.cols());

    // Stationarity of the lifted multipliers: M(record)' lambda matches the
    // record-linear rule row; constant part on lambda, bilinear record part,
    // and the rule-row coefficients on the record itself.
    bp.a_eq.block(base, lam, d.n_z, d.n_z) = m0.transpose();
    for_each_data_entry(d, [&](Eigen::Index mr, Eigen::Index mc,
                               Eigen::Index idx, double sign) {
      bp.terms.push_back({base + mc, true, idx, lam + mr, sign});
    });
    for_each_objective_entry(
        d, p.rule.y_pred.H, r,
        [&](Eigen::Index q, Eigen::Index idx, double w) {
          bp.a_eq(base + q, idx) -= w;
        });

    // The set multipliers reproduce the parameter-side sensitivity.
    bp.a_eq.block(base + d.n_z, nu, g.selector.cols(), rc.n_set_rows) =
        g.sets.h_rows.transpose();
    bp.a_eq.block(base + d.n_z, lam, g.selector.cols(), d.n_z) =
        -g.selector.transpose();

    // Certified worst case below the rule threshold.
    bp.a_ineq.block(r, nu, 1, rc.n_set_rows) = g.sets.rhs.transpose();
    bp.b_ineq(r) = p.rule.y_pred.h(r);

    bp.lo.segment(lam, d.n_z).setConstant(-options.dual_bound);
    bp.hi.segment(lam, d.n_z).setConstant(options.dual_bound);
    bp.lo.segment(nu, rc.n_set_rows).setZero();
    bp.hi.segment(nu, rc.n_set_rows).setConstant(options.dual_bound);
  }

  if (p.norm == FilterNorm::L1) {
    for (Eigen::Index i = 0; i < d.n_data; ++i) {
      bp.c(slack_offset + i) = 1.0;
      bp.a_ineq(d.rule_rows + 2 * i, i) = 1.0;
      bp.a_ineq(d.rule_rows + 2 * i, slack_offset + i) = -1.0;
      bp.b_ineq(d.rule_rows + 2 * i) = y_raw(i);
      bp.a_ineq(d.rule_rows + 2 * i + 1, i) = -1.0;
      bp.a_ineq(d.rule_rows + 2 * i + 1, slack_offset + i) = -1.0;
      bp.b_ineq(d.rule_rows + 2 * i + 1) = -y_raw(i);
      bp.lo(slack_offset + i) = 0.0;
      bp.hi(slack_offset + i) = options.data_halfwidth;
    }
  } else {
    for (Eigen::Index i = 0; i < d.n_data; ++i) {
      bp.quadratic.push_back({i, 1.0, y_raw(i)});
    }
  }
  return rc;
}

ConsistencyReport verify_consistency(const HankelSystem& h,
                                     const PredictorConfig& cfg,
                                     const PhysicalRule& rule,
                                     Eigen::Index segments,
                                     Eigen::Index n_samples,
                                     std::uint64_t seed) {
  FilterProblem p;
  p.system = h;
  p.config = cfg;
  p.rule = rule;
  p.segments = segments;
  check_problem(p);
  const Geometry g = make_geometry(p);
  const Snapshot snap = take_snapshot(p, g, h.source.stacked_outputs());
  return build_report(p, g, snap, n_samples, seed);
}

FilterResult solve_filter(const FilterProblem& p, const SolverOptions& options) {
  check_problem(p);
  const Geometry g = make_geometry(p);
  if (options.mccormick.enabled) {
    return solve_filter_exact(p, g, options);
  }

  const Eigen::VectorXd y_raw = p.system.source.stacked_outputs();
  Eigen::VectorXd ytilde = y_raw;
  Snapshot snap = take_snapshot(p, g, ytilde);

  bool best_feasible = false;
  double best_worst = std::numeric_limits<double>::max();
  double best_objective = std::numeric_limits<double>::max();
  Eigen::VectorXd best_y = ytilde;
  std::vector<RowCertificate> best_rows = snap.rows;

  const auto consider = [&](const Eigen::VectorXd& y, const Snapshot& s) {
    const double objective = perturbation_size(y - y_raw, p.norm);
    const bool feasible = s.worst <= options.tol_residual;
    const bool better =
        (feasible && !best_feasible) ||
        (feasible && best_feasible && objective < best_objective) ||
        (!feasible && !best_feasible && s.worst < best_worst);
    if (better) {
      best_feasible = feasible;
      best_worst = s.worst;
      best_objective = objective;
      best_y = y;
      best_rows = s.rows;
    }
  };
  consider(ytilde, snap);

  std::deque<Probe> pool;
  double rho = options.penalty_init;
  int iter = 0;
  while (snap.worst > options.tol_residual && iter < options.max_outer) {
    ++iter;
    for (Eigen::Index r = 0; r < g.d.rule_rows; ++r) {
      const RowCertificate& cert = snap.rows[static_cast<std::size_t>(r)];
      if (cert.max_value - p.rule.y_pred.h(r) <=
          0.1 * options.tol_residual) {
        continue;
      }
      const bool duplicate = std::any_of(
          pool.begin(), pool.end(), [&](const Probe& q) {
            return q.row == r &&
                   (q.params - cert.probe).lpNorm<Eigen::Infinity>() <=
                       1e-9 * (1.0 + cert.probe.lpNorm<Eigen::Infinity>());
          });
      if (!duplicate) pool.push_back({r, cert.probe});
    }
    while (static_cast<Eigen::Index>(pool.size()) > kProbePoolCap) {
      pool.pop_front();
    }

    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    build_cuts(p, g, snap, pool, a, b);
    Eigen::VectorXd next = refit_record(y_raw, a, b, rho, p.norm, ytilde);
    rho = std::min(rho * options.penalty_growth, kPenaltyCap);

    Snapshot snap_next = take_snapshot(p, g, next);
    if (snap_next.worst > snap.worst + 1e-14) {
      const Eigen::VectorXd damped = 0.5 * (next + ytilde);
      Snapshot snap_damped = take_snapshot(p, g, damped);
      if (snap_damped.worst < snap_next.worst) {
        next = damped;
        snap_next = std::move(snap_damped);
      }
    }
    ytilde = next;
    snap = std::move(snap_next);
    consider(ytilde, snap);
  }

  FilterResult result;
  result.y_filtered = best_y;
  result.objective = best_objective;
  result.outer_iterations = iter;
  result.final_residual = std::max(0.0, best_worst);
  if (best_feasible) {
    result.status = best_objective <= options.tol_objective
                        ? FilterStatus::Optimal
                        : FilterStatus::LocalOptimum;
  } else {
    result.status = FilterStatus::IterationLimit;
  }
  result.certificate.lambda.reserve(best_rows.size());
  result.certificate.nu.reserve(best_rows.size());
  for (const RowCertificate& cert : best_rows) {
    result.certificate.lambda.push_back(cert.lambda);
    result.certificate.nu.push_back(cert.nu);
  }

  FilterProblem at_result = p;
  at_result.system = rebuild_with_outputs(p.system, best_y);
  const Snapshot final_snap = take_snapshot(at_result, g, best_y);
  result.verification = build_report(at_result, g, final_snap,
                                     options.verify_samples, options.seed);
  return result;
}

}  // namespace pbf
