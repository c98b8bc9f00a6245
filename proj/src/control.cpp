#include "pbf/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "pbf/solvers/linear.hpp"
#include "pbf/solvers/lp.hpp"

namespace pbf {
namespace {

void check_mpc_spec(const HankelSystem& h, const MpcSpec& spec) {
  if (spec.segments < 1) {
    throw DimensionMismatch("mpc: segments must be >= 1");
  }
  if (!(spec.u_max > 0.0)) {
    throw DimensionMismatch("mpc: u_max must be positive");
  }
  if (spec.reference.size() != spec.segments * h.n_h * h.n_y()) {
    throw DimensionMismatch("mpc: reference has wrong length");
  }
  if (!spec.reference.allFinite()) {
    throw DimensionMismatch("mpc: reference must be finite");
  }
}

}  // namespace

MpcPlan mpc_open_loop(const HankelSystem& h, const PredictorConfig& cfg,
                      const MpcSpec& spec, const PredictionRequest& init,
                      const PhysicalRule* rule) {
  check_mpc_spec(h, spec);
  if (init.y_init.size() != h.t_init * h.n_y() ||
      init.u_init.size() != h.t_init * h.n_u()) {
    throw DimensionMismatch("mpc: initialization windows have wrong length");
  }
  const PredictionOperator op = prediction_operator(h, cfg, spec.segments);
  const Eigen::VectorXd y_free =
      op.from_y_init * init.y_init + op.from_u_init * init.u_init;

  const Eigen::Index n_in = op.from_u_pred.cols();
  const Eigen::MatrixXd q = op.from_u_pred.transpose() * op.from_u_pred;
  const Eigen::VectorXd c =
      op.from_u_pred.transpose() * (y_free - spec.reference);
  const solvers::BoxQpSolution sol = solvers::solve_box_qp(
      q, c, Eigen::VectorXd::Zero(n_in),
      Eigen::VectorXd::Constant(n_in, spec.u_max));

  MpcPlan plan;
  plan.u_pred = sol.x;
  plan.y_pred = op.from_u_pred * sol.x + y_free;
  plan.cost = (plan.y_pred - spec.reference).squaredNorm();
  plan.kkt_residual = sol.kkt_residual;
  if (rule != nullptr) {
    if (rule->y_pred.dim() != plan.y_pred.size()) {
      throw DimensionMismatch("mpc: rule does not match the horizon");
    }
    plan.rule_checked = true;
    plan.rule_violation =
        (rule->y_pred.H * plan.y_pred - rule->y_pred.h).maxCoeff();
  }
  return plan;
}

ClosedLoopResult mpc_closed_loop(const LtiSystem& plant,
                                 const Eigen::VectorXd& x0,
                                 Eigen::Index steps, const HankelSystem& h,
                                 const PredictorConfig& cfg,
                                 const MpcSpec& spec) {
  validate_dimensions(plant);
  check_mpc_spec(h, spec);
  if (plant.n_u() != h.n_u() || plant.n_y() != h.n_y()) {
    throw DimensionMismatch("mpc: plant channels disagree with the data");
  }
  if (x0.size() != plant.n_x()) {
    throw DimensionMismatch("mpc: x0 has wrong length");
  }
  if (steps < 1) {
    throw DimensionMismatch("mpc: steps must be >= 1");
  }

  const Eigen::Index n_u = h.n_u();
  const Eigen::Index n_y = h.n_y();
  PredictionRequest window;
  window.y_init = Eigen::VectorXd::Zero(h.t_init * n_y);
  window.u_init = Eigen::VectorXd::Zero(h.t_init * n_u);

  Eigen::MatrixXd inputs(n_u, steps);
  Eigen::MatrixXd outputs(n_y, steps);
  Eigen::VectorXd costs(steps);
  Eigen::VectorXd x = x0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const MpcPlan plan = mpc_open_loop(h, cfg, spec, window);
    const Eigen::VectorXd u = plan.u_pred.head(n_u);
    const Eigen::VectorXd y = plant.C * x + plant.D * u;
    x = plant.A * x + plant.B * u;
    inputs.col(t) = u;
    outputs.col(t) = y;
    costs(t) = (y - spec.reference.head(n_y)).squaredNorm();

    const Eigen::Index ny_tail = (h.t_init - 1) * n_y;
    const Eigen::Index nu_tail = (h.t_init - 1) * n_u;
    window.y_init.head(ny_tail) = window.y_init.tail(ny_tail).eval();
    window.y_init.tail(n_y) = y;
    window.u_init.head(nu_tail) = window.u_init.tail(nu_tail).eval();
    window.u_init.tail(n_u) = u;
  }

  ClosedLoopResult result;
  result.trajectory =
      make_trajectory(inputs, outputs, h.source.sample_time,
                      h.source.timestamps.size() > 0
                          ? h.source.timestamps(0)
                          : 0.0);
  result.stage_costs = costs;
  return result;
}

bool has_turnpike_shape(const Eigen::VectorXd& u_pred, Eigen::Index n_u,
                        double u_max, double tol) {
  if (n_u < 1 || u_pred.size() % n_u != 0) {
    throw DimensionMismatch("turnpike: inputs not a whole number of steps");
  }
  const Eigen::Index steps = u_pred.size() / n_u;
  Eigen::Index first_interior = steps;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const bool saturated =
        u_pred.segment(t * n_u, n_u).minCoeff() >= u_max - tol;
    if (!saturated && first_interior == steps) {
      first_interior = t;
    }
    if (saturated && t > first_interior + 1) {
      return false;
    }
  }
  return true;
}

BidResult solve_bid(const HankelSystem& h, const PredictorConfig& cfg,
                    const BidSpec& spec) {
  if (spec.segments < 1) {
    throw DimensionMismatch("bid: segments must be >= 1");
  }
  if (!(spec.u_max > 0.0)) {
    throw DimensionMismatch("bid: u_max must be positive");
  }
  if (!(spec.y_min < spec.y_max)) {
    throw DimensionMismatch("bid: comfort band needs y_min < y_max");
  }
  const Eigen::Index n_in = spec.segments * h.n_h * h.n_u();
  const Eigen::Index n_out = spec.segments * h.n_h * h.n_y();
  const Eigen::Index n_scen = spec.agc.cols();
  if (n_scen < 1 || spec.agc.rows() != n_in) {
    throw DimensionMismatch(
        "bid: scenarios must stack one column per scenario over the horizon");
  }
  if (spec.y_init.size() != h.t_init * h.n_y() ||
      spec.u_init.size() != h.t_init * h.n_u()) {
    throw DimensionMismatch("bid: initialization windows have wrong length");
  }
  if (!(spec.soft_penalty > 0.0)) {
    throw DimensionMismatch("bid: soft_penalty must be positive");
  }

  const PredictionOperator op = prediction_operator(h, cfg, spec.segments);
  const Eigen::VectorXd y_free =
      op.from_y_init * spec.y_init + op.from_u_init * spec.u_init;

  // Variables: [gamma | baseline]; scenario i's input is
  // baseline_map * baseline + gamma * agc_i.
  const Eigen::Index n_base = spec.per_step_baseline ? n_in : 1;
  const Eigen::MatrixXd baseline_map =
      spec.per_step_baseline
          ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(n_in, n_in))
          : Eigen::MatrixXd(Eigen::MatrixXd::Ones(n_in, 1));
  const Eigen::Index n_hard = 1 + n_base;
  const Eigen::Index rows_per_scen = 2 * n_in + 2 * n_out;

  solvers::LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(n_hard);
  lp.c(0) = -1.0;  // maximize gamma
  lp.a_ineq = Eigen::MatrixXd::Zero(n_scen * rows_per_scen, n_hard);
  lp.b_ineq = Eigen::VectorXd::Zero(n_scen * rows_per_scen);
  lp.lo = Eigen::VectorXd::Zero(n_hard);
  lp.hi = Eigen::VectorXd::Constant(n_hard, spec.u_max);
  lp.hi(0) = solvers::kInf;

  std::vector<Eigen::Index> comfort_rows;
  comfort_rows.reserve(static_cast<std::size_t>(2 * n_out * n_scen));
  for (Eigen::Index i = 0; i < n_scen; ++i) {
    const Eigen::Index r0 = i * rows_per_scen;
    const Eigen::VectorXd gain = op.from_u_pred * spec.agc.col(i);
    const Eigen::MatrixXd base_out = op.from_u_pred * baseline_map;
    // Input box: 0 <= baseline + gamma agc_i <= u_max.
    lp.a_ineq.block(r0, 0, n_in, 1) = spec.agc.col(i);
    lp.a_ineq.block(r0, 1, n_in, n_base) = baseline_map;
    lp.b_ineq.segment(r0, n_in).setConstant(spec.u_max);
    lp.a_ineq.block(r0 + n_in, 0, n_in, 1) = -spec.agc.col(i);
    lp.a_ineq.block(r0 + n_in, 1, n_in, n_base) = -baseline_map;
    // Comfort band: y_min <= prediction <= y_max.
    lp.a_ineq.block(r0 + 2 * n_in, 0, n_out, 1) = gain;
    lp.a_ineq.block(r0 + 2 * n_in, 1, n_out, n_base) = base_out;
    lp.b_ineq.segment(r0 + 2 * n_in, n_out) =
        Eigen::VectorXd::Constant(n_out, spec.y_max) - y_free;
    lp.a_ineq.block(r0 + 2 * n_in + n_out, 0, n_out, 1) = -gain;
    lp.a_ineq.block(r0 + 2 * n_in + n_out, 1, n_out, n_base) = -base_out;
    lp.b_ineq.segment(r0 + 2 * n_in + n_out, n_out) =
        y_free - Eigen::VectorXd::Constant(n_out, spec.y_min);
    for (Eigen::Index k = 0; k < 2 * n_out; ++k) {
      comfort_rows.push_back(r0 + 2 * n_in + k);
    }
  }

  BidResult result;
  solvers::LpSolution sol = solve_lp(lp);
  if (sol.status == solvers::LpStatus::Unbounded) {
    result.status = BidStatus::Unbounded;
    result.gamma = std::numeric_limits<double>::infinity();
    result.baseline = Eigen::VectorXd::Zero(n_base);
    return result;
  }
  if (sol.status == solvers::LpStatus::Infeasible) {
    // The comfort band cannot be held: re-solve with L1 slack on its rows.
    const Eigen::Index n_slack =
        static_cast<Eigen::Index>(comfort_rows.size());
    solvers::LinearProgram soft = lp;
    soft.c.conservativeResize(n_hard + n_slack);
    soft.c.tail(n_slack).setConstant(spec.soft_penalty);
    soft.a_ineq.conservativeResize(lp.a_ineq.rows(), n_hard + n_slack);
    soft.a_ineq.rightCols(n_slack).setZero();
    for (Eigen::Index k = 0; k < n_slack; ++k) {
      soft.a_ineq(comfort_rows[static_cast<std::size_t>(k)], n_hard + k) =
          -1.0;
    }
    soft.lo.conservativeResize(n_hard + n_slack);
    soft.lo.tail(n_slack).setZero();
    soft.hi.conservativeResize(n_hard + n_slack);
    soft.hi.tail(n_slack).setConstant(solvers::kInf);
    sol = solve_lp(soft);
    if (sol.status == solvers::LpStatus::Unbounded) {
      result.status = BidStatus::Unbounded;
      result.gamma = std::numeric_limits<double>::infinity();
      result.baseline = Eigen::VectorXd::Zero(n_base);
      return result;
    }
    if (sol.status != solvers::LpStatus::Optimal) {
      throw NumericalFailure("bid: soft-relaxed program did not solve");
    }
    result.status = BidStatus::SoftRelaxed;
    result.violation_total = sol.x.tail(n_slack).sum();
  }

  result.gamma = sol.x(0);
  result.baseline = sol.x.segment(1, n_base);
  result.scenario_outputs.reserve(static_cast<std::size_t>(n_scen));
  const Eigen::VectorXd base_input = baseline_map * result.baseline;
  for (Eigen::Index i = 0; i < n_scen; ++i) {
    const Eigen::VectorXd u_i = base_input + result.gamma * spec.agc.col(i);
    result.scenario_outputs.push_back(op.from_u_pred * u_i + y_free);
  }
  return result;
}

}  // namespace pbf
