#pragma once

#include <vector>

#include <Eigen/Core>

#include "pbf/hankel.hpp"
#include "pbf/predictor.hpp"
#include "pbf/rules.hpp"
#include "pbf/sim.hpp"

namespace pbf {

/// Reference-tracking controller over the prediction horizon.
struct MpcSpec {
  Eigen::VectorXd reference;  ///< segments * n_h * n_y
  double u_max = 6.0;
  Eigen::Index segments = 1;  ///< > 1 chains prediction windows
};

struct MpcPlan {
  Eigen::VectorXd u_pred;
  Eigen::VectorXd y_pred;
  double cost = 0.0;  ///< || y_pred - reference ||^2
  double kkt_residual = 0.0;
  bool rule_checked = false;
  double rule_violation = 0.0;  ///< max rule-row value at y_pred when checked
};

/// Globally solves  min || y_pred - reference ||^2  over planned inputs in
/// [0, u_max], with y_pred the (affine) predictor response from the
/// initialization windows in `init` (its u_pred field is ignored). When
/// `rule` is given, the plan additionally reports how far the predicted
/// outputs sit from violating it.
MpcPlan mpc_open_loop(const HankelSystem& h, const PredictorConfig& cfg,
                      const MpcSpec& spec, const PredictionRequest& init,
                      const PhysicalRule* rule = nullptr);

struct ClosedLoopResult {
  Trajectory trajectory;        ///< applied inputs and measured outputs
  Eigen::VectorXd stage_costs;  ///< || y_t - ref_t ||^2 per executed step
};

/// Receding horizon: replans with mpc_open_loop each step, applies the first
/// input to the plant, and feeds the measurement back into the
/// initialization window (warmed up with zeros).
ClosedLoopResult mpc_closed_loop(const LtiSystem& plant,
                                 const Eigen::VectorXd& x0,
                                 Eigen::Index steps, const HankelSystem& h,
                                 const PredictorConfig& cfg,
                                 const MpcSpec& spec);

/// True when the plan front-loads saturation: no step with all input
/// channels strictly inside [0, u_max - tol) precedes a step saturated at
/// u_max by more than one index.
bool has_turnpike_shape(const Eigen::VectorXd& u_pred, Eigen::Index n_u,
                        double u_max, double tol = 1e-6);

/// Flexibility bid: choose a baseline power and the largest margin gamma so
/// that every regulation scenario keeps the inputs in their box and the
/// predicted outputs inside the comfort band.
struct BidSpec {
  /// One column per scenario, stacked over the horizon like the predictor's
  /// planned inputs (segments * n_h * n_u rows); dimensionless, scaled by
  /// gamma on top of the baseline.
  Eigen::MatrixXd agc;
  double y_min = 0.0;
  double y_max = 0.0;
  double u_max = 6.0;
  double soft_penalty = 1e4;  ///< weight of the comfort slack resolve
  Eigen::Index segments = 1;
  bool per_step_baseline = false;  ///< one baseline value per input entry
  Eigen::VectorXd y_init;          ///< t_init * n_y
  Eigen::VectorXd u_init;          ///< t_init * n_u
};

enum class BidStatus {
  Feasible,     ///< comfort band held exactly
  SoftRelaxed,  ///< band violated; slack minimized under the penalty
  Unbounded     ///< gamma unconstrained (regulation signal never binds)
};

struct BidResult {
  BidStatus status = BidStatus::Feasible;
  double gamma = 0.0;
  Eigen::VectorXd baseline;  ///< scalar by default, per-entry when requested
  std::vector<Eigen::VectorXd> scenario_outputs;
  double violation_total = 0.0;  ///< L1 comfort violation, 0 when Feasible
};

/// Maximizes gamma over (gamma >= 0, baseline in [0, u_max]) with scenario
/// inputs  baseline + gamma * agc_i  jointly constrained to the input box
/// and, through the predictor, to the comfort band. An infeasible band is
/// re-solved with L1-penalized comfort slack (SoftRelaxed); a regulation
/// signal that never binds makes gamma unconstrained (Unbounded).
BidResult solve_bid(const HankelSystem& h, const PredictorConfig& cfg,
                    const BidSpec& spec);

}  // namespace pbf
