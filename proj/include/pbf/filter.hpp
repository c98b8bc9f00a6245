#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "pbf/hankel.hpp"
#include "pbf/predictor.hpp"
#include "pbf/rules.hpp"
#include "pbf/solvers/bilinear.hpp"

namespace pbf {

enum class FilterNorm {
  SquaredL2,  ///< sum of squared output perturbations (default)
  L1          ///< sum of absolute output perturbations
};

/// Find the smallest perturbation of the recorded outputs such that every
/// prediction built from the perturbed record respects the rule, for all
/// planned inputs in rule.u_pred and initialization windows in rule.y_init,
/// rule.u_init.
struct FilterProblem {
  HankelSystem system;
  PredictorConfig config;
  PhysicalRule rule;
  Eigen::Index segments = 1;
  FilterNorm norm = FilterNorm::SquaredL2;
};

/// Knobs of the exact reformulation solver.
struct McCormickOptions {
  bool enabled = false;
  int max_bilinear_terms = 200;  ///< refuse larger exact problems
  double gap = 1e-4;
  double data_halfwidth = 4.0;  ///< filtered data box: recorded +- halfwidth
  double dual_bound = 50.0;     ///< box half-width for certificate variables
};

struct SolverOptions {
  double penalty_init = 1.0;
  double penalty_growth = 10.0;
  int max_outer = 200;
  double tol_residual = 1e-6;  ///< certified violation at which to stop
  double tol_objective = 1e-9;
  McCormickOptions mccormick;
  Eigen::Index verify_samples = 200;
  std::uint64_t seed = 0;
};

enum class FilterStatus { Optimal, LocalOptimum, Infeasible, IterationLimit };

/// Outcome of checking a record against a rule.
struct ConsistencyReport {
  Eigen::Index n_samples = 0;
  double worst_sampled_violation = 0.0;
  /// Per prediction-rule row: the exact maximum of H_r y_pred - h_r over the
  /// admissible inputs and initialization windows.
  Eigen::VectorXd certified_row_violations;
  double certified_max_violation = 0.0;
};

/// One multiplier pair per prediction-rule row r, proving that the row holds
/// for every admissible parameter: lambda_r solves the transposed lifted
/// system against the row objective, and nu_r >= 0 are the multipliers of the
/// parameter sets with  h_sets' nu_r  <=  h_pred_r  at a consistent record.
struct FilterCertificate {
  std::vector<Eigen::VectorXd> lambda;
  std::vector<Eigen::VectorXd> nu;
};

struct FilterResult {
  Eigen::VectorXd y_filtered;  ///< stacked like Trajectory::stacked_outputs
  double objective = 0.0;
  FilterStatus status = FilterStatus::LocalOptimum;
  FilterCertificate certificate;
  ConsistencyReport verification;
  int outer_iterations = 0;
  double final_residual = 0.0;  ///< certified violation at the returned data
};

/// The lifted predictor stationarity system over all segments, with the
/// recorded outputs treated as a variable. Everything the reformulation
/// manipulates is evaluable here for audits: the system matrix, the parameter
/// selector, the residual, and the rule rows at a candidate point.
class SingleLevelSystem {
 public:
  explicit SingleLevelSystem(const FilterProblem& p);

  Eigen::Index n_data() const { return n_data_; }
  Eigen::Index n_z() const { return n_z_; }
  Eigen::Index n_p() const { return selector_.cols(); }
  Eigen::Index segments() const { return problem_.segments; }
  Eigen::Index rule_rows() const { return problem_.rule.y_pred.H.rows(); }

  /// Stationarity matrix at a candidate record (linear in `ytilde`).
  Eigen::MatrixXd matrix(const Eigen::VectorXd& ytilde) const;
  /// Constant 0/1 map from (y_init; u_init; u_pred_1..k) to the right side.
  const Eigen::MatrixXd& selector() const { return selector_; }
  /// matrix(ytilde) * z - selector() * p; zero iff z solves the predictor.
  Eigen::VectorXd residual(const Eigen::VectorXd& ytilde,
                           const Eigen::VectorXd& z,
                           const Eigen::VectorXd& p) const;
  /// H_pred y_pred - h_pred at the lifted point (bilinear in ytilde and z).
  Eigen::VectorXd rule_values(const Eigen::VectorXd& ytilde,
                              const Eigen::VectorXd& z) const;

  const FilterProblem& problem() const { return problem_; }

 private:
  FilterProblem problem_;
  Eigen::MatrixXd selector_;
  Eigen::Index n_data_ = 0;
  Eigen::Index n_z_ = 0;
};

SingleLevelSystem assemble_single_level(const FilterProblem& p);

/// The filter as one finite bilinear program over the perturbed record and
/// the per-row certificate variables (products only between the record and
/// the lifted multipliers). Index maps locate each variable group inside
/// `program`.
struct RobustCounterpart {
  solvers::BilinearProgram program;
  Eigen::Index n_data = 0;
  Eigen::Index n_lifted = 0;    ///< lambda block size per rule row
  Eigen::Index n_set_rows = 0;  ///< nu block size per rule row
  Eigen::Index rule_rows = 0;

  Eigen::Index data_index(Eigen::Index i) const { return i; }
  Eigen::Index lambda_offset(Eigen::Index row) const {
    return n_data + row * n_lifted;
  }
  Eigen::Index nu_offset(Eigen::Index row) const {
    return n_data + rule_rows * n_lifted + row * n_set_rows;
  }
};

RobustCounterpart assemble_robust_counterpart(
    const FilterProblem& p, const McCormickOptions& options = {});

/// Minimally perturbs the recorded outputs until every prediction respects
/// the rule. The default scheme alternates between certifying the worst
/// violations exactly and re-fitting the record under linearized cuts with
/// penalty continuation; McCormickOptions::enabled switches to the exact
/// branch-and-bound solve of the robust counterpart. Returns IterationLimit
/// with the best iterate when the outer loop is exhausted.
FilterResult solve_filter(const FilterProblem& p,
                          const SolverOptions& options = {});

/// Checks a record against a rule: predictions at `n_samples` sampled
/// admissible inputs (initialization windows at zero), plus the exact
/// LP-certified worst case per rule row. Throws UnboundedInnerProblem when
/// the parameter sets fail to bound the worst case.
ConsistencyReport verify_consistency(const HankelSystem& h,
                                     const PredictorConfig& cfg,
                                     const PhysicalRule& rule,
                                     Eigen::Index segments,
                                     Eigen::Index n_samples,
                                     std::uint64_t seed);

}  // namespace pbf
