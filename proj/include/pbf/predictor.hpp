#pragma once

#include <Eigen/Core>

#include "pbf/hankel.hpp"

namespace pbf {

/// Configuration of the regularized data-driven predictor.
///
/// The predictor finds the column combination g that reproduces the given
/// initialization window and planned inputs while minimizing
///   0.5 ||sigma||^2 + 0.5 g' E_g g,
/// where sigma corrects the initialization outputs (noisy data never matches
/// them exactly) and E_g is a positive definite regularizer.
struct PredictorConfig {
  Eigen::Index t_init = 0;  ///< must match the HankelSystem it is used with
  Eigen::Index n_h = 0;
  double regularizer_scale = 1e-4;  ///< E_g = scale * I when no matrix given
  Eigen::MatrixXd regularizer;      ///< optional full E_g, n_cols x n_cols

  /// Resolves E_g for a system with `n_cols` Hankel columns. Validates
  /// symmetry and positive definiteness of a user-supplied matrix.
  Eigen::MatrixXd regularizer_matrix(Eigen::Index n_cols) const;
};

/// Config with window lengths copied from `h` and the default regularizer.
PredictorConfig default_config(const HankelSystem& h);

struct PredictionRequest {
  Eigen::VectorXd y_init;  ///< t_init * n_y, most recent measured outputs
  Eigen::VectorXd u_init;  ///< t_init * n_u, most recent applied inputs
  Eigen::VectorXd u_pred;  ///< n_h * n_u, or segments * n_h * n_u when split
};

struct PredictionResult {
  Eigen::VectorXd y_pred;  ///< predicted outputs over the planned inputs
  Eigen::VectorXd g;       ///< column weights, concatenated per segment
  Eigen::VectorXd sigma;   ///< initialization-output corrections per segment
  Eigen::VectorXd kappa;   ///< input-equality multipliers per segment
};

/// Stationarity matrix of the compact predictor over [g | kappa]:
///   [ Hy_init'Hy_init + E_g   Hu' ]
///   [ Hu                      0   ]
/// with Hu the stacked (u_init_block; u_pred_block).
Eigen::MatrixXd kkt_matrix(const HankelSystem& h, const PredictorConfig& cfg);

/// Lifted stationarity matrix over [sigma | g | kappa]:
///   [ -I        Hy_init   0   ]
///   [ Hy_init'  E_g       Hu' ]
///   [ 0         Hu        0   ]
/// Unlike the compact form, the recorded outputs enter only linearly and the
/// right-hand side (y_init; 0; u_init; u_pred) does not involve them at all,
/// which downstream reformulations rely on.
Eigen::MatrixXd kkt_matrix_schur(const HankelSystem& h,
                                 const PredictorConfig& cfg);

/// Block lower-triangular stationarity matrix of `segments` chained copies of
/// the lifted form, where segment j starts from the previous segment's
/// prediction: the sigma rows of segment j gain -y_pred_block against the g
/// columns of segment j-1. Requires t_init == n_h for segments >= 2.
Eigen::MatrixXd kkt_matrix_schur_split(const HankelSystem& h,
                                       const PredictorConfig& cfg,
                                       Eigen::Index segments);

/// 0/1 selection matrix mapping the parameter stack
/// (y_init; u_init; u_pred_1; ...; u_pred_k) onto the right-hand side of
/// kkt_matrix_schur_split; u_pred_{j-1} feeds both segment j-1's planned
/// inputs and segment j's initialization inputs.
Eigen::MatrixXd rhs_selector(const HankelSystem& h, Eigen::Index segments);

/// Solves the one-segment predictor. Throws DimensionMismatch on malformed
/// requests and SingularKkt when the stationarity system is singular (for
/// example when the data lacks excitation).
PredictionResult predict(const HankelSystem& h, const PredictorConfig& cfg,
                         const PredictionRequest& req);

/// Splits req.u_pred into segments of n_h steps and chains one-segment
/// predictions, each initialized with the previous segment's predicted
/// outputs and planned inputs. Equivalent to solving the
/// kkt_matrix_schur_split system by forward substitution.
PredictionResult predict_split(const HankelSystem& h,
                               const PredictorConfig& cfg,
                               const PredictionRequest& req);

/// The prediction is an affine function of the request:
///   y_pred = from_u_pred u_pred + from_y_init y_init + from_u_init u_init.
struct PredictionOperator {
  Eigen::MatrixXd from_u_pred;
  Eigen::MatrixXd from_y_init;
  Eigen::MatrixXd from_u_init;
  Eigen::Index segments = 1;
};

/// Materializes the affine prediction map for `segments` chained windows by
/// solving the lifted system against every parameter direction.
PredictionOperator prediction_operator(const HankelSystem& h,
                                       const PredictorConfig& cfg,
                                       Eigen::Index segments = 1);

}  // namespace pbf
