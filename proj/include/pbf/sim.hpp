#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "pbf/errors.hpp"
#include "pbf/trajectory.hpp"

namespace pbf {

/// Discrete-time linear system x+ = A x + B u, y = C x + D u.
struct LtiSystem {
  Eigen::MatrixXd A, B, C, D;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B.cols(); }
  Eigen::Index n_y() const { return C.rows(); }
};

/// Throws DimensionMismatch unless A is square and B, C, D agree with it.
void validate_dimensions(const LtiSystem& sys);

/// Spectral radius of A strictly below 1.
bool is_stable(const LtiSystem& sys);

/// Kalman rank test on (A, B).
bool is_controllable(const LtiSystem& sys, double rank_tol = 1e-9);

/// Runs the state recursion from x0 under the input record `inputs`
/// (n_u x T, one sample per column) and returns the outputs (n_y x T).
Eigen::MatrixXd simulate(const LtiSystem& sys, const Eigen::VectorXd& x0,
                         const Eigen::MatrixXd& inputs);

/// Additive measurement noise description.
struct NoiseSpec {
  enum class Kind { Gaussian, Uniform };
  Kind kind = Kind::Gaussian;
  double std_dev = 0.0;  ///< Gaussian sigma, or half-width for Uniform
};

/// Input excitation shapes for dataset generation.
enum class Excitation {
  Prbs,             ///< per-step random switching between 0 and u_max
  Uniform,          ///< i.i.d. uniform on [0, u_max]
  ClosedLoopDither  ///< proportional feedback to mid-range plus dither
};

/// Generates a length-`length` record by exciting `sys` from the origin and
/// adding measurement noise to the outputs. The candidate input is redrawn
/// (at most ten times) until its depth-`pe_order` Hankel matrix has full row
/// rank; throws ExcitationFailed if no draw passes.
Trajectory generate_dataset(const LtiSystem& sys, Eigen::Index length,
                            Excitation excitation, const NoiseSpec& noise,
                            Eigen::Index pe_order, double u_max,
                            double sample_time, std::uint64_t seed);

/// Draws a stable, controllable system with random dense matrices.
LtiSystem random_controllable_system(Eigen::Index n_x, Eigen::Index n_u,
                                     Eigen::Index n_y, std::uint64_t seed);

/// Draws a stable single-input single-output system whose step and impulse
/// responses are nonnegative (entrywise nonnegative A, B, C and zero D), so
/// nonnegative inputs from the origin produce nonnegative outputs.
LtiSystem make_positive_gain_system(Eigen::Index n_x, std::uint64_t seed);

/// First-order thermal response y+ = a y + b u: positive gain for a,b > 0.
LtiSystem first_order_system(double a, double b);

}  // namespace pbf
