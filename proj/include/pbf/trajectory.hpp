#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "pbf/errors.hpp"

namespace pbf {

/// A measured input/output record on a uniform time grid.
///
/// Columns index samples and rows index channels, so `inputs.col(k)` is the
/// input vector applied at `timestamps(k)`. Exogenous disturbances that were
/// recorded alongside the actuated inputs ride along as extra input rows.
struct Trajectory {
  Eigen::VectorXd timestamps;  ///< seconds; strictly increasing, uniform spacing
  Eigen::MatrixXd inputs;      ///< n_u x T
  Eigen::MatrixXd outputs;     ///< n_y x T
  double sample_time = 0.0;    ///< grid spacing in seconds

  Eigen::Index length() const { return inputs.cols(); }
  Eigen::Index n_u() const { return inputs.rows(); }
  Eigen::Index n_y() const { return outputs.rows(); }

  /// Outputs stacked sample by sample: (y_1; y_2; ...; y_T).
  Eigen::VectorXd stacked_outputs() const;
  /// Inputs stacked sample by sample: (u_1; u_2; ...; u_T).
  Eigen::VectorXd stacked_inputs() const;
};

/// Validates channel counts and grid spacing and assembles a Trajectory.
/// Throws DimensionMismatch if inputs and outputs disagree on T, if T < 1,
/// or if sample_time <= 0.
Trajectory make_trajectory(const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& outputs, double sample_time,
                           double t0 = 0.0);

/// Returns a copy of `traj` with the output record replaced by
/// `stacked_outputs` (same stacking as Trajectory::stacked_outputs).
Trajectory with_outputs(const Trajectory& traj,
                        const Eigen::VectorXd& stacked_outputs);

/// Reads a trajectory from CSV with header `t,u1,...,u{n_u},y1,...,y{n_y}`.
/// Throws MalformedData on parse errors and DimensionMismatch if the time
/// column is not a uniform, strictly increasing grid.
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Writes the CSV format accepted by read_trajectory_csv. Numeric fields are
/// printed with 17 significant digits so a read/write round trip is exact.
void write_trajectory_csv(const Trajectory& traj,
                          const std::filesystem::path& path);

}  // namespace pbf
