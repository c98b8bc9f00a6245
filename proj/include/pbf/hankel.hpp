#pragma once

#include <Eigen/Core>

#include "pbf/errors.hpp"
#include "pbf/trajectory.hpp"

namespace pbf {

/// Builds the block-Hankel matrix of a vector sequence.
///
/// `sequence` holds one sample per column (n_s x T). Column j of the result
/// stacks the window (s_j; s_{j+1}; ...; s_{j+depth-1}), so the result is
/// (depth * n_s) x (T - depth + 1). Accepts any Eigen expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
build_hankel(const Eigen::MatrixBase<Derived>& sequence, Eigen::Index depth) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n_s = sequence.rows();
  const Eigen::Index t = sequence.cols();
  if (depth < 1) {
    throw DimensionMismatch("build_hankel: depth must be at least 1");
  }
  if (t < depth) {
    throw SequenceTooShort("build_hankel: sequence has " + std::to_string(t) +
                           " samples, need at least " + std::to_string(depth));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> h(depth * n_s,
                                                          t - depth + 1);
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    for (Eigen::Index i = 0; i < depth; ++i) {
      h.block(i * n_s, j, n_s, 1) = sequence.col(i + j);
    }
  }
  return h;
}

/// Row-partitioned Hankel matrices of one recorded trajectory.
///
/// The depth-L window (L = t_init + n_h) is split into an initialization part
/// (first t_init block rows) and a prediction part (last n_h block rows), for
/// inputs and outputs separately. All four blocks share the same column set,
/// one column per length-L window of the source record.
struct HankelSystem {
  Eigen::Index t_init = 0;  ///< initialization window length
  Eigen::Index n_h = 0;     ///< prediction window length

  Eigen::MatrixXd u_init_block;  ///< (t_init*n_u) x n_cols
  Eigen::MatrixXd u_pred_block;  ///< (n_h*n_u)    x n_cols
  Eigen::MatrixXd y_init_block;  ///< (t_init*n_y) x n_cols
  Eigen::MatrixXd y_pred_block;  ///< (n_h*n_y)    x n_cols

  Trajectory source;  ///< the record the blocks were built from

  Eigen::Index depth() const { return t_init + n_h; }
  Eigen::Index n_u() const { return source.n_u(); }
  Eigen::Index n_y() const { return source.n_y(); }
  Eigen::Index n_cols() const { return u_init_block.cols(); }

  /// The stacked input matrix (u_init_block; u_pred_block).
  Eigen::MatrixXd input_block() const;
};

/// Builds the four Hankel blocks from a record. Requires t_init >= 1,
/// n_h >= 1, and length >= t_init + n_h (throws SequenceTooShort otherwise).
HankelSystem build_hankel_system(const Trajectory& traj, Eigen::Index t_init,
                                 Eigen::Index n_h);

/// Rebuilds the output blocks of `system` from a replacement output record
/// (stacked as in Trajectory::stacked_outputs). Input blocks are reused.
HankelSystem rebuild_with_outputs(const HankelSystem& system,
                                  const Eigen::VectorXd& stacked_outputs);

/// Result of the input-richness test used to gate identification quality.
struct ExcitationReport {
  bool satisfied = false;   ///< rank == required
  Eigen::Index rank = 0;    ///< numerical rank of the depth-`order` Hankel
  Eigen::Index required = 0;  ///< order * n_u (full row rank)
};

/// Checks that the depth-`order` Hankel matrix of `inputs` (n_u x T, one
/// sample per column) has full row rank. Singular values below
/// rank_tol * sigma_max are treated as zero.
ExcitationReport check_persistent_excitation(const Eigen::MatrixXd& inputs,
                                             Eigen::Index order,
                                             double rank_tol = 1e-9);

}  // namespace pbf
