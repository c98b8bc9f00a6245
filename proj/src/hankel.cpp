#include "pbf/hankel.hpp"

#include <Eigen/SVD>

namespace pbf {

Eigen::MatrixXd HankelSystem::input_block() const {
  Eigen::MatrixXd stacked(u_init_block.rows() + u_pred_block.rows(), n_cols());
  stacked << u_init_block, u_pred_block;
  return stacked;
}

HankelSystem build_hankel_system(const Trajectory& traj, Eigen::Index t_init,
                                 Eigen::Index n_h) {
  if (t_init < 1 || n_h < 1) {
    throw DimensionMismatch(
        "build_hankel_system: t_init and n_h must be at least 1");
  }
  const Eigen::Index depth = t_init + n_h;
  if (traj.length() < depth) {
    throw SequenceTooShort("build_hankel_system: record of length " +
                           std::to_string(traj.length()) +
                           " is shorter than window depth " +
                           std::to_string(depth));
  }
  HankelSystem sys;
  sys.t_init = t_init;
  sys.n_h = n_h;
  sys.source = traj;
  const Eigen::MatrixXd hu = build_hankel(traj.inputs, depth);
  const Eigen::MatrixXd hy = build_hankel(traj.outputs, depth);
  const Eigen::Index n_u = traj.n_u();
  const Eigen::Index n_y = traj.n_y();
  sys.u_init_block = hu.topRows(t_init * n_u);
  sys.u_pred_block = hu.bottomRows(n_h * n_u);
  sys.y_init_block = hy.topRows(t_init * n_y);
  sys.y_pred_block = hy.bottomRows(n_h * n_y);
  return sys;
}

HankelSystem rebuild_with_outputs(const HankelSystem& system,
                                  const Eigen::VectorXd& stacked_outputs) {
  HankelSystem out = system;
  out.source = with_outputs(system.source, stacked_outputs);
  const Eigen::MatrixXd hy = build_hankel(out.source.outputs, system.depth());
  out.y_init_block = hy.topRows(system.t_init * system.n_y());
  out.y_pred_block = hy.bottomRows(system.n_h * system.n_y());
  return out;
}

ExcitationReport check_persistent_excitation(const Eigen::MatrixXd& inputs,
                                             Eigen::Index order,
                                             double rank_tol) {
  if (order < 1) {
    throw DimensionMismatch("check_persistent_excitation: order must be >= 1");
  }
  const Eigen::MatrixXd h = build_hankel(inputs, order);
  ExcitationReport report;
  report.required = order * inputs.rows();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const Eigen::VectorXd sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rank_tol * sv(0) : 0.0;
  report.rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) ++report.rank;
  }
  report.satisfied = (report.rank == report.required);
  return report;
}

}  // namespace pbf
