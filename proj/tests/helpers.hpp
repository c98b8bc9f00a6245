#pragma once

#include <vector>

#include <Eigen/Core>

#include "pbf/sim.hpp"
#include "pbf/trajectory.hpp"

namespace testfix {

// Fixed first-order record (y = x, x+ = 0.8 x + 0.5 u, x0 = 0) used across
// the suite. The outputs were computed independently of the library with an
// exact floating-point recursion and are frozen here.
inline const std::vector<double> kD1Inputs = {
    1, 0, 2, 1, 3, 0, 1, 2, 0, 1, 2, 3, 1, 0, 2, 1, 3, 2, 1, 0, 2, 2, 0, 1};

inline const std::vector<double> kD1Outputs = {
    0,
    0.5,
    0.40000000000000002,
    1.3200000000000001,
    1.556,
    2.7448000000000001,
    2.19584,
    2.256672,
    2.8053376000000001,
    2.2442700800000002,
    2.2954160640000003,
    2.8363328512000003,
    3.7690662809600002,
    3.5152530247680005,
    2.8122024198144007,
    3.2497619358515206,
    3.0998095486812165,
    3.9798476389449733,
    4.1838781111559786,
    3.8471024889247829,
    3.0776819911398263,
    3.4621455929118614,
    3.7697164743294893,
    3.0157731794635918};

inline Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           Eigen::Index(v.size()));
}

inline pbf::Trajectory d1_trajectory() {
  const Eigen::Index t = Eigen::Index(kD1Inputs.size());
  Eigen::MatrixXd u(1, t), y(1, t);
  for (Eigen::Index k = 0; k < t; ++k) {
    u(0, k) = kD1Inputs[std::size_t(k)];
    y(0, k) = kD1Outputs[std::size_t(k)];
  }
  return pbf::make_trajectory(u, y, 1.0);
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testfix
