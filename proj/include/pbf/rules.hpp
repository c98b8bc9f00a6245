#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "pbf/errors.hpp"
#include "pbf/hankel.hpp"

namespace pbf {

/// Polyhedron {x : H x <= h}, optionally carrying explicit box bounds.
/// Sampling and the robust reformulation need the box; the inequality rows
/// alone describe unbounded sets such as a half-space.
struct Polyhedron {
  Eigen::MatrixXd H;  ///< may have zero rows (box-only set)
  Eigen::VectorXd h;
  Eigen::VectorXd lo, hi;  ///< empty when no box is attached

  Eigen::Index dim() const { return H.cols(); }
  bool has_box() const { return lo.size() == dim() && hi.size() == dim(); }
};

/// Box {lo <= x <= hi} with no extra rows.
Polyhedron box_set(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

/// Singleton {point}, encoded as the paired inequalities x <= point and
/// -x <= -point, with a degenerate box attached.
Polyhedron point_set(const Eigen::VectorXd& point);

/// Half-space set {x >= 0} (no box).
Polyhedron nonneg_set(Eigen::Index dim);

/// Half-space {sum_i x_i >= 0} (no box).
Polyhedron sum_nonneg_set(Eigen::Index dim);

/// Appends the box bounds of `set` as explicit inequality rows, which the
/// exact reformulation needs; the rows of `set` come first.
Polyhedron as_rows(const Polyhedron& set);

bool membership(const Polyhedron& set, const Eigen::VectorXd& x,
                double tol = 1e-8);

/// Uniform box samples rejected against the inequality rows, one sample per
/// column. Throws DimensionMismatch without a box and SamplingStarved when
/// the acceptance rate is too low.
Eigen::MatrixXd sample(const Polyhedron& set, Eigen::Index count,
                       std::uint64_t seed);

/// Affine restrictions every prediction must respect, whatever inputs in
/// u_pred and initialization windows in (y_init, u_init) drive it.
struct PhysicalRule {
  Polyhedron y_pred;  ///< over the stacked predicted outputs
  Polyhedron y_init;  ///< admissible initialization outputs
  Polyhedron u_pred;  ///< admissible planned inputs
  Polyhedron u_init;  ///< admissible initialization inputs
};

/// Nonnegative predicted outputs under nonnegative heating power from the
/// reference initial state: y_pred >= 0 for all u_pred in [0, u_max] and
/// y_init = 0, u_init = 0.
PhysicalRule temperature_consistency(const HankelSystem& h, double u_max,
                                     Eigen::Index segments = 1);

/// Nonnegative total predicted output over the horizon, same quantifiers.
/// Weaker than temperature_consistency: it constrains only the sum.
PhysicalRule bidding_consistency(const HankelSystem& h, double u_max,
                                 Eigen::Index segments = 1);

/// Throws DimensionMismatch unless the four sets match the system's window
/// sizes for the given segment count.
void validate_rule(const PhysicalRule& rule, const HankelSystem& h,
                   Eigen::Index segments);

}  // namespace pbf
