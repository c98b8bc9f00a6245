#include "pbf/rules.hpp"

#include <random>

namespace pbf {

Polyhedron box_set(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size() || lo.size() < 1) {
    throw DimensionMismatch("box_set: bounds disagree");
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo(i) > hi(i)) throw DimensionMismatch("box_set: lo exceeds hi");
  }
  Polyhedron set;
  set.H = Eigen::MatrixXd::Zero(0, lo.size());
  set.h = Eigen::VectorXd::Zero(0);
  set.lo = lo;
  set.hi = hi;
  return set;
}

Polyhedron point_set(const Eigen::VectorXd& point) {
  if (point.size() < 1) {
    throw DimensionMismatch("point_set: empty point");
  }
  const Eigen::Index d = point.size();
  Polyhedron set;
  set.H.resize(2 * d, d);
  set.H << Eigen::MatrixXd::Identity(d, d), -Eigen::MatrixXd::Identity(d, d);
  set.h.resize(2 * d);
  set.h << point, -point;
  set.lo = point;
  set.hi = point;
  return set;
}

Polyhedron nonneg_set(Eigen::Index dim) {
  if (dim < 1) throw DimensionMismatch("nonneg_set: dim must be >= 1");
  Polyhedron set;
  set.H = -Eigen::MatrixXd::Identity(dim, dim);
  set.h = Eigen::VectorXd::Zero(dim);
  return set;
}

Polyhedron sum_nonneg_set(Eigen::Index dim) {
  if (dim < 1) throw DimensionMismatch("sum_nonneg_set: dim must be >= 1");
  Polyhedron set;
  set.H = -Eigen::MatrixXd::Ones(1, dim);
  set.h = Eigen::VectorXd::Zero(1);
  return set;
}

Polyhedron as_rows(const Polyhedron& set) {
  if (!set.has_box()) return set;
  const Eigen::Index d = set.dim();
  Polyhedron out;
  out.H.resize(set.H.rows() + 2 * d, d);
  out.h.resize(set.h.size() + 2 * d);
  out.H << set.H, Eigen::MatrixXd::Identity(d, d),
      -Eigen::MatrixXd::Identity(d, d);
  out.h << set.h, set.hi, -set.lo;
  return out;
}

bool membership(const Polyhedron& set, const Eigen::VectorXd& x, double tol) {
  if (x.size() != set.dim()) {
    throw DimensionMismatch("membership: point has wrong dimension");
  }
  if (set.H.rows() > 0 && ((set.H * x - set.h).array() > tol).any()) {
    return false;
  }
  if (set.has_box()) {
    if (((x - set.hi).array() > tol).any() ||
        ((set.lo - x).array() > tol).any()) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd sample(const Polyhedron& set, Eigen::Index count,
                       std::uint64_t seed) {
  if (!set.has_box()) {
    throw DimensionMismatch("sample: set has no box to draw from");
  }
  if (count < 1) {
    throw DimensionMismatch("sample: count must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index d = set.dim();
  Eigen::MatrixXd points(d, count);
  Eigen::VectorXd candidate(d);
  const Eigen::Index max_tries = 1000 * count;
  Eigen::Index accepted = 0;
  for (Eigen::Index attempt = 0; attempt < max_tries && accepted < count;
       ++attempt) {
    for (Eigen::Index i = 0; i < d; ++i) {
      candidate(i) = set.lo(i) + (set.hi(i) - set.lo(i)) * unit(rng);
    }
    if (set.H.rows() == 0 ||
        ((set.H * candidate - set.h).array() <= 1e-12).all()) {
      points.col(accepted++) = candidate;
    }
  }
  if (accepted < count) {
    throw SamplingStarved("sample: acceptance rate too low inside the box");
  }
  return points;
}

PhysicalRule temperature_consistency(const HankelSystem& h, double u_max,
                                     Eigen::Index segments) {
  if (!(u_max > 0.0)) {
    throw DimensionMismatch("temperature_consistency: u_max must be positive");
  }
  if (segments < 1) {
    throw DimensionMismatch("temperature_consistency: segments must be >= 1");
  }
  PhysicalRule rule;
  rule.y_pred = nonneg_set(segments * h.n_h * h.n_y());
  rule.y_init = point_set(Eigen::VectorXd::Zero(h.t_init * h.n_y()));
  rule.u_init = point_set(Eigen::VectorXd::Zero(h.t_init * h.n_u()));
  const Eigen::Index du = segments * h.n_h * h.n_u();
  rule.u_pred = box_set(Eigen::VectorXd::Zero(du),
                        Eigen::VectorXd::Constant(du, u_max));
  return rule;
}

PhysicalRule bidding_consistency(const HankelSystem& h, double u_max,
                                 Eigen::Index segments) {
  PhysicalRule rule = temperature_consistency(h, u_max, segments);
  rule.y_pred = sum_nonneg_set(segments * h.n_h * h.n_y());
  return rule;
}

void validate_rule(const PhysicalRule& rule, const HankelSystem& h,
                   Eigen::Index segments) {
  if (rule.y_pred.dim() != segments * h.n_h * h.n_y()) {
    throw DimensionMismatch("rule: y_pred set has wrong dimension");
  }
  if (rule.y_init.dim() != h.t_init * h.n_y()) {
    throw DimensionMismatch("rule: y_init set has wrong dimension");
  }
  if (rule.u_pred.dim() != segments * h.n_h * h.n_u()) {
    throw DimensionMismatch("rule: u_pred set has wrong dimension");
  }
  if (rule.u_init.dim() != h.t_init * h.n_u()) {
    throw DimensionMismatch("rule: u_init set has wrong dimension");
  }
  if (rule.y_pred.H.rows() < 1) {
    throw DimensionMismatch("rule: y_pred set needs at least one row");
  }
}

}  // namespace pbf
