#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "pbf/errors.hpp"
#include "pbf/rules.hpp"

using testfix::d1_trajectory;

TEST_CASE("box sets test membership against their bounds") {
  Eigen::VectorXd lo(2), hi(2);
  lo << 0, -1;
  hi << 2, 1;
  const pbf::Polyhedron set = pbf::box_set(lo, hi);
  CHECK(set.has_box());
  CHECK(set.H.rows() == 0);
  Eigen::VectorXd inside(2), outside(2);
  inside << 1, 0;
  outside << 3, 0;
  CHECK(pbf::membership(set, inside));
  CHECK_FALSE(pbf::membership(set, outside));
}

TEST_CASE("point sets admit exactly their point") {
  Eigen::VectorXd p(2);
  p << 0.5, -0.25;
  const pbf::Polyhedron set = pbf::point_set(p);
  CHECK(set.H.rows() == 4);
  CHECK(pbf::membership(set, p));
  Eigen::VectorXd q = p;
  q(0) += 1e-3;
  CHECK_FALSE(pbf::membership(set, q));
  CHECK(set.has_box());
  CHECK((set.lo - p).cwiseAbs().maxCoeff() == 0.0);
  CHECK((set.hi - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("half-space sets accept the right sign patterns") {
  const pbf::Polyhedron nn = pbf::nonneg_set(3);
  Eigen::VectorXd v(3);
  v << 0.1, 0.0, 2.0;
  CHECK(pbf::membership(nn, v));
  v(1) = -0.1;
  CHECK_FALSE(pbf::membership(nn, v));

  const pbf::Polyhedron sum = pbf::sum_nonneg_set(3);
  v << -1.0, 0.4, 0.7;  // sums to 0.1
  CHECK(pbf::membership(sum, v));
  v << -1.0, 0.4, 0.5;  // sums to -0.1
  CHECK_FALSE(pbf::membership(sum, v));
}

TEST_CASE("as_rows appends the box after the existing rows") {
  Eigen::VectorXd lo(2), hi(2);
  lo << 0, 0;
  hi << 1, 2;
  pbf::Polyhedron set = pbf::box_set(lo, hi);
  set.H = Eigen::MatrixXd::Ones(1, 2);
  set.h = Eigen::VectorXd::Constant(1, 1.5);
  const pbf::Polyhedron rows = pbf::as_rows(set);
  REQUIRE(rows.H.rows() == 5);  // 1 original + 2 upper + 2 lower
  CHECK(rows.H(0, 0) == 1.0);
  CHECK(rows.h(0) == 1.5);
  // Any point passing the rows passes the original membership test too.
  Eigen::VectorXd v(2);
  v << 0.5, 0.9;
  CHECK(((rows.H * v - rows.h).maxCoeff() <= 0) == pbf::membership(set, v));
  v << 0.5, 2.5;
  CHECK(((rows.H * v - rows.h).maxCoeff() <= 0) == pbf::membership(set, v));
}

TEST_CASE("samples land inside the set and are reproducible") {
  Eigen::VectorXd lo(3), hi(3);
  lo << 0, 0, 0;
  hi << 1, 1, 1;
  pbf::Polyhedron set = pbf::box_set(lo, hi);
  set.H = Eigen::MatrixXd::Ones(1, 3);
  set.h = Eigen::VectorXd::Constant(1, 1.5);
  const Eigen::MatrixXd a = pbf::sample(set, 40, 7);
  const Eigen::MatrixXd b = pbf::sample(set, 40, 7);
  REQUIRE(a.cols() == 40);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    CHECK(pbf::membership(set, a.col(j)));
  }
  CHECK_THROWS_AS(pbf::sample(pbf::nonneg_set(2), 5, 1),
                  pbf::DimensionMismatch);
}

TEST_CASE("sampling gives up on starved sets") {
  Eigen::VectorXd lo(2), hi(2);
  lo << 0, 0;
  hi << 1, 1;
  pbf::Polyhedron set = pbf::box_set(lo, hi);
  set.H = Eigen::MatrixXd::Ones(1, 2);
  set.h = Eigen::VectorXd::Constant(1, -0.5);  // empty inside the box
  CHECK_THROWS_AS(pbf::sample(set, 10, 3), pbf::SamplingStarved);
}

TEST_CASE("nonnegative-output rule pins the quantifier sets") {
  const pbf::HankelSystem h = pbf::build_hankel_system(d1_trajectory(), 2, 3);
  const pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0);
  pbf::validate_rule(rule, h, 1);
  // Predicted outputs must be nonnegative...
  CHECK(rule.y_pred.H.rows() == 3);
  Eigen::VectorXd y(3);
  y << 0.5, 0.0, 1.0;
  CHECK(pbf::membership(rule.y_pred, y));
  y(1) = -0.2;
  CHECK_FALSE(pbf::membership(rule.y_pred, y));
  // ...for all planned inputs in the box...
  CHECK(rule.u_pred.has_box());
  CHECK(rule.u_pred.lo.minCoeff() == 0.0);
  CHECK(rule.u_pred.hi.maxCoeff() == 6.0);
  // ...from the zero-reference initialization windows.
  CHECK(pbf::membership(rule.y_init, Eigen::VectorXd::Zero(2)));
  CHECK_FALSE(pbf::membership(rule.y_init, Eigen::VectorXd::Ones(2)));
  CHECK(pbf::membership(rule.u_init, Eigen::VectorXd::Zero(2)));
}

TEST_CASE("sum rule is weaker than the per-step rule") {
  const pbf::HankelSystem h = pbf::build_hankel_system(d1_trajectory(), 2, 3);
  const pbf::PhysicalRule per_step = pbf::temperature_consistency(h, 6.0);
  const pbf::PhysicalRule summed = pbf::bidding_consistency(h, 6.0);
  pbf::validate_rule(summed, h, 1);
  CHECK(summed.y_pred.H.rows() == 1);
  Eigen::VectorXd y(3);
  y << -0.5, 1.0, 0.2;  // negative step but positive total
  CHECK(pbf::membership(summed.y_pred, y));
  CHECK_FALSE(pbf::membership(per_step.y_pred, y));
}

TEST_CASE("rules scale with the segment count") {
  const pbf::HankelSystem h = pbf::build_hankel_system(d1_trajectory(), 3, 3);
  const pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0, 2);
  pbf::validate_rule(rule, h, 2);
  CHECK(rule.y_pred.H.rows() == 6);
  CHECK(rule.u_pred.dim() == 6);
  // Mismatched segment counts are refused.
  CHECK_THROWS_AS(pbf::validate_rule(rule, h, 1), pbf::DimensionMismatch);
}

TEST_CASE("rule validation demands at least one prediction row") {
  const pbf::HankelSystem h = pbf::build_hankel_system(d1_trajectory(), 2, 3);
  pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0);
  rule.y_pred.H.resize(0, 3);
  rule.y_pred.h.resize(0);
  CHECK_THROWS_AS(pbf::validate_rule(rule, h, 1), pbf::DimensionMismatch);
}
