#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pbf/control.hpp"
#include "pbf/errors.hpp"
#include "pbf/predictor.hpp"
#include "pbf/rules.hpp"
#include "pbf/sim.hpp"

namespace {

pbf::PredictorConfig config(Eigen::Index t_init, Eigen::Index n_h) {
  pbf::PredictorConfig cfg;
  cfg.t_init = t_init;
  cfg.n_h = n_h;
  return cfg;
}

pbf::PredictionRequest init_windows() {
  pbf::PredictionRequest init;
  init.y_init = testfix::to_vec({0.3, 0.7});
  init.u_init = testfix::to_vec({1.0, 2.0});
  return init;
}

pbf::BidSpec bid_fixture() {
  pbf::BidSpec spec;
  spec.agc.resize(3, 2);
  spec.agc << 1.0, -0.5, -1.0, 1.0, 0.5, -1.0;
  spec.y_min = 0.2;
  spec.y_max = 3.0;
  spec.u_max = 6.0;
  spec.y_init = testfix::to_vec({0.5, 0.6});
  spec.u_init = testfix::to_vec({1.0, 1.0});
  return spec;
}

}  // namespace

TEST_CASE("tracking plan matches the frozen reference solution") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  pbf::MpcSpec spec;
  spec.reference = Eigen::VectorXd::Constant(3, 2.0);
  spec.u_max = 6.0;
  const pbf::MpcPlan plan =
      pbf::mpc_open_loop(h, config(2, 3), spec, init_windows());

  const Eigen::VectorXd u_ref = testfix::to_vec(
      {1.4727737627715329, 0.80000084016821438, 6.0});
  const Eigen::VectorXd y_ref = testfix::to_vec(
      {1.5795164491371698, 2.0000000406955043, 2.0000004526405197});
  CHECK(plan.cost == doctest::Approx(0.17680641654642085).epsilon(1e-9));
  CHECK(testfix::max_abs_diff(plan.y_pred, y_ref) < 1e-7);
  CHECK(testfix::max_abs_diff(plan.u_pred, u_ref) < 1e-5);
  CHECK(plan.kkt_residual <= 1e-8);
  CHECK(!plan.rule_checked);
}

TEST_CASE("no feasible input beats the returned plan") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  pbf::MpcSpec spec;
  spec.reference = testfix::to_vec({1.0, 2.5, 1.5});
  const pbf::PredictionRequest init = init_windows();
  const pbf::MpcPlan plan = pbf::mpc_open_loop(h, cfg, spec, init);

  CHECK(plan.u_pred.minCoeff() >= -1e-12);
  CHECK(plan.u_pred.maxCoeff() <= 6.0 + 1e-12);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 6.0);
  pbf::PredictionRequest probe = init;
  for (int trial = 0; trial < 25; ++trial) {
    probe.u_pred = Eigen::VectorXd::NullaryExpr(
        3, [&](Eigen::Index) { return unit(rng); });
    const pbf::PredictionResult res = pbf::predict(h, cfg, probe);
    const double cost = (res.y_pred - spec.reference).squaredNorm();
    CHECK(plan.cost <= cost + 1e-9);
  }
  // The plan's prediction agrees with the predictor run at the plan inputs.
  probe.u_pred = plan.u_pred;
  const pbf::PredictionResult at_plan = pbf::predict(h, cfg, probe);
  CHECK(testfix::max_abs_diff(at_plan.y_pred, plan.y_pred) < 1e-9);
}

TEST_CASE("plan reports the distance to a rule when given one") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  pbf::MpcSpec spec;
  spec.reference = Eigen::VectorXd::Constant(3, 2.0);
  const pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0);
  const pbf::MpcPlan plan =
      pbf::mpc_open_loop(h, config(2, 3), spec, init_windows(), &rule);
  CHECK(plan.rule_checked);
  CHECK(plan.rule_violation ==
        doctest::Approx(-plan.y_pred.minCoeff()).epsilon(1e-12));
}

TEST_CASE("chained horizons track a longer reference") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 3, 3);
  const pbf::PredictorConfig cfg = config(3, 3);
  pbf::MpcSpec spec;
  spec.reference = Eigen::VectorXd::Constant(6, 1.5);
  spec.segments = 2;
  pbf::PredictionRequest init;
  init.y_init = testfix::to_vec({0.2, 0.5, 0.9});
  init.u_init = testfix::to_vec({1.0, 0.0, 2.0});
  const pbf::MpcPlan plan = pbf::mpc_open_loop(h, cfg, spec, init);
  REQUIRE(plan.u_pred.size() == 6);
  REQUIRE(plan.y_pred.size() == 6);
  CHECK(plan.cost ==
        doctest::Approx((plan.y_pred - spec.reference).squaredNorm()));
  pbf::PredictionRequest at_plan = init;
  at_plan.u_pred = plan.u_pred;
  const pbf::PredictionResult res = pbf::predict_split(h, cfg, at_plan);
  CHECK(testfix::max_abs_diff(res.y_pred, plan.y_pred) < 1e-9);
}

TEST_CASE("receding horizon settles on the reference") {
  const pbf::LtiSystem plant = pbf::first_order_system(0.8, 0.5);
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  pbf::MpcSpec spec;
  spec.reference = Eigen::VectorXd::Constant(3, 2.0);
  const pbf::ClosedLoopResult loop = pbf::mpc_closed_loop(
      plant, Eigen::VectorXd::Zero(1), 25, h, config(2, 3), spec);
  REQUIRE(loop.trajectory.length() == 25);
  REQUIRE(loop.stage_costs.size() == 25);
  CHECK(loop.trajectory.inputs.minCoeff() >= -1e-12);
  CHECK(loop.trajectory.inputs.maxCoeff() <= 6.0 + 1e-12);
  CHECK(std::abs(loop.trajectory.outputs(0, 24) - 2.0) < 1e-2);
  CHECK(loop.stage_costs(24) < loop.stage_costs(2));
}

TEST_CASE("controller rejects malformed setups") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  pbf::MpcSpec spec;
  spec.reference = Eigen::VectorXd::Constant(3, 2.0);

  pbf::MpcSpec bad = spec;
  bad.reference = Eigen::VectorXd::Constant(4, 2.0);
  CHECK_THROWS_AS(pbf::mpc_open_loop(h, cfg, bad, init_windows()),
                  pbf::DimensionMismatch);
  bad = spec;
  bad.u_max = 0.0;
  CHECK_THROWS_AS(pbf::mpc_open_loop(h, cfg, bad, init_windows()),
                  pbf::DimensionMismatch);
  bad = spec;
  bad.reference(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pbf::mpc_open_loop(h, cfg, bad, init_windows()),
                  pbf::DimensionMismatch);
  pbf::PredictionRequest short_init;
  short_init.y_init = testfix::to_vec({0.3});
  short_init.u_init = testfix::to_vec({1.0, 2.0});
  CHECK_THROWS_AS(pbf::mpc_open_loop(h, cfg, spec, short_init),
                  pbf::DimensionMismatch);

  const pbf::LtiSystem plant = pbf::first_order_system(0.8, 0.5);
  CHECK_THROWS_AS(pbf::mpc_closed_loop(plant, Eigen::VectorXd::Zero(2), 5, h,
                                       cfg, spec),
                  pbf::DimensionMismatch);
  CHECK_THROWS_AS(pbf::mpc_closed_loop(plant, Eigen::VectorXd::Zero(1), 0, h,
                                       cfg, spec),
                  pbf::DimensionMismatch);
  const pbf::LtiSystem wide = pbf::random_controllable_system(2, 2, 1, 7);
  CHECK_THROWS_AS(pbf::mpc_closed_loop(wide, Eigen::VectorXd::Zero(2), 5, h,
                                       cfg, spec),
                  pbf::DimensionMismatch);
}

TEST_CASE("front-loaded saturation shapes are recognized") {
  CHECK(pbf::has_turnpike_shape(testfix::to_vec({6, 6, 3, 2, 1}), 1, 6.0));
  CHECK(pbf::has_turnpike_shape(testfix::to_vec({6, 3, 6, 2, 1}), 1, 6.0));
  CHECK(!pbf::has_turnpike_shape(testfix::to_vec({6, 3, 2, 6}), 1, 6.0));
  CHECK(!pbf::has_turnpike_shape(testfix::to_vec({3, 6, 6}), 1, 6.0));
  CHECK(pbf::has_turnpike_shape(testfix::to_vec({1, 2, 3}), 1, 6.0));
  CHECK(pbf::has_turnpike_shape(testfix::to_vec({6, 6, 6}), 1, 6.0));
  CHECK(pbf::has_turnpike_shape(Eigen::VectorXd(), 1, 6.0));
  // A step counts as saturated only when every channel sits at the limit:
  // the half-saturated first step below is interior, so the late saturated
  // step breaks the shape.
  CHECK(pbf::has_turnpike_shape(testfix::to_vec({6, 6, 6, 1, 2, 2}), 2, 6.0));
  CHECK(!pbf::has_turnpike_shape(
      testfix::to_vec({6, 1, 6, 6, 2, 2, 6, 6}), 2, 6.0));
  CHECK_THROWS_AS(pbf::has_turnpike_shape(testfix::to_vec({6, 6, 3}), 2, 6.0),
                  pbf::DimensionMismatch);
}

TEST_CASE("bid margin matches the frozen reference solution") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  const pbf::BidSpec spec = bid_fixture();
  const pbf::BidResult bid = pbf::solve_bid(h, cfg, spec);

  CHECK(bid.status == pbf::BidStatus::Feasible);
  CHECK(bid.gamma == doctest::Approx(1.8992830454563496).epsilon(1e-8));
  CHECK(bid.violation_total == 0.0);
  REQUIRE(bid.baseline.size() == 1);
  REQUIRE(bid.scenario_outputs.size() == 2);

  // The returned point actually survives both scenarios: inputs stay in the
  // box and an independent predictor run lands inside the comfort band.
  pbf::PredictionRequest req;
  req.y_init = spec.y_init;
  req.u_init = spec.u_init;
  for (Eigen::Index i = 0; i < 2; ++i) {
    const Eigen::VectorXd u_i =
        Eigen::VectorXd::Constant(3, bid.baseline(0)) +
        bid.gamma * spec.agc.col(i);
    CHECK(u_i.minCoeff() >= -1e-7);
    CHECK(u_i.maxCoeff() <= spec.u_max + 1e-7);
    req.u_pred = u_i;
    const pbf::PredictionResult res = pbf::predict(h, cfg, req);
    CHECK(testfix::max_abs_diff(res.y_pred,
                                bid.scenario_outputs[std::size_t(i)]) < 1e-8);
    CHECK(res.y_pred.minCoeff() >= spec.y_min - 1e-7);
    CHECK(res.y_pred.maxCoeff() <= spec.y_max + 1e-7);
  }
}

TEST_CASE("wider comfort bands never shrink the margin") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  pbf::BidSpec spec = bid_fixture();
  const double bands[3][2] = {{0.6, 2.0}, {0.4, 2.5}, {0.2, 3.0}};
  double last = -1.0;
  for (const auto& band : bands) {
    spec.y_min = band[0];
    spec.y_max = band[1];
    const pbf::BidResult bid = pbf::solve_bid(h, cfg, spec);
    REQUIRE(bid.status == pbf::BidStatus::Feasible);
    CHECK(bid.gamma >= last - 1e-9);
    last = bid.gamma;
  }
}

TEST_CASE("an unholdable band falls back to minimal comfort slack") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  pbf::BidSpec spec = bid_fixture();
  spec.y_min = 1.20;
  spec.y_max = 1.25;
  const pbf::BidResult bid = pbf::solve_bid(h, config(2, 3), spec);
  CHECK(bid.status == pbf::BidStatus::SoftRelaxed);
  CHECK(bid.gamma <= 1e-6);
  CHECK(bid.violation_total > 0.0);
}

TEST_CASE("a regulation signal that never binds leaves the margin unbounded") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  pbf::BidSpec spec = bid_fixture();
  spec.agc = Eigen::MatrixXd::Zero(3, 1);
  const pbf::BidResult bid = pbf::solve_bid(h, config(2, 3), spec);
  CHECK(bid.status == pbf::BidStatus::Unbounded);
  CHECK(std::isinf(bid.gamma));
}

TEST_CASE("per-step baselines only add freedom") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  pbf::BidSpec spec = bid_fixture();
  const pbf::BidResult scalar = pbf::solve_bid(h, cfg, spec);
  spec.per_step_baseline = true;
  const pbf::BidResult stepped = pbf::solve_bid(h, cfg, spec);
  REQUIRE(stepped.status == pbf::BidStatus::Feasible);
  REQUIRE(stepped.baseline.size() == 3);
  CHECK(stepped.gamma >= scalar.gamma - 1e-9);
  CHECK(stepped.baseline.minCoeff() >= -1e-9);
  CHECK(stepped.baseline.maxCoeff() <= spec.u_max + 1e-9);
}

TEST_CASE("bids reject malformed setups") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  pbf::BidSpec bad = bid_fixture();
  bad.agc = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(pbf::solve_bid(h, cfg, bad), pbf::DimensionMismatch);
  bad = bid_fixture();
  bad.agc.resize(3, 0);
  CHECK_THROWS_AS(pbf::solve_bid(h, cfg, bad), pbf::DimensionMismatch);
  bad = bid_fixture();
  bad.y_min = 3.0;
  bad.y_max = 0.2;
  CHECK_THROWS_AS(pbf::solve_bid(h, cfg, bad), pbf::DimensionMismatch);
  bad = bid_fixture();
  bad.y_init = testfix::to_vec({0.5});
  CHECK_THROWS_AS(pbf::solve_bid(h, cfg, bad), pbf::DimensionMismatch);
  bad = bid_fixture();
  bad.soft_penalty = 0.0;
  CHECK_THROWS_AS(pbf::solve_bid(h, cfg, bad), pbf::DimensionMismatch);
}
