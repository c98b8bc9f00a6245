#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "pbf/errors.hpp"
#include "pbf/filter.hpp"
#include "pbf/predictor.hpp"
#include "pbf/sim.hpp"
#include "pbf/solvers/bilinear.hpp"

namespace {

pbf::PredictorConfig config(Eigen::Index t_init, Eigen::Index n_h) {
  pbf::PredictorConfig cfg;
  cfg.t_init = t_init;
  cfg.n_h = n_h;
  return cfg;
}

/// Noisy first-order record whose raw data provably breaks the
/// nonnegative-output rule.
pbf::Trajectory noisy_fixture(Eigen::Index length, double noise_std,
                              std::uint64_t seed) {
  const pbf::LtiSystem sys = pbf::first_order_system(0.8, 0.5);
  pbf::NoiseSpec noise;
  noise.kind = pbf::NoiseSpec::Kind::Gaussian;
  noise.std_dev = noise_std;
  return pbf::generate_dataset(sys, length, pbf::Excitation::Prbs, noise, 8,
                               6.0, 1.0, seed);
}

pbf::FilterProblem fixture_problem(const pbf::Trajectory& traj,
                                   Eigen::Index t_init, Eigen::Index n_h) {
  pbf::FilterProblem p;
  p.system = pbf::build_hankel_system(traj, t_init, n_h);
  p.config = config(t_init, n_h);
  p.rule = pbf::temperature_consistency(p.system, 6.0);
  return p;
}

/// Worst rule-row violation over every vertex of the planned-input box with
/// zero initialization windows, by brute force.
double vertex_enumeration_worst(const pbf::HankelSystem& h,
                                const pbf::PredictorConfig& cfg,
                                const pbf::PhysicalRule& rule) {
  const Eigen::Index d = rule.u_pred.dim();
  REQUIRE(d <= 12);
  double worst = -1e100;
  pbf::PredictionRequest req;
  req.y_init = Eigen::VectorXd::Zero(h.t_init * h.n_y());
  req.u_init = Eigen::VectorXd::Zero(h.t_init * h.n_u());
  for (long mask = 0; mask < (1L << d); ++mask) {
    Eigen::VectorXd u(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      u(j) = (mask >> j) & 1 ? rule.u_pred.hi(j) : rule.u_pred.lo(j);
    }
    req.u_pred = u;
    const pbf::PredictionResult res = pbf::predict(h, cfg, req);
    worst = std::max(
        worst, (rule.y_pred.H * res.y_pred - rule.y_pred.h).maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("lifted single-level system reproduces the predictor") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const pbf::Trajectory traj = testfix::d1_trajectory();
  for (Eigen::Index segments : {Eigen::Index(1), Eigen::Index(2)}) {
    pbf::FilterProblem p;
    p.system = pbf::build_hankel_system(traj, 3, 3);
    p.config = config(3, 3);
    p.segments = segments;
    p.rule = pbf::temperature_consistency(p.system, 6.0, segments);
    const pbf::SingleLevelSystem sys = pbf::assemble_single_level(p);

    pbf::PredictionRequest req;
    req.y_init.resize(3);
    req.u_init.resize(3);
    req.u_pred.resize(3 * segments);
    for (Eigen::Index i = 0; i < 3; ++i) req.y_init(i) = gauss(rng);
    for (Eigen::Index i = 0; i < 3; ++i) req.u_init(i) = gauss(rng);
    for (Eigen::Index i = 0; i < req.u_pred.size(); ++i) {
      req.u_pred(i) = gauss(rng);
    }
    const pbf::PredictionResult res =
        pbf::predict_split(p.system, p.config, req);

    // Assemble the lifted unknown exactly as the reformulation lays it out.
    const Eigen::Index s = sys.n_z() / segments;
    const Eigen::Index n_si = 3, n_g = p.system.n_cols();
    const Eigen::Index n_kap = s - n_si - n_g;
    Eigen::VectorXd z(sys.n_z());
    for (Eigen::Index seg = 0; seg < segments; ++seg) {
      z.segment(seg * s, n_si) = res.sigma.segment(seg * n_si, n_si);
      z.segment(seg * s + n_si, n_g) = res.g.segment(seg * n_g, n_g);
      z.segment(seg * s + n_si + n_g, n_kap) =
          res.kappa.segment(seg * n_kap, n_kap);
    }
    Eigen::VectorXd param(sys.n_p());
    param << req.y_init, req.u_init, req.u_pred;

    const Eigen::VectorXd ytilde = traj.stacked_outputs();
    CHECK(sys.residual(ytilde, z, param).cwiseAbs().maxCoeff() < 1e-9);
    const Eigen::VectorXd rule_vals = sys.rule_values(ytilde, z);
    const Eigen::VectorXd direct =
        p.rule.y_pred.H * res.y_pred - p.rule.y_pred.h;
    CHECK(testfix::max_abs_diff(rule_vals, direct) < 1e-9);
  }
}

TEST_CASE("certified worst case equals vertex enumeration") {
  const pbf::Trajectory traj = noisy_fixture(40, 0.08, 5);
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 2, 3);
  const pbf::PredictorConfig cfg = config(2, 3);
  const pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0);
  const pbf::ConsistencyReport report =
      pbf::verify_consistency(h, cfg, rule, 1, 0, 0);
  const double brute = vertex_enumeration_worst(h, cfg, rule);
  CHECK(report.certified_max_violation ==
        doctest::Approx(brute).epsilon(1e-6));
}

TEST_CASE("sampled violations never exceed the certified bound") {
  const pbf::Trajectory traj = noisy_fixture(50, 0.05, 9);
  const pbf::HankelSystem h = pbf::build_hankel_system(traj, 3, 3);
  const pbf::PhysicalRule rule = pbf::temperature_consistency(h, 6.0);
  const pbf::ConsistencyReport report =
      pbf::verify_consistency(h, config(3, 3), rule, 1, 150, 4);
  CHECK(report.n_samples == 150);
  CHECK(report.worst_sampled_violation <=
        report.certified_max_violation + 1e-9);
  CHECK(report.certified_row_violations.size() == 3);
  CHECK(report.certified_row_violations.maxCoeff() ==
        doctest::Approx(report.certified_max_violation));
}

TEST_CASE("filter repairs a provably violating record") {
  const pbf::Trajectory traj = noisy_fixture(40, 0.1, 2);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);

  const pbf::ConsistencyReport before = pbf::verify_consistency(
      p.system, p.config, p.rule, 1, 0, 0);
  REQUIRE(before.certified_max_violation > 1e-4);

  pbf::SolverOptions opts;
  opts.verify_samples = 50;
  const pbf::FilterResult res = pbf::solve_filter(p, opts);
  CHECK(res.status != pbf::FilterStatus::IterationLimit);
  CHECK(res.status != pbf::FilterStatus::Infeasible);
  CHECK(res.final_residual <= opts.tol_residual);
  CHECK(res.verification.certified_max_violation <= opts.tol_residual);
  CHECK(res.objective > 0.0);
  // The perturbation objective matches the actual distance moved.
  const double moved =
      (res.y_filtered - traj.stacked_outputs()).squaredNorm();
  CHECK(res.objective == doctest::Approx(moved).epsilon(1e-9));
  // Certificate: one multiplier pair per rule row, set multipliers
  // nonnegative.
  REQUIRE(res.certificate.lambda.size() == 3);
  REQUIRE(res.certificate.nu.size() == 3);
  for (const Eigen::VectorXd& nu : res.certificate.nu) {
    CHECK(nu.minCoeff() >= -1e-9);
  }
}

TEST_CASE("consistent data passes through almost untouched") {
  const pbf::LtiSystem sys = pbf::first_order_system(0.8, 0.5);
  const pbf::Trajectory traj = pbf::generate_dataset(
      sys, 40, pbf::Excitation::Prbs, pbf::NoiseSpec{}, 8, 6.0, 1.0, 3);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);
  const pbf::FilterResult res = pbf::solve_filter(p);
  CHECK(res.objective <= 1e-6);
  CHECK((res.y_filtered - traj.stacked_outputs()).cwiseAbs().maxCoeff() <=
        1e-4);
  CHECK(res.status != pbf::FilterStatus::IterationLimit);
}

TEST_CASE("absolute-value objective measures the moved distance") {
  const pbf::Trajectory traj = noisy_fixture(36, 0.1, 12);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);
  p.norm = pbf::FilterNorm::L1;
  pbf::SolverOptions opts;
  opts.verify_samples = 0;
  const pbf::FilterResult res = pbf::solve_filter(p, opts);
  CHECK(res.final_residual <= opts.tol_residual);
  const double moved =
      (res.y_filtered - traj.stacked_outputs()).cwiseAbs().sum();
  CHECK(res.objective == doctest::Approx(moved).epsilon(1e-6));
}

TEST_CASE("filter handles chained prediction windows") {
  const pbf::Trajectory traj = noisy_fixture(40, 0.08, 6);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);
  p.segments = 2;
  p.rule = pbf::temperature_consistency(p.system, 6.0, 2);
  pbf::SolverOptions opts;
  opts.verify_samples = 30;
  opts.max_outer = 300;
  const pbf::FilterResult res = pbf::solve_filter(p, opts);
  CHECK(res.status != pbf::FilterStatus::IterationLimit);
  CHECK(res.final_residual <= opts.tol_residual);
  CHECK(res.verification.certified_row_violations.size() == 6);
}

TEST_CASE("filter refuses chained windows of unequal depth") {
  const pbf::Trajectory traj = testfix::d1_trajectory();
  pbf::FilterProblem p;
  p.system = pbf::build_hankel_system(traj, 2, 3);
  p.config = config(2, 3);
  p.segments = 2;
  p.rule = pbf::temperature_consistency(p.system, 6.0, 2);
  CHECK_THROWS_AS(pbf::solve_filter(p), pbf::SplitRequiresEqualDepths);
}

TEST_CASE("certificate from the returned record is counterpart-feasible") {
  // Build the one-shot program and plug in the record the iterative scheme
  // found, together with its certificate; the point must satisfy every
  // constraint of the exact reformulation.
  const pbf::Trajectory traj = noisy_fixture(16, 0.1, 8);
  pbf::FilterProblem p = fixture_problem(traj, 2, 2);
  pbf::SolverOptions opts;
  opts.verify_samples = 0;
  const pbf::FilterResult res = pbf::solve_filter(p, opts);
  REQUIRE(res.final_residual <= opts.tol_residual);

  const pbf::RobustCounterpart rc = pbf::assemble_robust_counterpart(p);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rc.program.n);
  x.head(rc.n_data) = res.y_filtered;
  for (Eigen::Index r = 0; r < rc.rule_rows; ++r) {
    REQUIRE(res.certificate.lambda[std::size_t(r)].size() == rc.n_lifted);
    REQUIRE(res.certificate.nu[std::size_t(r)].size() == rc.n_set_rows);
    x.segment(rc.lambda_offset(r), rc.n_lifted) =
        res.certificate.lambda[std::size_t(r)];
    x.segment(rc.nu_offset(r), rc.n_set_rows) =
        res.certificate.nu[std::size_t(r)];
  }
  CHECK(pbf::solvers::bilinear_violation(rc.program, x) <=
        res.final_residual + 1e-7);
}

TEST_CASE("exact reformulation solve agrees with the iterative scheme") {
  // Small enough for the global branch-and-bound to finish quickly. The
  // outputs respond to the inputs with a negative direct gain, so predictions
  // under admissible inputs go negative and the record provably violates the
  // nonnegativity rule.
  Eigen::MatrixXd u(1, 6), y(1, 6);
  u << 1, 0, 2, 1, 0, 2;
  y << -0.5, 0, -1, -0.5, 0, -1;
  const pbf::Trajectory traj = pbf::make_trajectory(u, y, 1.0);
  pbf::FilterProblem p = fixture_problem(traj, 1, 1);
  REQUIRE(pbf::verify_consistency(p.system, p.config, p.rule, 1, 0, 0)
              .certified_max_violation > 1.0);

  pbf::SolverOptions iterative;
  iterative.verify_samples = 0;
  const pbf::FilterResult it = pbf::solve_filter(p, iterative);
  REQUIRE(it.final_residual <= iterative.tol_residual);
  REQUIRE(it.objective > 0.0);

  pbf::SolverOptions exact = iterative;
  exact.mccormick.enabled = true;
  exact.mccormick.gap = 1e-3;
  const pbf::FilterResult ex = pbf::solve_filter(p, exact);
  CHECK(ex.status != pbf::FilterStatus::Infeasible);
  CHECK(ex.final_residual <= 1e-4);
  // The global solve cannot do worse than the local scheme.
  CHECK(ex.objective <= it.objective * 1.05 + 1e-6);
  CHECK(ex.objective > 0.0);
}

TEST_CASE("exact reformulation refuses oversized instances") {
  const pbf::Trajectory traj = noisy_fixture(40, 0.05, 13);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);
  pbf::McCormickOptions mc;
  mc.enabled = true;
  mc.max_bilinear_terms = 10;
  CHECK_THROWS_AS(pbf::assemble_robust_counterpart(p, mc), pbf::ConfigError);
}

TEST_CASE("reports stay reproducible across runs") {
  const pbf::Trajectory traj = noisy_fixture(40, 0.1, 2);
  pbf::FilterProblem p = fixture_problem(traj, 3, 3);
  pbf::SolverOptions opts;
  opts.verify_samples = 25;
  const pbf::FilterResult a = pbf::solve_filter(p, opts);
  const pbf::FilterResult b = pbf::solve_filter(p, opts);
  CHECK((a.y_filtered - b.y_filtered).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective == b.objective);
  CHECK(a.outer_iterations == b.outer_iterations);
}
