#include "pbf/sim.hpp"

#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "pbf/hankel.hpp"

namespace pbf {
namespace {

double spectral_radius(const Eigen::MatrixXd& a) {
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd controllability_matrix(const LtiSystem& sys) {
  const Eigen::Index n = sys.n_x();
  Eigen::MatrixXd ctrb(n, n * sys.n_u());
  Eigen::MatrixXd reach = sys.B;
  for (Eigen::Index i = 0; i < n; ++i) {
    ctrb.middleCols(i * sys.n_u(), sys.n_u()) = reach;
    reach = sys.A * reach;
  }
  return ctrb;
}

Eigen::MatrixXd draw_inputs(const LtiSystem& sys, Eigen::Index length,
                            Excitation excitation, double u_max,
                            std::mt19937_64& rng) {
  Eigen::MatrixXd u(sys.n_u(), length);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (excitation) {
    case Excitation::Prbs: {
      for (Eigen::Index k = 0; k < length; ++k) {
        for (Eigen::Index i = 0; i < sys.n_u(); ++i) {
          u(i, k) = unit(rng) < 0.5 ? 0.0 : u_max;
        }
      }
      break;
    }
    case Excitation::Uniform: {
      for (Eigen::Index k = 0; k < length; ++k) {
        for (Eigen::Index i = 0; i < sys.n_u(); ++i) {
          u(i, k) = u_max * unit(rng);
        }
      }
      break;
    }
    case Excitation::ClosedLoopDither: {
      // Proportional feedback toward mid-range output keeps the record in a
      // realistic operating band; the dither supplies the rank.
      Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.n_x());
      const double target = 0.5 * u_max;
      for (Eigen::Index k = 0; k < length; ++k) {
        const Eigen::VectorXd y = sys.C * x;
        const double err = target - (y.size() > 0 ? y(0) : 0.0);
        for (Eigen::Index i = 0; i < sys.n_u(); ++i) {
          const double dither = 0.4 * u_max * (unit(rng) - 0.5);
          u(i, k) = std::clamp(0.5 * u_max + 0.5 * err + dither, 0.0, u_max);
        }
        x = sys.A * x + sys.B * u.col(k);
      }
      break;
    }
  }
  return u;
}

}  // namespace

void validate_dimensions(const LtiSystem& sys) {
  if (sys.A.rows() != sys.A.cols()) {
    throw DimensionMismatch("LtiSystem: A must be square");
  }
  if (sys.B.rows() != sys.A.rows()) {
    throw DimensionMismatch("LtiSystem: B row count must match A");
  }
  if (sys.C.cols() != sys.A.cols()) {
    throw DimensionMismatch("LtiSystem: C column count must match A");
  }
  if (sys.D.rows() != sys.C.rows() || sys.D.cols() != sys.B.cols()) {
    throw DimensionMismatch("LtiSystem: D must be n_y x n_u");
  }
}

bool is_stable(const LtiSystem& sys) {
  validate_dimensions(sys);
  return spectral_radius(sys.A) < 1.0;
}

bool is_controllable(const LtiSystem& sys, double rank_tol) {
  validate_dimensions(sys);
  const Eigen::MatrixXd ctrb = controllability_matrix(sys);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ctrb);
  qr.setThreshold(rank_tol);
  return qr.rank() == sys.n_x();
}

Eigen::MatrixXd simulate(const LtiSystem& sys, const Eigen::VectorXd& x0,
                         const Eigen::MatrixXd& inputs) {
  validate_dimensions(sys);
  if (x0.size() != sys.n_x()) {
    throw DimensionMismatch("simulate: x0 has wrong length");
  }
  if (inputs.rows() != sys.n_u()) {
    throw DimensionMismatch("simulate: inputs have wrong channel count");
  }
  Eigen::MatrixXd y(sys.n_y(), inputs.cols());
  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
    y.col(k) = sys.C * x + sys.D * inputs.col(k);
    x = sys.A * x + sys.B * inputs.col(k);
  }
  return y;
}

Trajectory generate_dataset(const LtiSystem& sys, Eigen::Index length,
                            Excitation excitation, const NoiseSpec& noise,
                            Eigen::Index pe_order, double u_max,
                            double sample_time, std::uint64_t seed) {
  validate_dimensions(sys);
  if (length < 1) {
    throw DimensionMismatch("generate_dataset: length must be >= 1");
  }
  if (!(u_max > 0.0)) {
    throw DimensionMismatch("generate_dataset: u_max must be positive");
  }
  std::mt19937_64 rng(seed);
  constexpr int kMaxDraws = 10;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    const Eigen::MatrixXd u = draw_inputs(sys, length, excitation, u_max, rng);
    if (pe_order >= 1) {
      if (length < pe_order ||
          !check_persistent_excitation(u, pe_order).satisfied) {
        continue;
      }
    }
    Eigen::MatrixXd y = simulate(sys, Eigen::VectorXd::Zero(sys.n_x()), u);
    if (noise.std_dev > 0.0) {
      std::normal_distribution<double> gauss(0.0, noise.std_dev);
      std::uniform_real_distribution<double> flat(-noise.std_dev,
                                                  noise.std_dev);
      for (Eigen::Index k = 0; k < y.cols(); ++k) {
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          y(i, k) += noise.kind == NoiseSpec::Kind::Gaussian ? gauss(rng)
                                                             : flat(rng);
        }
      }
    }
    return make_trajectory(u, y, sample_time);
  }
  throw ExcitationFailed(
      "generate_dataset: no input draw reached excitation order " +
      std::to_string(pe_order) + " after " + std::to_string(kMaxDraws) +
      " attempts");
}

LtiSystem random_controllable_system(Eigen::Index n_x, Eigen::Index n_u,
                                     Eigen::Index n_y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 0.95);
  constexpr int kMaxDraws = 100;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    LtiSystem sys;
    sys.A.resize(n_x, n_x);
    sys.B.resize(n_x, n_u);
    sys.C.resize(n_y, n_x);
    sys.D = Eigen::MatrixXd::Zero(n_y, n_u);
    for (double& v : sys.A.reshaped()) v = gauss(rng);
    for (double& v : sys.B.reshaped()) v = gauss(rng);
    for (double& v : sys.C.reshaped()) v = gauss(rng);
    const double rho = spectral_radius(sys.A);
    if (rho > 0.0) sys.A *= radius(rng) / rho;
    if (is_stable(sys) && is_controllable(sys)) return sys;
  }
  throw GenerationFailed("random_controllable_system: draws exhausted");
}

LtiSystem make_positive_gain_system(Eigen::Index n_x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 0.9);
  constexpr int kMaxDraws = 100;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    LtiSystem sys;
    sys.A.resize(n_x, n_x);
    sys.B.resize(n_x, 1);
    sys.C.resize(1, n_x);
    sys.D = Eigen::MatrixXd::Zero(1, 1);
    for (double& v : sys.A.reshaped()) v = unit(rng);
    for (double& v : sys.B.reshaped()) v = unit(rng);
    for (double& v : sys.C.reshaped()) v = unit(rng);
    const double rho = spectral_radius(sys.A);
    if (!(rho > 0.0)) continue;
    sys.A *= radius(rng) / rho;
    if (!is_controllable(sys)) continue;
    // Nonnegative A, B, C make every Markov parameter C A^k B nonnegative;
    // spot-check by simulation anyway.
    Eigen::MatrixXd impulse = Eigen::MatrixXd::Zero(1, 20);
    impulse(0, 0) = 1.0;
    const Eigen::MatrixXd y =
        simulate(sys, Eigen::VectorXd::Zero(n_x), impulse);
    if (y.minCoeff() < 0.0) continue;
    return sys;
  }
  throw GenerationFailed("make_positive_gain_system: draws exhausted");
}

LtiSystem first_order_system(double a, double b) {
  LtiSystem sys;
  sys.A = Eigen::MatrixXd::Constant(1, 1, a);
  sys.B = Eigen::MatrixXd::Constant(1, 1, b);
  sys.C = Eigen::MatrixXd::Identity(1, 1);
  sys.D = Eigen::MatrixXd::Zero(1, 1);
  return sys;
}

}  // namespace pbf
