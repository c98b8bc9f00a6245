#include "pbf/predictor.hpp"

#include <Eigen/Eigenvalues>

#include "pbf/solvers/linear.hpp"

namespace pbf {
namespace {

void check_config(const HankelSystem& h, const PredictorConfig& cfg) {
  if (cfg.t_init != h.t_init || cfg.n_h != h.n_h) {
    throw DimensionMismatch(
        "predictor: config window lengths disagree with the Hankel system");
  }
}

void check_request(const HankelSystem& h, const PredictionRequest& req,
                   Eigen::Index segments) {
  if (req.y_init.size() != h.t_init * h.n_y()) {
    throw DimensionMismatch("predictor: y_init has wrong length");
  }
  if (req.u_init.size() != h.t_init * h.n_u()) {
    throw DimensionMismatch("predictor: u_init has wrong length");
  }
  if (req.u_pred.size() != segments * h.n_h * h.n_u()) {
    throw DimensionMismatch("predictor: u_pred has wrong length");
  }
}

Eigen::Index segment_count(const HankelSystem& h,
                           const PredictionRequest& req) {
  const Eigen::Index step = h.n_h * h.n_u();
  if (step == 0 || req.u_pred.size() % step != 0 || req.u_pred.size() == 0) {
    throw DimensionMismatch(
        "predictor: u_pred must hold a whole number of segments");
  }
  return req.u_pred.size() / step;
}

solvers::IndefiniteFactorization factor_lifted(const HankelSystem& h,
                                               const PredictorConfig& cfg) {
  try {
    return solvers::IndefiniteFactorization(kkt_matrix_schur(h, cfg));
  } catch (const SingularMatrix& err) {
    throw SingularKkt(err.what());
  }
}

}  // namespace

Eigen::MatrixXd PredictorConfig::regularizer_matrix(Eigen::Index n_cols) const {
  if (regularizer.size() == 0) {
    if (!(regularizer_scale > 0.0)) {
      throw DimensionMismatch(
          "predictor: regularizer_scale must be positive");
    }
    return regularizer_scale *
           Eigen::MatrixXd::Identity(n_cols, n_cols);
  }
  if (regularizer.rows() != n_cols || regularizer.cols() != n_cols) {
    throw DimensionMismatch("predictor: regularizer must be n_cols x n_cols");
  }
  const double scale = std::max(1.0, regularizer.cwiseAbs().maxCoeff());
  if ((regularizer - regularizer.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * scale) {
    throw DimensionMismatch("predictor: regularizer must be symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(regularizer);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw DimensionMismatch("predictor: regularizer must be positive definite");
  }
  return regularizer;
}

PredictorConfig default_config(const HankelSystem& h) {
  PredictorConfig cfg;
  cfg.t_init = h.t_init;
  cfg.n_h = h.n_h;
  return cfg;
}

Eigen::MatrixXd kkt_matrix(const HankelSystem& h, const PredictorConfig& cfg) {
  check_config(h, cfg);
  const Eigen::Index n_cols = h.n_cols();
  const Eigen::MatrixXd hu = h.input_block();
  const Eigen::Index m = hu.rows();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n_cols + m, n_cols + m);
  kkt.topLeftCorner(n_cols, n_cols) =
      h.y_init_block.transpose() * h.y_init_block +
      cfg.regularizer_matrix(n_cols);
  kkt.topRightCorner(n_cols, m) = hu.transpose();
  kkt.bottomLeftCorner(m, n_cols) = hu;
  return kkt;
}

Eigen::MatrixXd kkt_matrix_schur(const HankelSystem& h,
                                 const PredictorConfig& cfg) {
  check_config(h, cfg);
  const Eigen::Index n_cols = h.n_cols();
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::MatrixXd hu = h.input_block();
  const Eigen::Index m = hu.rows();
  const Eigen::Index size = n_si + n_cols + m;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(size, size);
  kkt.topLeftCorner(n_si, n_si) = -Eigen::MatrixXd::Identity(n_si, n_si);
  kkt.block(0, n_si, n_si, n_cols) = h.y_init_block;
  kkt.block(n_si, 0, n_cols, n_si) = h.y_init_block.transpose();
  kkt.block(n_si, n_si, n_cols, n_cols) = cfg.regularizer_matrix(n_cols);
  kkt.block(n_si, n_si + n_cols, n_cols, m) = hu.transpose();
  kkt.block(n_si + n_cols, n_si, m, n_cols) = hu;
  return kkt;
}

Eigen::MatrixXd kkt_matrix_schur_split(const HankelSystem& h,
                                       const PredictorConfig& cfg,
                                       Eigen::Index segments) {
  check_config(h, cfg);
  if (segments < 1) {
    throw DimensionMismatch("predictor: segments must be >= 1");
  }
  if (segments > 1 && h.t_init != h.n_h) {
    throw SplitRequiresEqualDepths(
        "predictor: chained segments need t_init == n_h");
  }
  const Eigen::MatrixXd block = kkt_matrix_schur(h, cfg);
  const Eigen::Index s = block.rows();
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::Index n_cols = h.n_cols();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(segments * s, segments * s);
  for (Eigen::Index seg = 0; seg < segments; ++seg) {
    kkt.block(seg * s, seg * s, s, s) = block;
    if (seg > 0) {
      // Segment seg starts from the previous prediction: its sigma rows see
      // -y_pred_block against the previous g columns.
      kkt.block(seg * s, (seg - 1) * s + n_si, n_si, n_cols) =
          -h.y_pred_block;
    }
  }
  return kkt;
}

Eigen::MatrixXd rhs_selector(const HankelSystem& h, Eigen::Index segments) {
  if (segments < 1) {
    throw DimensionMismatch("predictor: segments must be >= 1");
  }
  if (segments > 1 && h.t_init != h.n_h) {
    throw SplitRequiresEqualDepths(
        "predictor: chained segments need t_init == n_h");
  }
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::Index n_ui = h.t_init * h.n_u();
  const Eigen::Index n_up = h.n_h * h.n_u();
  const Eigen::Index n_cols = h.n_cols();
  const Eigen::Index s = n_si + n_cols + n_ui + n_up;
  const Eigen::Index n_p = n_si + n_ui + segments * n_up;
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(segments * s, n_p);
  auto u_pred_col = [&](Eigen::Index seg) { return n_si + n_ui + seg * n_up; };
  for (Eigen::Index seg = 0; seg < segments; ++seg) {
    const Eigen::Index row0 = seg * s;
    if (seg == 0) {
      sel.block(row0, 0, n_si, n_si).setIdentity();
      sel.block(row0 + n_si + n_cols, n_si, n_ui, n_ui).setIdentity();
    } else {
      // The previous planned inputs double as this segment's initialization.
      sel.block(row0 + n_si + n_cols, u_pred_col(seg - 1), n_ui, n_up)
          .setIdentity();
    }
    sel.block(row0 + n_si + n_cols + n_ui, u_pred_col(seg), n_up, n_up)
        .setIdentity();
  }
  return sel;
}

PredictionResult predict(const HankelSystem& h, const PredictorConfig& cfg,
                         const PredictionRequest& req) {
  check_config(h, cfg);
  check_request(h, req, 1);
  const solvers::IndefiniteFactorization fact = factor_lifted(h, cfg);
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::Index n_cols = h.n_cols();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(fact.rows());
  rhs.head(n_si) = req.y_init;
  rhs.segment(n_si + n_cols, req.u_init.size()) = req.u_init;
  rhs.tail(req.u_pred.size()) = req.u_pred;
  const Eigen::VectorXd sol = fact.solve(rhs);
  PredictionResult out;
  out.sigma = sol.head(n_si);
  out.g = sol.segment(n_si, n_cols);
  out.kappa = sol.tail(fact.rows() - n_si - n_cols);
  out.y_pred = h.y_pred_block * out.g;
  return out;
}

PredictionResult predict_split(const HankelSystem& h,
                               const PredictorConfig& cfg,
                               const PredictionRequest& req) {
  check_config(h, cfg);
  const Eigen::Index segments = segment_count(h, req);
  check_request(h, req, segments);
  if (segments > 1 && h.t_init != h.n_h) {
    throw SplitRequiresEqualDepths(
        "predictor: chained segments need t_init == n_h");
  }
  const solvers::IndefiniteFactorization fact = factor_lifted(h, cfg);
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::Index n_cols = h.n_cols();
  const Eigen::Index n_up = h.n_h * h.n_u();

  PredictionResult out;
  out.y_pred.resize(segments * h.n_h * h.n_y());
  out.g.resize(segments * n_cols);
  out.sigma.resize(segments * n_si);
  out.kappa.resize(segments * (fact.rows() - n_si - n_cols));

  Eigen::VectorXd y_cur = req.y_init;
  Eigen::VectorXd u_cur = req.u_init;
  for (Eigen::Index seg = 0; seg < segments; ++seg) {
    const Eigen::VectorXd u_seg = req.u_pred.segment(seg * n_up, n_up);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(fact.rows());
    rhs.head(n_si) = y_cur;
    rhs.segment(n_si + n_cols, u_cur.size()) = u_cur;
    rhs.tail(n_up) = u_seg;
    const Eigen::VectorXd sol = fact.solve(rhs);
    const Eigen::VectorXd g = sol.segment(n_si, n_cols);
    const Eigen::VectorXd y_seg = h.y_pred_block * g;
    out.sigma.segment(seg * n_si, n_si) = sol.head(n_si);
    out.g.segment(seg * n_cols, n_cols) = g;
    const Eigen::Index n_kap = fact.rows() - n_si - n_cols;
    out.kappa.segment(seg * n_kap, n_kap) = sol.tail(n_kap);
    out.y_pred.segment(seg * y_seg.size(), y_seg.size()) = y_seg;
    y_cur = y_seg;
    u_cur = u_seg;
  }
  return out;
}

PredictionOperator prediction_operator(const HankelSystem& h,
                                       const PredictorConfig& cfg,
                                       Eigen::Index segments) {
  check_config(h, cfg);
  if (segments < 1) {
    throw DimensionMismatch("predictor: segments must be >= 1");
  }
  if (segments > 1 && h.t_init != h.n_h) {
    throw SplitRequiresEqualDepths(
        "predictor: chained segments need t_init == n_h");
  }
  const solvers::IndefiniteFactorization fact = factor_lifted(h, cfg);
  const Eigen::Index n_si = h.t_init * h.n_y();
  const Eigen::Index n_ui = h.t_init * h.n_u();
  const Eigen::Index n_up = h.n_h * h.n_u();
  const Eigen::Index n_cols = h.n_cols();
  const Eigen::Index s = fact.rows();
  const Eigen::Index n_p = n_si + n_ui + segments * n_up;
  const Eigen::MatrixXd sel = rhs_selector(h, segments);

  // Forward substitution through the block lower-triangular chained system,
  // one column per parameter direction.
  Eigen::MatrixXd y_map(segments * h.n_h * h.n_y(), n_p);
  Eigen::MatrixXd g_prev;
  for (Eigen::Index seg = 0; seg < segments; ++seg) {
    Eigen::MatrixXd rhs = sel.block(seg * s, 0, s, n_p);
    if (seg > 0) {
      rhs.topRows(n_si) += h.y_pred_block * g_prev;
    }
    const Eigen::MatrixXd sol = fact.solve(rhs);
    g_prev = sol.middleRows(n_si, n_cols);
    y_map.middleRows(seg * h.n_h * h.n_y(), h.n_h * h.n_y()) =
        h.y_pred_block * g_prev;
  }

  PredictionOperator op;
  op.segments = segments;
  op.from_y_init = y_map.leftCols(n_si);
  op.from_u_init = y_map.middleCols(n_si, n_ui);
  op.from_u_pred = y_map.rightCols(segments * n_up);
  return op;
}

}  // namespace pbf
