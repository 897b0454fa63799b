#include "trendbal/solvers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "trendbal/error.hpp"
#include "trendbal/qp.hpp"

namespace trendbal {
namespace {

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("lambda must be a finite nonnegative number");
  }
}

WeightSolution start(const CovariateProblem& prob, Method m, bool uses_q) {
  prob.validate(true);
  WeightSolution s;
  s.method = m;
  s.depends_on_pre_outcomes =
      prob.z_uses_outcomes || (uses_q && prob.q_uses_outcomes);
  if (prob.constraints() == prob.controls()) {
    s.warnings.push_back(
        "exact-balancing system is square; the unique feasible weight "
        "vector is returned");
  }
  return s;
}

void finish_feasibility(const CovariateProblem& prob, WeightSolution& s) {
  s.feas_residual = inf_norm(prob.z1 - prob.Z * s.w);
}

// (ZZ')^{-1} through an LLT; Z has full row rank by validation.
Eigen::LLT<MatrixXd> gram_of(const MatrixXd& Z) {
  Eigen::LLT<MatrixXd> llt(Z * Z.transpose());
  if (llt.info() != Eigen::Success) {
    throw RankError("ZZ' is singular; Z must have full row rank");
  }
  return llt;
}

VectorXd min_norm_weights(const MatrixXd& Z, const VectorXd& z1) {
  const auto llt = gram_of(Z);
  VectorXd w = Z.transpose() * llt.solve(z1);
  w += Z.transpose() * llt.solve(z1 - Z * w);
  return w;
}

bool full_column_rank(const MatrixXd& Q) {
  if (Q.rows() < Q.cols()) return false;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Q);
  qr.setThreshold(1e-10);
  return qr.rank() == Q.cols();
}

void require_ridge_ok(const CovariateProblem& prob, double lambda) {
  check_lambda(lambda);
  if (lambda == 0.0 && !full_column_rank(prob.Q)) {
    throw SingularityError(
        "Q'Q is singular (m=" + std::to_string(prob.balancing()) +
        ", J=" + std::to_string(prob.controls()) +
        "); use lambda > 0 for the constrained ridge");
  }
}

// Stationarity residual for min 1/2 w'Hw - c'w s.t. Zw = z1 with
// least-squares multipliers.
double equality_kkt(const MatrixXd& H, const VectorXd& c, const MatrixXd& Z,
                    const VectorXd& w) {
  const VectorXd g = H * w - c;
  const VectorXd nu = Z.transpose().colPivHouseholderQr().solve(g);
  const double scale = std::max({1.0, inf_norm(c), H.cwiseAbs().maxCoeff()});
  return inf_norm(g - Z.transpose() * nu) / scale;
}

struct L1Fit {
  VectorXd w;
  VectorXd nu;
  int iterations = 0;
  bool ridge_added = false;
};

// min 1/2|q1-Qw|^2 + sum(pos w+ + neg w-) s.t. Zw = z1 through the split
// QP; with no penalty the unsplit equality QP is solved instead.
L1Fit l1_fit(const VectorXd& q1, const MatrixXd& Q, const MatrixXd& Z,
             const VectorXd& z1, double pos, double neg) {
  const Index J = Z.cols();
  const MatrixXd G = Q.transpose() * Q;
  const VectorXd c = Q.transpose() * q1;
  L1Fit fit;
  QpProblem qp;
  if (pos == 0.0 && neg == 0.0) {
    qp.P = G;
    qp.f = -c;
    qp.Aeq = Z;
    qp.beq = z1;
    qp.nonneg.assign(static_cast<std::size_t>(J), false);
    const auto sol = solve_qp(qp);
    fit.w = sol.x;
    fit.nu = sol.eq_multipliers;
    fit.iterations = sol.iterations;
    fit.ridge_added = sol.ridge_added;
    return fit;
  }
  qp.P.resize(2 * J, 2 * J);
  qp.P << G, -G, -G, G;
  qp.f.resize(2 * J);
  qp.f << -c + VectorXd::Constant(J, pos), c + VectorXd::Constant(J, neg);
  qp.Aeq.resize(Z.rows(), 2 * J);
  qp.Aeq << Z, -Z;
  qp.beq = z1;
  qp.nonneg.assign(static_cast<std::size_t>(2 * J), true);
  const auto sol = solve_qp(qp);
  fit.w = sol.x.head(J) - sol.x.tail(J);
  fit.nu = sol.eq_multipliers;
  fit.iterations = sol.iterations;
  fit.ridge_added = sol.ridge_added;
  return fit;
}

double l1_norm(const VectorXd& w) { return w.cwiseAbs().sum(); }

double asym_penalty(const VectorXd& w, double pos, double neg) {
  double s = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    s += w(j) > 0 ? pos * w(j) : -neg * w(j);
  }
  return s;
}

std::vector<Index> intercept_rows(const CovariateProblem& prob) {
  std::vector<Index> rows;
  for (Index i = 0; i < prob.Z.rows(); ++i) {
    if (prob.z1(i) == 1.0 && (prob.Z.row(i).array() == 1.0).all()) {
      rows.push_back(i);
    }
  }
  return rows;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::MaxShrink:
      return "maxshrink";
    case Method::BasisPursuit:
      return "basispursuit";
    case Method::CRidge:
      return "cridge";
    case Method::CLasso:
      return "classo";
    case Method::CElasticNet:
      return "celasticnet";
    case Method::SoftNonneg:
      return "softnonneg";
    case Method::AdhInner:
      return "adhinner";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::MaxShrink, Method::BasisPursuit, Method::CRidge,
                 Method::CLasso, Method::CElasticNet, Method::SoftNonneg,
                 Method::AdhInner}) {
    if (method_name(m) == name) return m;
  }
  if (name == "bp") return Method::BasisPursuit;
  if (name == "cenet") return Method::CElasticNet;
  if (name == "adh") return Method::AdhInner;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

double l1_kkt_residual(const VectorXd& q1, const MatrixXd& Q,
                       const MatrixXd& Z, const VectorXd& w,
                       const VectorXd& nu, double rho, double pos,
                       double neg) {
  VectorXd s = Z.transpose() * nu - rho * w;
  double scale = std::max({1.0, pos, neg});
  if (Q.rows() > 0) {
    s += Q.transpose() * (q1 - Q * w);
    scale = std::max(scale, inf_norm(Q.transpose() * q1));
  }
  double worst = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    double v = 0.0;
    if (w(j) > kZeroWeight) {
      v = std::abs(s(j) - pos);
    } else if (w(j) < -kZeroWeight) {
      v = std::abs(s(j) + neg);
    } else {
      v = std::max({0.0, s(j) - pos, -neg - s(j)});
    }
    worst = std::max(worst, v);
  }
  return worst / scale;
}

WeightSolution max_shrinkage(const CovariateProblem& prob) {
  auto s = start(prob, Method::MaxShrink, false);
  s.w = min_norm_weights(prob.Z, prob.z1);
  s.objective = s.w.squaredNorm();
  s.kkt_residual = equality_kkt(MatrixXd::Identity(prob.controls(), prob.controls()),
                                VectorXd::Zero(prob.controls()), prob.Z, s.w);
  finish_feasibility(prob, s);
  return s;
}

WeightSolution basis_pursuit(const CovariateProblem& prob, double epsilon,
                             double alpha) {
  auto s = start(prob, Method::BasisPursuit, false);
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("alpha must lie in [0, 1]");
  }
  s.epsilon = epsilon;
  s.alpha = alpha;
  const Index J = prob.controls();
  const double quad = (1.0 - alpha) / 2.0 + epsilon;

  QpProblem qp;
  qp.beq = prob.z1;
  if (alpha == 0.0) {
    qp.P = 2.0 * quad * MatrixXd::Identity(J, J);
    qp.f = VectorXd::Zero(J);
    qp.Aeq = prob.Z;
    qp.nonneg.assign(static_cast<std::size_t>(J), false);
  } else {
    const MatrixXd I = MatrixXd::Identity(J, J);
    qp.P.resize(2 * J, 2 * J);
    qp.P << I, -I, -I, I;
    qp.P *= 2.0 * quad;
    qp.f = VectorXd::Constant(2 * J, alpha);
    qp.Aeq.resize(prob.constraints(), 2 * J);
    qp.Aeq << prob.Z, -prob.Z;
    qp.nonneg.assign(static_cast<std::size_t>(2 * J), true);
  }
  const auto sol = solve_qp(qp);
  s.w = alpha == 0.0 ? VectorXd(sol.x) : VectorXd(sol.x.head(J) - sol.x.tail(J));
  s.iterations = sol.iterations;
  s.ridge_added = sol.ridge_added;
  s.objective = alpha * l1_norm(s.w) + quad * s.w.squaredNorm();
  s.kkt_residual = l1_kkt_residual(VectorXd(), MatrixXd(0, J), prob.Z, s.w,
                                   sol.eq_multipliers, 2.0 * quad, alpha,
                                   alpha);
  finish_feasibility(prob, s);
  return s;
}

WeightSolution constrained_ridge(const CovariateProblem& prob, double lambda) {
  auto s = start(prob, Method::CRidge, true);
  require_ridge_ok(prob, lambda);
  s.lambda = lambda;
  const Index J = prob.controls();
  const MatrixXd& Z = prob.Z;

  MatrixXd G = prob.Q.transpose() * prob.Q;
  G.diagonal().array() += lambda;
  const Eigen::LLT<MatrixXd> g_llt(G);
  if (g_llt.info() != Eigen::Success) {
    throw SingularityError("G_lambda = Q'Q + lambda I is singular; use lambda > 0");
  }
  const VectorXd c = prob.Q.transpose() * prob.q1;
  const VectorXd w_ridge = g_llt.solve(c);
  const MatrixXd GiZt = g_llt.solve(Z.transpose());
  const Eigen::LLT<MatrixXd> m_llt(Z * GiZt);
  if (m_llt.info() != Eigen::Success) {
    throw RankError("Z G^{-1} Z' is singular; Z must have full row rank");
  }
  s.w = w_ridge + GiZt * m_llt.solve(prob.z1 - Z * w_ridge);
  // One refinement pass in the G metric keeps the optimum and tightens
  // feasibility to rounding level.
  s.w += GiZt * m_llt.solve(prob.z1 - Z * s.w);

  s.objective = (prob.q1 - prob.Q * s.w).squaredNorm() + lambda * s.w.squaredNorm();
  s.kkt_residual = equality_kkt(G, c, Z, s.w);
  (void)J;
  finish_feasibility(prob, s);
  return s;
}

WeightSolution ridge_decomposition(const CovariateProblem& prob,
                                   double lambda) {
  auto s = start(prob, Method::CRidge, true);
  require_ridge_ok(prob, lambda);
  s.lambda = lambda;
  const Index J = prob.controls();
  const MatrixXd& Z = prob.Z;
  const auto zz = gram_of(Z);

  const VectorXd w_a = Z.transpose() * zz.solve(prob.z1);
  // B = QZ'(ZZ')^{-1}
  const MatrixXd B = zz.solve(Z * prob.Q.transpose()).transpose();
  const MatrixXd Qt = prob.Q - B * Z;
  const VectorXd qt = prob.q1 - B * prob.z1;

  VectorXd w_b;
  if (lambda > 0.0) {
    MatrixXd Gt = Qt.transpose() * Qt;
    Gt.diagonal().array() += lambda;
    w_b = Gt.llt().solve(Qt.transpose() * qt);
  } else {
    // lambda -> 0 limit: minimum-norm least squares, which lies in the row
    // space of Qt and hence in the null space of Z.
    w_b = Qt.completeOrthogonalDecomposition().solve(qt);
  }
  s.w = w_a + w_b;
  MatrixXd G = prob.Q.transpose() * prob.Q;
  G.diagonal().array() += lambda;
  const VectorXd c = prob.Q.transpose() * prob.q1;
  s.objective = (prob.q1 - prob.Q * s.w).squaredNorm() + lambda * s.w.squaredNorm();
  s.kkt_residual = equality_kkt(G, c, Z, s.w);
  (void)J;
  finish_feasibility(prob, s);
  return s;
}

WeightSolution constrained_lasso(const CovariateProblem& prob, double lambda) {
  auto s = start(prob, Method::CLasso, true);
  check_lambda(lambda);
  s.lambda = lambda;
  const auto fit = l1_fit(prob.q1, prob.Q, prob.Z, prob.z1, lambda, lambda);
  s.w = fit.w;
  s.iterations = fit.iterations;
  s.ridge_added = fit.ridge_added;
  s.objective = 0.5 * (prob.q1 - prob.Q * s.w).squaredNorm() + lambda * l1_norm(s.w);
  s.kkt_residual = l1_kkt_residual(prob.q1, prob.Q, prob.Z, s.w, fit.nu, 0.0,
                                   lambda, lambda);
  finish_feasibility(prob, s);
  return s;
}

WeightSolution constrained_elastic_net(const CovariateProblem& prob,
                                       double lambda, double alpha) {
  auto s = start(prob, Method::CElasticNet, true);
  check_lambda(lambda);
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("alpha must lie in [0, 1]");
  }
  s.lambda = lambda;
  s.alpha = alpha;
  const Index J = prob.controls();
  const Index m = prob.balancing();
  const double root = std::sqrt(lambda * (1.0 - alpha));

  MatrixXd Q_aug = MatrixXd::Zero(m + J, J);
  Q_aug.topRows(m) = prob.Q;
  Q_aug.bottomRows(J).diagonal().setConstant(root);
  VectorXd q_aug = VectorXd::Zero(m + J);
  q_aug.head(m) = prob.q1;

  const double l1 = lambda * alpha;
  const auto fit = l1_fit(q_aug, Q_aug, prob.Z, prob.z1, l1, l1);
  s.w = fit.w;
  s.iterations = fit.iterations;
  s.ridge_added = fit.ridge_added;
  s.objective = 0.5 * (prob.q1 - prob.Q * s.w).squaredNorm() +
                lambda * ((1.0 - alpha) / 2.0 * s.w.squaredNorm() +
                          alpha * l1_norm(s.w));
  s.kkt_residual = l1_kkt_residual(prob.q1, prob.Q, prob.Z, s.w, fit.nu,
                                   lambda * (1.0 - alpha), l1, l1);
  finish_feasibility(prob, s);
  return s;
}

WeightSolution soft_nonneg_lasso(const CovariateProblem& prob, double lambda,
                                 double kappa) {
  auto s = start(prob, Method::SoftNonneg, true);
  check_lambda(lambda);
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) {
    throw InvalidArgument("kappa must be a finite number >= 1");
  }
  s.lambda = lambda;
  s.kappa = kappa;
  const auto fit =
      l1_fit(prob.q1, prob.Q, prob.Z, prob.z1, lambda, lambda * kappa);
  s.w = fit.w;
  s.iterations = fit.iterations;
  s.ridge_added = fit.ridge_added;
  s.objective = 0.5 * (prob.q1 - prob.Q * s.w).squaredNorm() +
                asym_penalty(s.w, lambda, lambda * kappa);
  s.kkt_residual = l1_kkt_residual(prob.q1, prob.Q, prob.Z, s.w, fit.nu, 0.0,
                                   lambda, lambda * kappa);
  finish_feasibility(prob, s);
  return s;
}

WeightSolution adh_inner(const CovariateProblem& prob, const VectorXd& v_diag) {
  auto s = start(prob, Method::AdhInner, false);
  const Index J = prob.controls();
  const Index rows = prob.constraints();
  VectorXd v = v_diag.size() == 0 ? VectorXd::Ones(rows) : v_diag;
  if (v.size() != rows) {
    throw DimensionError("V must have one diagonal entry per row of Z");
  }
  if ((v.array() < 0.0).any() || !v.allFinite()) {
    throw InvalidArgument("V entries must be finite and nonnegative");
  }
  for (Index r : intercept_rows(prob)) v(r) = 0.0;

  constexpr double kTieBreak = 1e-10;
  s.tie_break_ridge = kTieBreak;
  const MatrixXd ZtV = prob.Z.transpose() * v.asDiagonal();
  QpProblem qp;
  qp.P = 2.0 * ZtV * prob.Z;
  qp.P.diagonal().array() += 2.0 * kTieBreak;
  qp.P = 0.5 * (qp.P + qp.P.transpose()).eval();
  qp.f = -2.0 * ZtV * prob.z1;
  qp.Aeq = MatrixXd::Ones(1, J);
  qp.beq = VectorXd::Ones(1);
  qp.nonneg.assign(static_cast<std::size_t>(J), true);
  const auto sol = solve_qp(qp);
  s.w = sol.x;
  s.iterations = sol.iterations;
  s.ridge_added = sol.ridge_added;
  s.kkt_residual = sol.kkt_residual;

  // A 1e-10 ridge sits below the kernel's stationarity tolerance, so the
  // tie is resolved directly: the minimum-norm simplex point sharing the
  // fitted V-weighted covariates, which is the limit of the ridge path.
  const MatrixXd M = [&] {
    MatrixXd m(rows + 1, J);
    m.row(0).setOnes();
    m.bottomRows(rows) = v.cwiseSqrt().asDiagonal() * prob.Z;
    return m;
  }();
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU);
  const VectorXd& sv = svd.singularValues();
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-9 * sv(0)) ++rank;
  if (rank < J) {
    QpProblem tie;
    tie.P = MatrixXd::Identity(J, J);
    tie.f = VectorXd::Zero(J);
    tie.Aeq = svd.matrixU().leftCols(rank).transpose() * M;
    tie.beq = tie.Aeq * s.w;
    tie.nonneg.assign(static_cast<std::size_t>(J), true);
    try {
      const auto refined = solve_qp(tie);
      s.w = refined.x;
      s.iterations += refined.iterations;
    } catch (const Error&) {
      // Keep the first-stage minimizer.
    }
  }
  const VectorXd gap = prob.z1 - prob.Z * s.w;
  s.objective = gap.dot(v.asDiagonal() * gap);
  finish_feasibility(prob, s);
  return s;
}

}  // namespace trendbal
