#include "trendbal/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "trendbal/error.hpp"

namespace trendbal {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kCurvatureTol = 1e-11;
constexpr double kSlopeTol = 1e-11;
constexpr double kMultiplierTol = 1e-11;
constexpr double kRidge = 1e-12;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

MatrixXd take_cols(const MatrixXd& M, const std::vector<Index>& idx) {
  MatrixXd out(M.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.col(static_cast<Index>(k)) = M.col(idx[k]);
  }
  return out;
}

MatrixXd take_block(const MatrixXd& M, const std::vector<Index>& idx) {
  const auto n = static_cast<Index>(idx.size());
  MatrixXd out(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      out(a, b) = M(idx[static_cast<std::size_t>(a)],
                    idx[static_cast<std::size_t>(b)]);
    }
  }
  return out;
}

VectorXd take(const VectorXd& v, const std::vector<Index>& idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out(static_cast<Index>(k)) = v(idx[k]);
  }
  return out;
}

Index row_rank(const MatrixXd& A) {
  if (A.rows() == 0) return 0;
  if (A.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A.transpose());
  qr.setThreshold(1e-10);
  return qr.rank();
}

// Orthonormal basis of the null space of A_F (columns of A restricted to
// the free set) and a solver for A_F' nu = g_F in the least-squares sense.
struct FreeSpace {
  MatrixXd N;
  Eigen::ColPivHouseholderQR<MatrixXd> qr;  // of A_F'
  bool has_constraints = false;

  FreeSpace(const MatrixXd& A_F, Index n_free) {
    if (A_F.rows() == 0) {
      N = MatrixXd::Identity(n_free, n_free);
      return;
    }
    has_constraints = true;
    qr.compute(A_F.transpose());
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    MatrixXd Qfull = qr.householderQ() * MatrixXd::Identity(n_free, n_free);
    N = Qfull.rightCols(n_free - rank);
  }

  VectorXd multipliers(const VectorXd& g_F, Index p) const {
    if (!has_constraints) return VectorXd::Zero(p);
    return qr.solve(g_F);
  }
};

struct Step {
  VectorXd p;             // over the free set
  bool unbounded_direction = false;
  bool ridge = false;
};

// Minimizes 1/2 p'Hp + r'p over the null-space coordinates. Components of
// r along (numerically) zero-curvature eigendirections yield a pure
// descent direction instead of a Newton step.
Step eqp_step(const MatrixXd& P_FF, const VectorXd& g_F, const MatrixXd& N,
              bool& ridge_added) {
  Step s;
  if (N.cols() == 0) {
    s.p = VectorXd::Zero(g_F.size());
    return s;
  }
  MatrixXd H = N.transpose() * P_FF * N;
  H = 0.5 * (H + H.transpose());
  if (ridge_added) H.diagonal().array() += kRidge;
  const VectorXd r = N.transpose() * g_F;
  const double gscale = std::max(1.0, inf_norm(g_F));

  Eigen::LLT<MatrixXd> llt(H);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-10) {
    s.p = -(N * llt.solve(r));
    return s;
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  if (es.info() != Eigen::Success) {
    ridge_added = true;
    s.ridge = true;
    H.diagonal().array() += kRidge;
    es.compute(H);
    if (es.info() != Eigen::Success) {
      throw Error("eigendecomposition of the reduced Hessian failed");
    }
  }
  const VectorXd lam = es.eigenvalues();
  const MatrixXd& V = es.eigenvectors();
  const VectorXd sv = V.transpose() * r;
  const double lam_tol = kCurvatureTol * std::max(1.0, lam.maxCoeff());

  VectorXd newton = VectorXd::Zero(lam.size());
  VectorXd descent = VectorXd::Zero(lam.size());
  bool any_descent = false;
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > lam_tol) {
      newton(i) = -sv(i) / lam(i);
    } else if (std::abs(sv(i)) > kSlopeTol * gscale) {
      descent(i) = -sv(i);
      any_descent = true;
    }
  }
  if (any_descent) {
    s.p = N * (V * descent);
    s.unbounded_direction = true;
  } else {
    s.p = N * (V * newton);
  }
  return s;
}

struct ActiveSetResult {
  VectorXd x;
  VectorXd nu;
  VectorXd mu;
  int iterations = 0;
  bool converged = false;
  bool ridge_added = false;
};

// Primal active-set iterations from a feasible x with working set `fixed`
// (bounded coordinates pinned at zero). A_F must have full row rank.
ActiveSetResult active_set(const MatrixXd& P, const VectorXd& f,
                           const MatrixXd& A, const std::vector<bool>& bounded,
                           VectorXd x, std::vector<bool> fixed, int max_iter,
                           int iter_offset) {
  const Index n = f.size();
  const Index p = A.rows();
  ActiveSetResult res;
  bool bland = false;
  int degenerate_run = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1 + iter_offset;
    std::vector<Index> F;
    std::vector<Index> W;
    for (Index i = 0; i < n; ++i) (fixed[static_cast<std::size_t>(i)] ? W : F).push_back(i);

    const VectorXd g = P * x + f;
    const MatrixXd A_F = take_cols(A, F);
    const FreeSpace space(A_F, static_cast<Index>(F.size()));
    const VectorXd g_F = take(g, F);
    const Step step = eqp_step(take_block(P, F), g_F, space.N, res.ridge_added);

    const double step_norm = inf_norm(step.p);
    const bool negligible =
        !step.unbounded_direction && step_norm <= 1e-13 * (1.0 + inf_norm(x));

    if (!negligible) {
      // Ratio test against bounded free coordinates.
      double alpha = step.unbounded_direction
                         ? std::numeric_limits<double>::infinity()
                         : 1.0;
      Index block = -1;
      for (std::size_t k = 0; k < F.size(); ++k) {
        const Index i = F[k];
        if (!bounded[static_cast<std::size_t>(i)]) continue;
        const double pi = step.p(static_cast<Index>(k));
        if (pi >= -1e-15 * step_norm) continue;
        const double a = std::max(0.0, x(i)) / -pi;
        if (a < alpha || (bland && a == alpha && block >= 0 && i < block)) {
          alpha = a;
          block = i;
        }
      }
      if (!std::isfinite(alpha)) {
        throw Error("QP objective is unbounded below on the feasible set");
      }
      for (std::size_t k = 0; k < F.size(); ++k) {
        x(F[k]) += alpha * step.p(static_cast<Index>(k));
      }
      if (block >= 0) {
        x(block) = 0.0;
        fixed[static_cast<std::size_t>(block)] = true;
        degenerate_run = alpha == 0.0 ? degenerate_run + 1 : 0;
        if (degenerate_run > n) bland = true;
        continue;
      }
      if (step.unbounded_direction) continue;
      // Full Newton step taken: x now minimizes over the working set.
    }

    // Multiplier check at the working-set minimizer.
    const VectorXd g2 = P * x + f;
    const VectorXd nu = space.multipliers(take(g2, F), p);
    const VectorXd mu_all = g2 - A.transpose() * nu;
    const double mu_tol = kMultiplierTol * std::max(1.0, inf_norm(g2));
    Index drop = -1;
    double most_negative = -mu_tol;
    for (Index i : W) {
      if (mu_all(i) < most_negative) {
        drop = i;
        if (bland) break;
        most_negative = mu_all(i);
      }
    }
    if (drop < 0) {
      res.x = std::move(x);
      res.nu = nu;
      res.mu = VectorXd::Zero(n);
      for (Index i : W) res.mu(i) = mu_all(i);
      res.converged = true;
      return res;
    }
    fixed[static_cast<std::size_t>(drop)] = false;
  }
  res.x = std::move(x);
  res.nu = VectorXd::Zero(p);
  res.mu = VectorXd::Zero(n);
  return res;
}

// Frees pinned coordinates (in index order) until A_F has full row rank.
void ensure_full_rank(const MatrixXd& A, std::vector<bool>& fixed) {
  const Index p = A.rows();
  if (p == 0) return;
  auto free_rank = [&] {
    std::vector<Index> F;
    for (Index i = 0; i < A.cols(); ++i) {
      if (!fixed[static_cast<std::size_t>(i)]) F.push_back(i);
    }
    return row_rank(take_cols(A, F));
  };
  Index rank = free_rank();
  for (Index i = 0; i < A.cols() && rank < p; ++i) {
    if (!fixed[static_cast<std::size_t>(i)]) continue;
    fixed[static_cast<std::size_t>(i)] = false;
    const Index r = free_rank();
    if (r > rank) {
      rank = r;
    } else {
      fixed[static_cast<std::size_t>(i)] = true;
    }
  }
}

// Minimum-norm correction of the free coordinates onto A x = b.
void restore_feasibility(const MatrixXd& A, const VectorXd& b,
                         const std::vector<bool>& fixed, VectorXd& x) {
  if (A.rows() == 0) return;
  std::vector<Index> F;
  for (Index i = 0; i < x.size(); ++i) {
    if (!fixed[static_cast<std::size_t>(i)]) F.push_back(i);
  }
  if (F.empty()) return;
  const MatrixXd A_F = take_cols(A, F);
  for (int pass = 0; pass < 2; ++pass) {
    const VectorXd r = b - A * x;
    const VectorXd dx =
        A_F.transpose() *
        (A_F * A_F.transpose()).completeOrthogonalDecomposition().solve(r);
    for (std::size_t k = 0; k < F.size(); ++k) x(F[k]) += dx(static_cast<Index>(k));
  }
}

}  // namespace

void QpProblem::validate() const {
  const Index n = f.size();
  if (n == 0) throw InvalidArgument("QP has no variables");
  if (P.rows() != n || P.cols() != n) {
    throw InvalidArgument("QP: P must be n x n with n = size(f)");
  }
  if (Aeq.rows() != beq.size() || (Aeq.rows() > 0 && Aeq.cols() != n)) {
    throw InvalidArgument("QP: Aeq must be p x n and beq of length p");
  }
  if (!nonneg.empty() && static_cast<Index>(nonneg.size()) != n) {
    throw InvalidArgument("QP: nonneg mask length must equal n");
  }
  if (Aeq.rows() > n) throw InvalidArgument("QP: more equalities than variables");
  if (!P.allFinite() || !f.allFinite() || !Aeq.allFinite() || !beq.allFinite()) {
    throw InvalidArgument("QP: non-finite data");
  }
  const double pscale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * pscale) {
    throw InvalidArgument("QP: P is not symmetric");
  }
  if (row_rank(Aeq) < Aeq.rows()) {
    throw RankError("QP: equality constraint matrix is not of full row rank");
  }
}

double qp_kkt_residual(const QpProblem& problem, const VectorXd& x,
                       const VectorXd& nu, const VectorXd& mu) {
  const double scale = std::max(
      {1.0, problem.P.size() ? problem.P.cwiseAbs().maxCoeff() : 0.0,
       inf_norm(problem.f)});
  VectorXd stat = problem.P * x + problem.f - mu;
  if (problem.Aeq.rows() > 0) stat -= problem.Aeq.transpose() * nu;
  double worst = inf_norm(stat);
  for (Index i = 0; i < x.size(); ++i) {
    const bool bounded =
        !problem.nonneg.empty() && problem.nonneg[static_cast<std::size_t>(i)];
    if (bounded) {
      worst = std::max(worst, -mu(i));
      worst = std::max(worst, std::abs(mu(i) * x(i)));
    } else {
      worst = std::max(worst, std::abs(mu(i)));
    }
  }
  return worst / scale;
}

QpSolution solve_qp(const QpProblem& problem, const QpOptions& options) {
  problem.validate();
  const Index n = problem.size();
  const Index p = problem.Aeq.rows();
  std::vector<bool> bounded = problem.nonneg;
  if (bounded.empty()) bounded.assign(static_cast<std::size_t>(n), false);
  const int max_iter = options.max_iter > 0
                           ? options.max_iter
                           : static_cast<int>(50 * (n + p) + 1000);

  const MatrixXd& A = problem.Aeq;
  const VectorXd& b = problem.beq;
  const double bscale = 1.0 + inf_norm(b);

  // Phase 1: minimize 1/2 |Ax - b|^2 over the bounds, starting at zero.
  VectorXd x = VectorXd::Zero(n);
  std::vector<bool> fixed = bounded;
  int used = 0;
  if (p > 0) {
    const MatrixXd P1 = A.transpose() * A;
    const VectorXd f1 = -A.transpose() * b;
    const double s1 = std::max({1.0, P1.cwiseAbs().maxCoeff(), inf_norm(f1)});
    auto phase1 = active_set(P1 / s1, f1 / s1, MatrixXd(0, n), bounded, x,
                             fixed, max_iter, 0);
    used = phase1.iterations;
    if (!phase1.converged) {
      throw NonConvergenceError("QP phase 1 exceeded the iteration limit",
                                phase1.x, inf_norm(b - A * phase1.x));
    }
    x = phase1.x;
    const VectorXd y = b - A * x;
    if (inf_norm(y) > options.feas_tol * bscale) {
      throw InfeasibleError(
          "QP constraints are infeasible (residual " +
              std::to_string(inf_norm(y)) + ")",
          y / std::max(inf_norm(y), 1e-300));
    }
    for (Index i = 0; i < n; ++i) {
      fixed[static_cast<std::size_t>(i)] =
          bounded[static_cast<std::size_t>(i)] && x(i) <= 0.0;
      if (fixed[static_cast<std::size_t>(i)]) x(i) = 0.0;
    }
    ensure_full_rank(A, fixed);
    restore_feasibility(A, b, fixed, x);
  }

  // Phase 2 on the cost-scaled problem.
  const double scale = std::max(
      {1.0, problem.P.cwiseAbs().maxCoeff(), inf_norm(problem.f)});
  const MatrixXd Ps = problem.P / scale;
  const VectorXd fs = problem.f / scale;
  auto phase2 = active_set(Ps, fs, A, bounded, x, fixed, max_iter - used, used);
  if (!phase2.converged) {
    throw NonConvergenceError("QP exceeded the iteration limit", phase2.x,
                              inf_norm(b - A * phase2.x));
  }

  QpSolution sol;
  sol.x = std::move(phase2.x);
  {
    std::vector<bool> pinned(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
      pinned[static_cast<std::size_t>(i)] =
          bounded[static_cast<std::size_t>(i)] && sol.x(i) == 0.0;
    }
    restore_feasibility(A, b, pinned, sol.x);
  }
  sol.eq_multipliers = phase2.nu * scale;
  sol.bound_multipliers = phase2.mu * scale;
  sol.iterations = phase2.iterations;
  sol.ridge_added = phase2.ridge_added;
  sol.obj = 0.5 * sol.x.dot(problem.P * sol.x) + problem.f.dot(sol.x);
  sol.feas_residual = p > 0 ? inf_norm(A * sol.x - b) : 0.0;
  for (Index i = 0; i < n; ++i) {
    if (bounded[static_cast<std::size_t>(i)]) {
      sol.feas_residual = std::max(sol.feas_residual, -sol.x(i));
    }
  }
  sol.kkt_residual = qp_kkt_residual(problem, sol.x, sol.eq_multipliers,
                                     sol.bound_multipliers);
  if (sol.feas_residual > options.feas_tol * bscale ||
      sol.kkt_residual > options.kkt_tol) {
    throw NonConvergenceError(
        "QP solution failed its certificate (feasibility " +
            std::to_string(sol.feas_residual) + ", KKT " +
            std::to_string(sol.kkt_residual) + ")",
        sol.x, std::max(sol.feas_residual, sol.kkt_residual));
  }
  return sol;
}

}  // namespace trendbal
