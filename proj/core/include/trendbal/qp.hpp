#pragma once

#include <vector>

#include <Eigen/Core>

namespace trendbal {

/// Convex quadratic program
///
///     minimize    1/2 x'Px + f'x
///     subject to  Aeq x = beq,   x_i >= 0 for every i with nonneg[i].
///
/// P must be symmetric positive semidefinite; Aeq must have full row rank.
struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd f;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  std::vector<bool> nonneg;

  Eigen::Index size() const { return f.size(); }
  void validate() const;
};

struct QpOptions {
  double feas_tol = 1e-9;
  double kkt_tol = 1e-7;
  /// Active-set iteration cap; 0 selects 50*(n+p)+1000.
  int max_iter = 0;
};

/// Multipliers follow L = 1/2 x'Px + f'x - nu'(Aeq x - beq) - mu'x, so at a
/// solution Px + f - Aeq'nu - mu = 0 with mu >= 0 on bounded coordinates.
struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd bound_multipliers;
  double obj = 0.0;
  /// Infinity norm of stationarity, dual-sign and complementarity
  /// violations, divided by the cost scale max(1, |P|max, |f|inf).
  double kkt_residual = 0.0;
  double feas_residual = 0.0;
  int iterations = 0;
  /// True when the reduced-Hessian eigensolver failed and a 1e-12 ridge was
  /// added to P to finish the solve.
  bool ridge_added = false;
};

/// Solves the QP with a primal active-set method. Steps are taken in the
/// null space of the active constraints; zero-curvature directions of a
/// singular reduced Hessian are followed until a bound blocks them, so
/// positive semidefinite P needs no regularization.
///
/// Throws InfeasibleError with a Farkas certificate when the constraints
/// admit no point, NonConvergenceError when max_iter is exceeded, and
/// InvalidArgument / RankError for malformed problems.
QpSolution solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Scaled KKT residual of a candidate primal/dual triple (see QpSolution).
double qp_kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& nu, const Eigen::VectorXd& mu);

}  // namespace trendbal
