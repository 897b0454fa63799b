#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "trendbal/panel.hpp"

namespace trendbal {

enum class Method {
  MaxShrink,
  BasisPursuit,
  CRidge,
  CLasso,
  CElasticNet,
  SoftNonneg,
  AdhInner,
};

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

/// Weights over the J untreated units together with the tuning parameters
/// that produced them and their optimality certificate.
struct WeightSolution {
  VectorXd w;
  Method method = Method::MaxShrink;
  double lambda = 0.0;
  double alpha = 1.0;
  double kappa = 1.0;
  double epsilon = 0.0;
  /// |z1 - Zw|_inf.
  double feas_residual = 0.0;
  double kkt_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
  /// QP kernel fell back to a 1e-12 ridge (see QpSolution::ridge_added).
  bool ridge_added = false;
  /// AdhInner only: coefficient of the w'w tie-break term.
  double tie_break_ridge = 0.0;
  /// The weights were computed from pre-treatment outcomes, so regression
  /// diagnostics built on them are descriptive only.
  bool depends_on_pre_outcomes = false;
  std::vector<std::string> warnings;
};

/// Tolerance below which a weight is reported as exactly zero by the l1
/// certificates.
inline constexpr double kZeroWeight = 1e-12;

/// w_a = Z'(ZZ')^{-1} z1, the minimum-norm exactly balancing weights.
WeightSolution max_shrinkage(const CovariateProblem& prob);

/// Minimizes alpha |w|_1 + ((1-alpha)/2 + epsilon) w'w subject to z1 = Zw.
/// The epsilon term makes the minimizer unique when the l1 problem is not.
WeightSolution basis_pursuit(const CovariateProblem& prob,
                             double epsilon = 1e-4, double alpha = 1.0);

/// Constrained ridge: min (q1-Qw)'(q1-Qw) + lambda w'w s.t. z1 = Zw, via
/// the closed form with G = Q'Q + lambda I. lambda = 0 requires Q'Q
/// nonsingular.
WeightSolution constrained_ridge(const CovariateProblem& prob, double lambda);

/// The same estimator assembled as w_a plus an unconstrained ridge fit of
/// the balancing covariates after partialing Z out. Independent check on
/// constrained_ridge.
WeightSolution ridge_decomposition(const CovariateProblem& prob,
                                   double lambda);

/// Constrained lasso: min 1/2 |q1-Qw|^2 + lambda |w|_1 s.t. z1 = Zw.
WeightSolution constrained_lasso(const CovariateProblem& prob, double lambda);

/// min 1/2 |q1-Qw|^2 + lambda((1-alpha)/2 w'w + alpha |w|_1) s.t. z1 = Zw,
/// solved as a constrained lasso on (q1, Q) augmented by
/// sqrt(lambda(1-alpha)) I.
WeightSolution constrained_elastic_net(const CovariateProblem& prob,
                                       double lambda, double alpha);

/// Lasso whose negative parts cost kappa times more than positive parts.
WeightSolution soft_nonneg_lasso(const CovariateProblem& prob, double lambda,
                                 double kappa);

/// Synthetic-control inner loop for a fixed diagonal V: minimizes
/// (z1-Zw)'V(z1-Zw) + 1e-10 w'w over the unit simplex. Rows of Z that are
/// all ones (the intercept) are excluded from the objective. An empty
/// `v_diag` puts unit weight on every other row; otherwise it must have one
/// entry per row of Z.
WeightSolution adh_inner(const CovariateProblem& prob,
                         const VectorXd& v_diag = {});

/// Certificate for min 1/2|q1-Qw|^2 + rho/2 w'w + sum_j (pos w_j^+ + neg
/// w_j^-) s.t. z1 = Zw, given equality multipliers nu. Returns the worst
/// subgradient violation divided by max(1, pos, neg, |Q'q1|_inf).
double l1_kkt_residual(const VectorXd& q1, const MatrixXd& Q,
                       const MatrixXd& Z, const VectorXd& w,
                       const VectorXd& nu, double rho, double pos,
                       double neg);

}  // namespace trendbal
