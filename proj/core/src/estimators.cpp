#include "trendbal/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/QR>

#include "trendbal/error.hpp"
#include "trendbal/qp.hpp"

namespace trendbal {
namespace {

constexpr double kWeightTol = 1e-10;

void check_w(const PanelDataset& data, const VectorXd& w) {
  if (w.size() != data.controls()) {
    throw DimensionError("weight vector has " + std::to_string(w.size()) +
                         " entries but the panel has J=" +
                         std::to_string(data.controls()) + " controls");
  }
}

std::vector<Index> resolve_subset(const PanelDataset& data,
                                  const std::vector<Index>& subset) {
  std::vector<Index> s = subset;
  if (s.empty()) {
    s.resize(static_cast<std::size_t>(data.controls()));
    std::iota(s.begin(), s.end(), 0);
  }
  for (Index j : s) {
    if (j < 0 || j >= data.controls()) {
      throw LookupError("control index " + std::to_string(j) + " out of range");
    }
  }
  return s;
}

MatrixXd pre_controls(const PanelDataset& data, const std::vector<Index>& s) {
  MatrixXd X(data.t0, static_cast<Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) {
    X.col(static_cast<Index>(k)) = data.outcomes.col(s[k] + 1).head(data.t0);
  }
  return X;
}

VectorXd demean(const VectorXd& v) {
  return v.array() - v.mean();
}

MatrixXd demean_cols(const MatrixXd& m) {
  return m.rowwise() - m.colwise().mean();
}

void finish_fit(const PanelDataset& data, InterceptFit& fit) {
  const VectorXd y = data.treated().head(data.t0);
  const MatrixXd Y = data.control_outcomes().topRows(data.t0);
  fit.c = (y - Y * fit.w).mean();
  fit.residual_sse = (y.array() - fit.c - (Y * fit.w).array()).square().sum();
}

}  // namespace

VectorXd default_ate_weights(Index T0, Index T) {
  VectorXd c(T);
  c.head(T0).setConstant(-1.0 / static_cast<double>(T0));
  c.tail(T - T0).setConstant(1.0 / static_cast<double>(T - T0));
  return c;
}

void check_ate_weights(const VectorXd& c, Index T0) {
  if (T0 < 1 || T0 >= c.size()) {
    throw WeightContractError("ATE weights must cover both pre and post periods");
  }
  const auto pre = c.head(T0);
  const auto post = c.tail(c.size() - T0);
  if (!c.allFinite()) throw WeightContractError("ATE weights must be finite");
  if (pre.maxCoeff() > kWeightTol) {
    throw WeightContractError("pre-treatment ATE weights must be <= 0");
  }
  if (post.minCoeff() < -kWeightTol) {
    throw WeightContractError("post-treatment ATE weights must be >= 0");
  }
  if (std::abs(pre.sum() + 1.0) > kWeightTol) {
    throw WeightContractError("pre-treatment ATE weights must sum to -1");
  }
  if (std::abs(post.sum() - 1.0) > kWeightTol) {
    throw WeightContractError("post-treatment ATE weights must sum to 1");
  }
}

EffectEstimate did_effects(const PanelDataset& data, const VectorXd& w,
                           const DidOptions& options) {
  data.validate();
  check_w(data, w);
  const Index T = data.periods();
  const Index T0 = data.t0;
  EffectEstimate e;
  e.w = w;
  e.gap_series = data.treated() - data.control_outcomes() * w;
  const double pre_mean = e.gap_series.head(T0).mean();
  if (options.reference == PreReference::Single) {
    if (options.single_period < 0 || options.single_period >= T0) {
      throw InvalidArgument("single reference period must be pre-treatment");
    }
    e.pre_reference = e.gap_series(options.single_period);
  } else {
    e.pre_reference = pre_mean;
  }
  e.tau_by_period = e.gap_series.tail(T - T0).array() - e.pre_reference;
  e.intercept = options.zero_intercept ? 0.0 : pre_mean;
  e.counterfactual =
      (data.control_outcomes() * w).array() + e.intercept;
  e.c_weights = options.c_weights ? *options.c_weights
                                  : default_ate_weights(T0, T);
  if (e.c_weights.size() != T) {
    throw WeightContractError("ATE weights need one entry per period");
  }
  check_ate_weights(e.c_weights, T0);
  e.ate = e.c_weights.dot(e.gap_series);
  return e;
}

EffectEstimate did_effects(const PanelDataset& data, const WeightSolution& w,
                           const DidOptions& options) {
  auto e = did_effects(data, w.w, options);
  e.label = std::string(method_name(w.method));
  return e;
}

double ate(const EffectEstimate& effects, const std::optional<VectorXd>& c) {
  if (!c) return effects.c_weights.dot(effects.gap_series);
  if (c->size() != effects.gap_series.size()) {
    throw WeightContractError("ATE weights need one entry per period");
  }
  const Index T0 = effects.gap_series.size() - effects.tau_by_period.size();
  check_ate_weights(*c, T0);
  return c->dot(effects.gap_series);
}

VectorXd counterfactual(const PanelDataset& data, const VectorXd& w,
                        bool zero_intercept) {
  check_w(data, w);
  const VectorXd fitted = data.control_outcomes() * w;
  const double c0 =
      zero_intercept ? 0.0 : (data.treated() - fitted).head(data.t0).mean();
  return fitted.array() + c0;
}

InterceptFit hcw_ols(const PanelDataset& data, const std::vector<Index>& subset,
                     const std::optional<BalanceConstraint>& constraint) {
  data.validate();
  InterceptFit fit;
  fit.subset = resolve_subset(data, subset);
  const Index n = static_cast<Index>(fit.subset.size());
  const Index T0 = data.t0;
  const MatrixXd X = demean_cols(pre_controls(data, fit.subset));
  const VectorXd y = demean(data.treated().head(T0));

  VectorXd ws;
  if (!constraint) {
    if (T0 <= n + 1) {
      throw RankError("HCW regression needs T0 > J_subset + 1 (T0=" +
                      std::to_string(T0) + ", regressors=" +
                      std::to_string(n) + "); select a smaller subset");
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < n) {
      throw RankError("HCW design is rank deficient; select a subset of "
                      "controls with linearly independent pre-period paths");
    }
    ws = qr.solve(y);
  } else {
    const auto& con = *constraint;
    if (con.lhs.cols() != data.controls() || con.lhs.rows() != con.rhs.size()) {
      throw DimensionError("HCW constraint must be (K+1) x J with matching rhs");
    }
    MatrixXd C(con.lhs.rows(), n);
    for (Index k = 0; k < n; ++k) {
      C.col(k) = con.lhs.col(fit.subset[static_cast<std::size_t>(k)]);
    }
    const Index dep = first_dependent_row(C);
    if (dep >= 0) {
      throw RankError("HCW constraint rows are dependent on the subset", dep);
    }
    // w = w0 + N v with N spanning null(C).
    Eigen::ColPivHouseholderQR<MatrixXd> cq(C.transpose());
    const MatrixXd Qc = cq.householderQ();
    const Index p = C.rows();
    const MatrixXd N = Qc.rightCols(n - p);
    const VectorXd w0 =
        C.transpose() * (C * C.transpose()).llt().solve(con.rhs);
    const MatrixXd XN = X * N;
    if (T0 <= (n - p) + 1) {
      throw RankError("constrained HCW regression needs T0 > J_subset - K");
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(XN);
    qr.setThreshold(1e-10);
    if (qr.rank() < XN.cols()) {
      throw RankError("constrained HCW design is rank deficient; select a "
                      "smaller subset");
    }
    ws = w0 + N * qr.solve(y - X * w0);
  }
  fit.w = VectorXd::Zero(data.controls());
  for (Index k = 0; k < n; ++k) fit.w(fit.subset[static_cast<std::size_t>(k)]) = ws(k);
  finish_fit(data, fit);
  return fit;
}

std::vector<Index> hcw_select_subset(const PanelDataset& data, Index k) {
  const Index J = data.controls();
  if (k < 1) throw InvalidArgument("subset size must be positive");
  k = std::min(k, J);
  const VectorXd y = demean(data.treated().head(data.t0));
  std::vector<std::pair<double, Index>> score;
  for (Index j = 0; j < J; ++j) {
    const VectorXd x = demean(data.outcomes.col(j + 1).head(data.t0));
    const double denom = std::sqrt(x.squaredNorm() * y.squaredNorm());
    score.emplace_back(denom > 0 ? x.dot(y) / denom : -2.0, j);
  }
  std::stable_sort(score.begin(), score.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Index> out;
  for (Index i = 0; i < k; ++i) out.push_back(score[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

InterceptFit di_elastic_net(const PanelDataset& data, double lambda,
                            double alpha) {
  data.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("lambda must be a finite nonnegative number");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("alpha must lie in [0, 1]");
  }
  const Index J = data.controls();
  const Index T0 = data.t0;
  const double t0 = static_cast<double>(T0);
  // The unpenalized intercept is profiled out by centering.
  const MatrixXd X = demean_cols(data.control_outcomes().topRows(T0));
  const VectorXd y = demean(data.treated().head(T0));
  MatrixXd G = X.transpose() * X / t0;
  G.diagonal().array() += lambda * (1.0 - alpha);
  const VectorXd c = X.transpose() * y / t0;
  const double l1 = lambda * alpha;

  QpProblem qp;
  qp.Aeq = MatrixXd(0, l1 > 0 ? 2 * J : J);
  qp.beq = VectorXd(0);
  if (l1 > 0) {
    qp.P.resize(2 * J, 2 * J);
    qp.P << G, -G, -G, G;
    qp.f.resize(2 * J);
    qp.f << -c + VectorXd::Constant(J, l1), c + VectorXd::Constant(J, l1);
    qp.nonneg.assign(static_cast<std::size_t>(2 * J), true);
  } else {
    qp.P = G;
    qp.f = -c;
  }
  QpSolution sol;
  try {
    sol = solve_qp(qp);
  } catch (const Error& e) {
    if (l1 == 0.0 && lambda == 0.0) {
      throw RankError(std::string("DI with lambda=0 is an unpenalized "
                                  "regression and its design is singular: ") +
                      e.what());
    }
    throw;
  }
  InterceptFit fit;
  fit.subset.resize(static_cast<std::size_t>(J));
  std::iota(fit.subset.begin(), fit.subset.end(), 0);
  fit.w = l1 > 0 ? VectorXd(sol.x.head(J) - sol.x.tail(J)) : sol.x;
  fit.iterations = sol.iterations;
  const double root = 1.0 / std::sqrt(t0);
  fit.kkt_residual = l1_kkt_residual(y * root, X * root, MatrixXd(0, J), fit.w,
                                     VectorXd(0), lambda * (1.0 - alpha), l1, l1);
  finish_fit(data, fit);
  return fit;
}

VectorXd fit_counterfactual(const PanelDataset& data, const InterceptFit& fit) {
  check_w(data, fit.w);
  return (data.control_outcomes() * fit.w).array() + fit.c;
}

}  // namespace trendbal
