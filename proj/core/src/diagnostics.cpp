#include "trendbal/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "trendbal/error.hpp"

namespace trendbal {
namespace {

double t_p_value(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))),
                    0.0, 1.0);
}

double f_p_value(double f, double df1, double df2) {
  if (!std::isfinite(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  boost::math::fisher_f dist(df1, df2);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
}

DiagnosticsReport from_fit(TestKind kind, std::vector<std::string> names,
                           const OlsFit& fit, bool caveat) {
  DiagnosticsReport r;
  r.kind = kind;
  r.names = std::move(names);
  r.coefficients = fit.coefficients;
  r.std_errors = fit.std_errors;
  r.t_stats = fit.t_stats;
  r.p_values = fit.p_values;
  r.n_obs = fit.n_obs;
  r.df_resid = fit.df_resid;
  r.caveat = caveat;
  if (kind == TestKind::Compatibility) {
    r.f_stat = fit.f_stat;
    r.f_p_value = fit.f_p_value;
  }
  return r;
}

}  // namespace

std::string_view test_kind_name(TestKind kind) {
  return kind == TestKind::PreTrend ? "pretrend" : "compatibility";
}

OlsFit ols_fit(const MatrixXd& X, const VectorXd& y) {
  const Index n = X.rows();
  const Index k = X.cols();
  if (y.size() != n) throw DimensionError("OLS: y length must match rows of X");
  if (k < 1) throw DimensionError("OLS: design has no columns");
  if (n <= k) {
    throw InsufficientDataError("OLS needs more observations than regressors (n=" +
                                std::to_string(n) + ", k=" + std::to_string(k) + ")");
  }
  if (!X.allFinite() || !y.allFinite()) throw InvalidArgument("OLS: non-finite data");
  const Index dep = first_dependent_row(X.transpose());
  if (dep >= 0) {
    throw RankError("OLS design is rank deficient: column " + std::to_string(dep) +
                        " depends on earlier columns",
                    dep);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  OlsFit fit;
  fit.n_obs = n;
  fit.df_resid = n - k;
  fit.coefficients = qr.solve(y);
  fit.residuals = y - X * fit.coefficients;
  fit.sse = fit.residuals.squaredNorm();
  const double df = static_cast<double>(fit.df_resid);
  const double sigma2 = fit.sse / df;

  // (X'X)^{-1} = P R^{-1} R^{-T} P'.
  const MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
  const MatrixXd cov_perm = Rinv * Rinv.transpose();
  const auto& perm = qr.colsPermutation();
  const MatrixXd cov = perm * cov_perm * perm.transpose();

  fit.std_errors = (sigma2 * cov.diagonal()).cwiseSqrt();
  fit.t_stats.resize(k);
  fit.p_values.resize(k);
  for (Index j = 0; j < k; ++j) {
    const double se = fit.std_errors(j);
    double t;
    if (se > 0) {
      t = fit.coefficients(j) / se;
    } else {
      t = fit.coefficients(j) == 0.0 ? 0.0
                                     : std::copysign(INFINITY, fit.coefficients(j));
    }
    fit.t_stats(j) = t;
    fit.p_values(j) = t_p_value(t, df);
  }

  const double ybar = y.mean();
  const double sst = (y.array() - ybar).square().sum();
  fit.r_squared = sst > 0 ? 1.0 - fit.sse / sst : (fit.sse == 0 ? 1.0 : 0.0);
  if (k > 1) {
    const double q = static_cast<double>(k - 1);
    const double sse_restricted = sst;
    double f;
    if (fit.sse > 0) {
      f = ((sse_restricted - fit.sse) / q) / (fit.sse / df);
    } else {
      f = sse_restricted > 0 ? INFINITY : 0.0;
    }
    fit.f_stat = std::max(0.0, f);
    fit.f_p_value = f_p_value(*fit.f_stat, q, df);
  }
  return fit;
}

DiagnosticsReport pretrend_test(const PanelDataset& data, const VectorXd& w,
                                bool caveat) {
  data.validate();
  if (w.size() != data.controls()) throw DimensionError("weights must have J entries");
  const Index T0 = data.t0;
  if (T0 < 4) {
    throw InsufficientDataError("pre-trend test needs T0 >= 4 (T0=" +
                                std::to_string(T0) + ")");
  }
  const VectorXd gap =
      (data.treated() - data.control_outcomes() * w).head(T0);
  MatrixXd X(T0, 2);
  for (Index t = 0; t < T0; ++t) {
    X(t, 0) = 1.0;
    X(t, 1) = static_cast<double>(t + 1);
  }
  return from_fit(TestKind::PreTrend, {"intercept", "trend"}, ols_fit(X, gap),
                  caveat);
}

DiagnosticsReport pretrend_test(const PanelDataset& data,
                                const WeightSolution& w) {
  return pretrend_test(data, w.w, w.depends_on_pre_outcomes);
}

DiagnosticsReport compatibility_test(const PanelDataset& data,
                                     const VectorXd& w1, const VectorXd& w2,
                                     bool caveat) {
  data.validate();
  if (w1.size() != data.controls() || w2.size() != data.controls()) {
    throw DimensionError("weights must have J entries");
  }
  const Index T = data.periods();
  if (T < 6) {
    throw InsufficientDataError("compatibility test needs T >= 6 (T=" +
                                std::to_string(T) + ")");
  }
  std::vector<std::string> names{"intercept", "time", "after", "after_time"};
  MatrixXd X(T, 4);
  for (Index t = 0; t < T; ++t) {
    const double rel = static_cast<double>(t + 1 - data.t0);
    const double after = t >= data.t0 ? 1.0 : 0.0;
    X(t, 0) = 1.0;
    X(t, 1) = rel;
    X(t, 2) = after;
    X(t, 3) = after * rel;
  }
  const VectorXd dw = w1 - w2;
  if ((dw.array() == 0.0).all()) {
    DiagnosticsReport r;
    r.kind = TestKind::Compatibility;
    r.names = names;
    r.coefficients = VectorXd::Zero(4);
    r.std_errors = VectorXd::Zero(4);
    r.t_stats = VectorXd::Zero(4);
    r.p_values = VectorXd::Ones(4);
    r.f_stat = 0.0;
    r.f_p_value = 1.0;
    r.n_obs = T;
    r.df_resid = T - 4;
    r.caveat = caveat;
    r.warnings.push_back("weights are identical; the regression is degenerate");
    return r;
  }
  const VectorXd d = data.control_outcomes() * dw;
  return from_fit(TestKind::Compatibility, names, ols_fit(X, d), caveat);
}

DiagnosticsReport compatibility_test(const PanelDataset& data,
                                     const WeightSolution& w1,
                                     const WeightSolution& w2) {
  return compatibility_test(data, w1.w, w2.w,
                            w1.depends_on_pre_outcomes || w2.depends_on_pre_outcomes);
}

}  // namespace trendbal
