#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trendbal/panel.hpp"
#include "trendbal/solvers.hpp"

namespace trendbal {

/// Least squares with classical (homoskedastic) inference.
struct OlsFit {
  VectorXd coefficients;
  VectorXd std_errors;
  VectorXd t_stats;
  /// Two-sided Student-t p-values.
  VectorXd p_values;
  VectorXd residuals;
  double sse = 0.0;
  double r_squared = 0.0;
  Index n_obs = 0;
  Index df_resid = 0;
  /// Joint test that every coefficient but the intercept (column 0) is
  /// zero; absent when the design has no other column.
  std::optional<double> f_stat;
  std::optional<double> f_p_value;
};

/// X must have full column rank and more rows than columns; column 0 is
/// treated as the intercept for the F test.
OlsFit ols_fit(const MatrixXd& X, const VectorXd& y);

enum class TestKind { PreTrend, Compatibility };

struct DiagnosticsReport {
  TestKind kind = TestKind::PreTrend;
  std::vector<std::string> names;
  VectorXd coefficients;
  VectorXd std_errors;
  VectorXd t_stats;
  VectorXd p_values;
  std::optional<double> f_stat;
  std::optional<double> f_p_value;
  Index n_obs = 0;
  Index df_resid = 0;
  /// Set when the weights were computed from pre-treatment outcomes; the
  /// statistics are then descriptive rather than valid tests.
  bool caveat = false;
  std::vector<std::string> warnings;
};

/// Gap y1_t - Y_t'w regressed on (1, t) over the pre-treatment periods,
/// t = 1..T0. Needs T0 >= 4.
DiagnosticsReport pretrend_test(const PanelDataset& data, const VectorXd& w,
                                bool caveat = false);
DiagnosticsReport pretrend_test(const PanelDataset& data,
                                const WeightSolution& w);

/// Y_t'(w1 - w2) regressed on (1, t-T0, after_t, after_t (t-T0)) over all
/// periods, with the joint F test of the last three terms. Needs T >= 6.
DiagnosticsReport compatibility_test(const PanelDataset& data,
                                     const VectorXd& w1, const VectorXd& w2,
                                     bool caveat = false);
DiagnosticsReport compatibility_test(const PanelDataset& data,
                                     const WeightSolution& w1,
                                     const WeightSolution& w2);

std::string_view test_kind_name(TestKind kind);

}  // namespace trendbal
