#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trendbal/panel.hpp"
#include "trendbal/solvers.hpp"

namespace trendbal {

/// Per-period effects and their summaries for one weight vector.
struct EffectEstimate {
  /// Post-period effects, T1 entries.
  VectorXd tau_by_period;
  double ate = 0.0;
  /// ATE weights over all T periods.
  VectorXd c_weights;
  /// c0 + Y_t'w for every period.
  VectorXd counterfactual;
  /// y1_t - Y_t'w for every period.
  VectorXd gap_series;
  /// Level added to the counterfactual for presentation.
  double intercept = 0.0;
  /// The reference the gap was differenced against.
  double pre_reference = 0.0;
  VectorXd w;
  std::string label;
};

/// Intercept and slope of a regression-style counterfactual c + Y_t'w.
/// `w` always has J entries; units outside the regression subset get zero.
struct InterceptFit {
  double c = 0.0;
  VectorXd w;
  double residual_sse = 0.0;
  std::vector<Index> subset;
  double kkt_residual = 0.0;
  int iterations = 0;
};

enum class PreReference { Mean, Single };

struct DidOptions {
  PreReference reference = PreReference::Mean;
  /// Period index used with PreReference::Single; must be pre-treatment.
  Index single_period = -1;
  /// Present the counterfactual without the level shift c0.
  bool zero_intercept = false;
  /// Custom ATE weights (length T); default -1/T0 pre, 1/T1 post.
  std::optional<VectorXd> c_weights;
};

EffectEstimate did_effects(const PanelDataset& data, const VectorXd& w,
                           const DidOptions& options = {});
EffectEstimate did_effects(const PanelDataset& data, const WeightSolution& w,
                           const DidOptions& options = {});

/// -1/T0 on pre-periods, 1/T1 on post-periods.
VectorXd default_ate_weights(Index T0, Index T);

/// Throws WeightContractError unless pre entries are <= 0 summing to -1 and
/// post entries are >= 0 summing to 1 (tolerance 1e-10).
void check_ate_weights(const VectorXd& c, Index T0);

/// c'(y1 - Yw) using the estimate's weights or the supplied ones.
double ate(const EffectEstimate& effects,
           const std::optional<VectorXd>& c = std::nullopt);

/// c0 + Y_t'w with c0 the mean pre-period gap, or zero when requested.
VectorXd counterfactual(const PanelDataset& data, const VectorXd& w,
                        bool zero_intercept = false);

/// Exact-balancing restriction for the regression baselines, over all J
/// controls (columns outside the subset are dropped).
struct BalanceConstraint {
  VectorXd rhs;
  MatrixXd lhs;
};

/// Pre-period least squares of y1 on an intercept and the controls in
/// `subset` (all when empty), optionally subject to lhs w = rhs.
InterceptFit hcw_ols(const PanelDataset& data,
                     const std::vector<Index>& subset = {},
                     const std::optional<BalanceConstraint>& constraint =
                         std::nullopt);

/// The k controls (0-based, among 0..J-1) whose pre-period outcomes
/// correlate most with the treated unit, ordered by index.
std::vector<Index> hcw_select_subset(const PanelDataset& data, Index k);

/// Unconstrained elastic net with an unpenalized intercept:
///   (1/(2 T0)) sum_t (y1_t - c - Y_t'w)^2
///     + lambda ((1-alpha)/2 |w|_2^2 + alpha |w|_1).
InterceptFit di_elastic_net(const PanelDataset& data, double lambda = 0.01,
                            double alpha = 0.9);

/// c + Y_t'w for every period.
VectorXd fit_counterfactual(const PanelDataset& data, const InterceptFit& fit);

}  // namespace trendbal
