#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trendbal/panel.hpp"
#include "trendbal/random.hpp"
#include "trendbal/solvers.hpp"

namespace trendbal {

enum class DgpKind {
  /// Heterogeneous trends driven by K unit covariates.
  Trending,
  /// y = mu_i + gamma_t + u_it with iid gamma_t and u_it.
  CommonTime,
};

/// Trending variant B holds every trend coefficient at its T0 value before
/// treatment.
enum class Variant { A, B };

struct SimulationConfig {
  DgpKind dgp = DgpKind::Trending;
  /// Number of untreated units; the panel has J+1 units, unit 1 treated.
  Index J = 38;
  Index T0 = 20;
  Index T1 = 10;
  Index K = 4;
  Variant variant = Variant::A;
  double noise_scale = 0.1;
  double ar_coef = 0.2;
  /// The AR(1) noise starts from zero at period -burn_in.
  Index burn_in = 10;
  std::uint64_t seed = 1;
  /// CommonTime only.
  double sigma_gamma = 1.0;
  double sigma_u = 1.0;
  /// Effect added to the treated unit in post periods: empty for none, one
  /// entry for a constant, or T1 entries.
  VectorXd tau;

  Index periods() const { return T0 + T1; }
  void validate() const;
};

/// Components the outcomes were built from. Outcomes equal
/// mu_i + gamma(t,0) + sum_k gamma(t,k) z(k,i) + u(t,i), plus tau for the
/// treated unit after T0 (CommonTime uses gamma(t,0) only).
struct SimulationTruth {
  VectorXd mu;     // J+1
  MatrixXd gamma;  // T x (K+1)
  MatrixXd z;      // K x (J+1)
  MatrixXd u;      // T x (J+1)
  MatrixXd y0;     // T x (J+1) untreated outcomes
  VectorXd tau;    // T1
};

struct SimulationResult {
  PanelDataset data;
  SimulationTruth truth;
};

SimulationResult simulate_dgp(const SimulationConfig& config);

/// T x n AR(1) paths scaled by `scale`: v(t) = rho v(t-1) + e(t) with
/// v = 0 at period -burn_in and e standard normal, drawn column by column.
MatrixXd ar1_noise(Rng& rng, Index T, Index n, double rho, Index burn_in,
                   double scale);

/// Trending covariates (1, z_i) of a simulated panel as a problem with no
/// balancing rows.
CovariateProblem truth_problem(const SimulationResult& sim);

enum class BenchKind { Weights, DI, HCW, HCWConstrained };

struct MethodConfig {
  std::string label;
  BenchKind kind = BenchKind::Weights;
  Method method = Method::CRidge;
  double lambda = 2.0;
  double alpha = 1.0;
  double kappa = 10.0;
  double epsilon = 1e-4;
  /// Regression baselines: 0 uses every control when the regression is
  /// identified and otherwise the most correlated ones (see
  /// resolve_hcw_subset).
  Index subset = 0;

  /// `name[:key=value]...`, e.g. `cridge:lambda=4`, `di:alpha=0.5`,
  /// `hcw:k=5`. Names: maxshrink, basispursuit, cridge, classo,
  /// celasticnet, softnonneg, adhinner, di, hcw, hcwc.
  static MethodConfig parse(std::string_view text);
  std::string describe() const;
};

/// Controls used by a regression baseline on `data`.
std::vector<Index> resolve_hcw_subset(const PanelDataset& data,
                                      const MethodConfig& m,
                                      Index constraint_rows);

struct MethodOutcome {
  bool ok = false;
  std::string error;
  double post_rmse = 0.0;
  double pre_rmse = 0.0;
  double ate = 0.0;
  double one_minus_sum_w = 0.0;
  VectorXd counterfactual;
  /// Counterfactual minus the true untreated outcome of the treated unit.
  VectorXd error_series;
};

struct MethodSummary {
  double median_post_rmse = 0.0;
  double median_pre_rmse = 0.0;
  double mean_post_rmse = 0.0;
  double mean_one_minus_sum_w = 0.0;
  double mean_ate = 0.0;
  Index failures = 0;
  /// Mean over seeds of counterfactual minus true untreated outcome.
  VectorXd bias;
};

struct BenchmarkReport {
  SimulationConfig config;
  std::vector<MethodConfig> methods;
  std::vector<std::uint64_t> seeds;
  /// outcomes[s][m] for seed s and method m.
  std::vector<std::vector<MethodOutcome>> outcomes;
  std::vector<MethodSummary> summary;
};

/// Fits one method on a simulated panel using the true trending covariates
/// and the pre-treatment outcomes as balancing covariates.
MethodOutcome run_method(const SimulationResult& sim, const MethodConfig& m);

/// Seeds config.seed, config.seed+1, ...; run in parallel up to
/// worker_count() threads and merged in seed order.
BenchmarkReport run_benchmark(const SimulationConfig& config,
                              const std::vector<MethodConfig>& methods,
                              Index n_seeds);

/// Hardware concurrency capped by the TRENDBAL_THREADS environment variable.
unsigned worker_count();

}  // namespace trendbal
