#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "trendbal/error.hpp"
#include "trendbal/estimators.hpp"
#include "trendbal/simulation.hpp"

using namespace trendbal;

namespace {

SimulationResult zero_noise(Index J, std::uint64_t seed, VectorXd tau = {}) {
  SimulationConfig c;
  c.J = J;
  c.noise_scale = 0.0;
  c.seed = seed;
  c.tau = std::move(tau);
  return simulate_dgp(c);
}

PanelDataset shifted(const PanelDataset& d, double all, double treated_only) {
  MatrixXd y = d.outcomes.array() + all;
  y.col(0).array() += treated_only;
  return PanelDataset::make(y, d.unit_labels, d.period_labels, d.t0);
}

PanelDataset random_panel(std::mt19937_64& gen, Index T, Index units, Index t0) {
  std::vector<std::string> u, p;
  for (Index j = 0; j < units; ++j) u.push_back("u" + std::to_string(j));
  for (Index t = 0; t < T; ++t) p.push_back(std::to_string(t + 1));
  return PanelDataset::make(oracle::normals(gen, T, units), u, p, t0);
}

double di_objective(const PanelDataset& d, double c, const VectorXd& w,
                    double lambda, double alpha) {
  const Index T0 = d.t0;
  const VectorXd r = d.treated().head(T0).array() - c -
                     (d.control_outcomes().topRows(T0) * w).array();
  return r.squaredNorm() / (2.0 * T0) +
         lambda * ((1 - alpha) / 2 * w.squaredNorm() + alpha * w.cwiseAbs().sum());
}

}  // namespace

TEST(Did, ExactRecoveryWithoutNoise) {
  VectorXd tau = VectorXd::LinSpaced(10, 0.5, 5.0);
  const auto sim = zero_noise(38, 3, tau);
  const auto prob = truth_problem(sim);
  std::mt19937_64 gen(1);
  // Any feasible weights cancel the trends exactly.
  for (const auto& w : oracle::sample_feasible(prob.Z, prob.z1, 5, gen)) {
    const auto e = did_effects(sim.data, w);
    EXPECT_LE((e.tau_by_period - tau).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(e.ate, tau.mean(), 1e-10);
    const auto single = did_effects(sim.data, w, {PreReference::Single, 4});
    EXPECT_LE((single.tau_by_period - tau).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Did, CommonShiftChangesNothing) {
  std::mt19937_64 gen(2);
  const auto d = random_panel(gen, 12, 7, 8);
  VectorXd w = oracle::normals(gen, 6);
  w /= w.sum();
  const auto a = did_effects(d, w);
  const auto b = did_effects(shifted(d, 10.0, 0.0), w);
  EXPECT_LE((a.tau_by_period - b.tau_by_period).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Did, AteWeights) {
  std::mt19937_64 gen(3);
  const auto d = random_panel(gen, 10, 5, 6);
  const VectorXd w = VectorXd::Constant(4, 0.25);
  const auto e = did_effects(d, w);
  EXPECT_NEAR(e.ate, e.tau_by_period.mean(), 1e-12);
  EXPECT_NEAR(e.ate, e.c_weights.dot(e.gap_series), 1e-12);
  EXPECT_NEAR(e.c_weights.head(6).sum(), -1.0, 1e-15);
  EXPECT_NEAR(e.c_weights.tail(4).sum(), 1.0, 1e-15);
  VectorXd c = default_ate_weights(6, 10);
  c.tail(4) << 0, 0, 1, 0;
  EXPECT_NEAR(ate(e, c), e.tau_by_period(2), 1e-12);
  VectorXd bad = c;
  bad(0) = 0.1;
  EXPECT_THROW(ate(e, bad), WeightContractError);
  bad = c;
  bad(8) = 0.5;
  EXPECT_THROW(ate(e, bad), WeightContractError);
  EXPECT_THROW(ate(e, VectorXd::Zero(3)), WeightContractError);
}

TEST(Did, AteLinearity) {
  std::mt19937_64 gen(4);
  const auto d1 = random_panel(gen, 10, 5, 6);
  const auto d2 = random_panel(gen, 10, 5, 6);
  const VectorXd w = oracle::normals(gen, 4);
  const auto sum = PanelDataset::make(2.0 * d1.outcomes + 3.0 * d2.outcomes,
                                      d1.unit_labels, d1.period_labels, 6);
  EXPECT_NEAR(did_effects(sum, w).ate,
              2.0 * did_effects(d1, w).ate + 3.0 * did_effects(d2, w).ate, 1e-11);
  const auto e = did_effects(d1, w);
  VectorXd c1 = default_ate_weights(6, 10), c2 = c1;
  c2.tail(4) << 0.7, 0.1, 0.1, 0.1;
  EXPECT_NEAR(ate(e, VectorXd(0.3 * c1 + 0.7 * c2)),
              0.3 * ate(e, c1) + 0.7 * ate(e, c2), 1e-12);
}

TEST(Counterfactual, InterceptAbsorbsTreatedShift) {
  std::mt19937_64 gen(5);
  const auto d = random_panel(gen, 9, 6, 5);
  const VectorXd w = VectorXd::Constant(5, 0.2);
  const VectorXd a = counterfactual(d, w);
  const VectorXd b = counterfactual(shifted(d, 0.0, 5.0), w);
  EXPECT_LE((b - a).array().abs().maxCoeff() - 5.0, 1e-12);
  EXPECT_LE(((b - a).array() - 5.0).abs().maxCoeff(), 1e-12);
  const VectorXd z = counterfactual(d, w, true);
  EXPECT_LE((z - d.control_outcomes() * w).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Counterfactual, PerfectPreFitHasZeroIntercept) {
  std::mt19937_64 gen(6);
  auto d = random_panel(gen, 9, 4, 5);
  const VectorXd w = (VectorXd(3) << 0.5, 0.3, 0.2).finished();
  d.outcomes.col(0).head(5) = d.control_outcomes().topRows(5) * w;
  const auto e = did_effects(d, w);
  EXPECT_NEAR(e.intercept, 0.0, 1e-14);
  EXPECT_LE((e.counterfactual.head(5) - d.treated().head(5)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Hcw, CollinearSlopeRecovered) {
  std::mt19937_64 gen(7);
  auto d = random_panel(gen, 10, 2, 7);
  d.outcomes.col(0) = 3.0 + 1.7 * d.outcomes.col(1).array();
  const auto fit = hcw_ols(d);
  EXPECT_NEAR(fit.w(0), 1.7, 1e-12);
  EXPECT_NEAR(fit.c, 3.0, 1e-12);
  EXPECT_NEAR(fit.residual_sse, 0.0, 1e-20);
}

TEST(Hcw, ResidualsOrthogonalAndConstrainedFitsWorse) {
  std::mt19937_64 gen(8);
  const auto d = random_panel(gen, 30, 6, 25);
  const auto fit = hcw_ols(d);
  const VectorXd r = d.treated().head(25).array() - fit.c -
                     (d.control_outcomes().topRows(25) * fit.w).array();
  EXPECT_NEAR(r.sum(), 0.0, 1e-11);
  EXPECT_LE((d.control_outcomes().topRows(25).transpose() * r).cwiseAbs().maxCoeff(), 1e-10);
  // Normal-equations oracle with an explicit intercept column.
  MatrixXd X(25, 6);
  X << VectorXd::Ones(25), d.control_outcomes().topRows(25);
  const VectorXd beta = oracle::normal_equations(X, d.treated().head(25));
  EXPECT_NEAR(beta(0), fit.c, 1e-9);
  EXPECT_LE((beta.tail(5) - fit.w).cwiseAbs().maxCoeff(), 1e-9);
  const auto con = hcw_ols(d, {}, BalanceConstraint{VectorXd::Ones(1), MatrixXd::Ones(1, 5)});
  EXPECT_NEAR(con.w.sum(), 1.0, 1e-12);
  EXPECT_LT(fit.residual_sse, con.residual_sse);
}

TEST(Hcw, SubsetAndRankErrors) {
  std::mt19937_64 gen(9);
  const auto d = random_panel(gen, 12, 15, 10);
  EXPECT_THROW(hcw_ols(d), RankError);
  const auto subset = hcw_select_subset(d, 4);
  ASSERT_EQ(subset.size(), 4u);
  const auto fit = hcw_ols(d, subset);
  for (Index j = 0; j < 14; ++j) {
    if (std::find(subset.begin(), subset.end(), j) == subset.end()) {
      EXPECT_EQ(fit.w(j), 0.0);
    }
  }
}

TEST(Hcw, CommonTimeEndogeneity) {
  // With z = 1 and no factors the unconstrained slope sum stays below one
  // by 1/(1 + sigma_gamma^2 J / sigma_u^2).
  SimulationConfig c;
  c.dgp = DgpKind::CommonTime;
  c.J = 3;
  c.T0 = 2000;
  c.T1 = 10;
  double total = 0;
  double total_c = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    c.seed = 100 + static_cast<std::uint64_t>(s);
    const auto sim = simulate_dgp(c);
    total += 1.0 - hcw_ols(sim.data).w.sum();
    const auto con = hcw_ols(sim.data, {}, BalanceConstraint{VectorXd::Ones(1), MatrixXd::Ones(1, 3)});
    total_c += 1.0 - con.w.sum();
  }
  EXPECT_NEAR(total / seeds, 0.25, 0.05);
  EXPECT_NEAR(total_c / seeds, 0.0, 1e-12);
}

TEST(Hcw, ConstrainedRemovesPostBias) {
  SimulationConfig c;
  c.dgp = DgpKind::CommonTime;
  c.J = 3;
  c.T0 = 200;
  c.T1 = 10;
  c.sigma_gamma = 1.0;
  c.tau = VectorXd::Constant(1, 0.0);
  double bias_u = 0, bias_c = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    c.seed = 500 + static_cast<std::uint64_t>(s);
    auto sim = simulate_dgp(c);
    // A persistent level change in the common effect after treatment.
    MatrixXd y = sim.data.outcomes;
    y.bottomRows(10).array() += 3.0;
    const auto d = PanelDataset::make(y, sim.data.unit_labels, sim.data.period_labels, 200);
    const auto u = hcw_ols(d);
    const auto k = hcw_ols(d, {}, BalanceConstraint{VectorXd::Ones(1), MatrixXd::Ones(1, 3)});
    bias_u += (d.treated().tail(10) - fit_counterfactual(d, u).tail(10)).mean();
    bias_c += (d.treated().tail(10) - fit_counterfactual(d, k).tail(10)).mean();
  }
  bias_u /= seeds;
  bias_c /= seeds;
  EXPECT_GT(std::abs(bias_u), 0.5);
  EXPECT_LT(std::abs(bias_c), 0.1);
}

TEST(Di, ZeroPenaltyIsOls) {
  std::mt19937_64 gen(10);
  const auto d = random_panel(gen, 30, 6, 25);
  const auto di = di_elastic_net(d, 0.0, 0.9);
  const auto ols = hcw_ols(d);
  EXPECT_LE((di.w - ols.w).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(di.c, ols.c, 1e-8);
}

TEST(Di, HugePenaltyShrinksToMean) {
  std::mt19937_64 gen(11);
  const auto d = random_panel(gen, 30, 6, 25);
  const auto di = di_elastic_net(d, 1e8, 0.9);
  EXPECT_LE(di.w.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(di.c, d.treated().head(25).mean(), 1e-10);
}

TEST(Di, BeatsPerturbedPoints) {
  std::mt19937_64 gen(12);
  for (double alpha : {0.0, 0.5, 0.9, 1.0}) {
    const auto d = random_panel(gen, 20, 9, 15);
    const auto fit = di_elastic_net(d, 0.05, alpha);
    EXPECT_LE(fit.kkt_residual, 1e-6);
    const double best = di_objective(d, fit.c, fit.w, 0.05, alpha);
    for (int k = 0; k < 100; ++k) {
      const double scale = std::pow(10.0, oracle::uniform(gen, -4, 0));
      const VectorXd w = fit.w + scale * oracle::normals(gen, 8);
      const double c = fit.c + scale * oracle::normals(gen, 1)(0);
      EXPECT_LE(best, di_objective(d, c, w, 0.05, alpha) + 1e-12);
    }
  }
}

TEST(Di, RejectsBadParameters) {
  std::mt19937_64 gen(13);
  const auto d = random_panel(gen, 20, 5, 15);
  EXPECT_THROW(di_elastic_net(d, -1, 0.5), InvalidArgument);
  EXPECT_THROW(di_elastic_net(d, 1, 1.5), InvalidArgument);
}

TEST(Did, MaxShrinkUnbiasedAcrossSeeds) {
  SimulationConfig c;
  const int seeds = 200;
  VectorXd sum = VectorXd::Zero(c.T1), sumsq = VectorXd::Zero(c.T1);
  for (int s = 0; s < seeds; ++s) {
    c.seed = 2000 + static_cast<std::uint64_t>(s);
    const auto sim = simulate_dgp(c);
    const auto w = max_shrinkage(truth_problem(sim));
    const VectorXd tau = did_effects(sim.data, w).tau_by_period;
    sum += tau;
    sumsq += tau.cwiseProduct(tau);
  }
  const VectorXd mean = sum / seeds;
  const VectorXd var = (sumsq / seeds - mean.cwiseProduct(mean)) * seeds / (seeds - 1.0);
  for (Index t = 0; t < c.T1; ++t) {
    EXPECT_LE(std::abs(mean(t)), 3.0 * std::sqrt(var(t) / seeds)) << "period " << t;
  }
}
