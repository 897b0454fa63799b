#include <benchmark/benchmark.h>

#include "trendbal/factors.hpp"
#include "trendbal/random.hpp"
#include "trendbal/simulation.hpp"
#include "trendbal/solvers.hpp"

using namespace trendbal;

namespace {

CovariateProblem problem(Index J, Index m, Index K, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd Z(K + 1, J);
  Z.row(0).setOnes();
  Z.bottomRows(K) = rng.normal_matrix(K, J);
  VectorXd z1(K + 1);
  z1(0) = 1;
  z1.tail(K) = rng.normal_vector(K);
  return CovariateProblem::make(z1, Z, rng.normal_vector(m), rng.normal_matrix(m, J));
}

void BM_ConstrainedRidge(benchmark::State& state) {
  const auto p = problem(state.range(0), 20, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(constrained_ridge(p, 2.0));
}
BENCHMARK(BM_ConstrainedRidge)->Arg(10)->Arg(40)->Arg(160);

void BM_RidgeDecomposition(benchmark::State& state) {
  const auto p = problem(state.range(0), 20, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ridge_decomposition(p, 2.0));
}
BENCHMARK(BM_RidgeDecomposition)->Arg(10)->Arg(40)->Arg(160);

void BM_ConstrainedLasso(benchmark::State& state) {
  const auto p = problem(state.range(0), 20, 4, 2);
  for (auto _ : state) benchmark::DoNotOptimize(constrained_lasso(p, 2.0));
}
BENCHMARK(BM_ConstrainedLasso)->Arg(10)->Arg(40)->Arg(80);

void BM_BasisPursuit(benchmark::State& state) {
  const auto p = problem(state.range(0), 0, 4, 3);
  for (auto _ : state) benchmark::DoNotOptimize(basis_pursuit(p));
}
BENCHMARK(BM_BasisPursuit)->Arg(10)->Arg(40)->Arg(80);

void BM_AdhInner(benchmark::State& state) {
  const auto p = problem(state.range(0), 0, 6, 4);
  for (auto _ : state) benchmark::DoNotOptimize(adh_inner(p));
}
BENCHMARK(BM_AdhInner)->Arg(10)->Arg(40);

void BM_EstimateFactors(benchmark::State& state) {
  Rng rng(5);
  const MatrixXd A = rng.normal_matrix(state.range(0), 40);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_factors(A, 4));
}
BENCHMARK(BM_EstimateFactors)->Arg(20)->Arg(100);

void BM_BenchmarkHarness(benchmark::State& state) {
  const std::vector<MethodConfig> methods{MethodConfig::parse("cridge"),
                                          MethodConfig::parse("di"),
                                          MethodConfig::parse("hcw")};
  for (auto _ : state) benchmark::DoNotOptimize(run_benchmark({}, methods, state.range(0)));
}
BENCHMARK(BM_BenchmarkHarness)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
