// Prints one PASS/FAIL/SKIP line per acceptance criterion; exits nonzero on
// any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/instances.hpp"
#include "support/oracles.hpp"
#include "trendbal/diagnostics.hpp"
#include "trendbal/error.hpp"
#include "trendbal/estimators.hpp"
#include "trendbal/factors.hpp"
#include "trendbal/io.hpp"
#include "trendbal/simulation.hpp"
#include "trendbal/solvers.hpp"

using namespace trendbal;

namespace {

struct Verdict {
  enum { Pass, Fail, Skip } status = Pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double x) { return io::format_number(x); }

Index draw(std::mt19937_64& gen, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(gen);
}

Verdict ridge_identity() {
  const auto t = Clock::now();
  std::mt19937_64 gen(101);
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index J = draw(gen, 4, 40);
    const Index m = draw(gen, 2, 60);
    const Index K = draw(gen, 0, std::min<Index>(5, J - 2));
    const auto p = fixture::random_problem(gen, J, m, K);
    const double lambda = std::exp(std::uniform_real_distribution<>(-3, 3)(gen));
    const auto a = constrained_ridge(p, lambda);
    const auto b = ridge_decomposition(p, lambda);
    worst = std::max(worst, (a.w - b.w).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t);
  Verdict v;
  v.status = (worst <= 1e-8 && secs < 10) ? Verdict::Pass : Verdict::Fail;
  v.detail = "max |dw| = " + fmt(worst) + ", " + fmt(secs) + " s";
  return v;
}

Verdict certificates() {
  std::mt19937_64 gen(202);
  using Obj = std::function<double(const CovariateProblem&, const VectorXd&)>;
  struct Case {
    std::string name;
    std::function<WeightSolution(const CovariateProblem&)> solve;
    Obj objective;
  };
  const double lam = 1.5, alpha = 0.5, kappa = 4.0, eps = 1e-4;
  auto fit = [](const CovariateProblem& p, const VectorXd& w) {
    return 0.5 * (p.q1 - p.Q * w).squaredNorm();
  };
  const std::vector<Case> cases{
      {"classo", [&](const auto& p) { return constrained_lasso(p, lam); },
       [&](const auto& p, const VectorXd& w) { return fit(p, w) + lam * w.template lpNorm<1>(); }},
      {"celasticnet", [&](const auto& p) { return constrained_elastic_net(p, lam, alpha); },
       [&](const auto& p, const VectorXd& w) {
         return fit(p, w) +
                lam * ((1 - alpha) / 2 * w.squaredNorm() + alpha * w.template lpNorm<1>());
       }},
      {"softnonneg", [&](const auto& p) { return soft_nonneg_lasso(p, lam, kappa); },
       [&](const auto& p, const VectorXd& w) {
         return fit(p, w) + lam * (w.cwiseMax(0.0).sum() - kappa * w.cwiseMin(0.0).sum());
       }},
      {"basispursuit", [&](const auto& p) { return basis_pursuit(p, eps, 1.0); },
       [&](const auto&, const VectorXd& w) { return w.template lpNorm<1>() + eps * w.squaredNorm(); }},
  };
  double worst_kkt = 0;
  int beaten = 0, solves = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = fixture::random_problem(gen, draw(gen, 6, 20), draw(gen, 3, 15), draw(gen, 0, 3));
    const auto samples = oracle::sample_feasible(p.Z, p.z1, 100, gen);
    for (const auto& c : cases) {
      const auto s = c.solve(p);
      ++solves;
      worst_kkt = std::max(worst_kkt, s.kkt_residual);
      const double best = c.objective(p, s.w);
      for (const auto& w : samples) {
        if (c.objective(p, w) < best - 1e-9 * (1 + std::abs(best))) ++beaten;
      }
    }
  }
  const auto bp = basis_pursuit(CovariateProblem::make(VectorXd::Ones(1), MatrixXd::Ones(1, 5),
                                                       VectorXd(), MatrixXd(0, 5)));
  const double uniform_err = (bp.w.array() - 0.2).abs().maxCoeff();
  Verdict v;
  v.status = (worst_kkt <= 1e-6 && beaten == 0 && uniform_err <= 1e-6) ? Verdict::Pass
                                                                        : Verdict::Fail;
  v.detail = std::to_string(solves) + " solves, max kkt = " + fmt(worst_kkt) +
             ", sampled points better = " + std::to_string(beaten) +
             ", uniform bp error = " + fmt(uniform_err);
  return v;
}

Verdict limits() {
  std::mt19937_64 gen(303);
  double ridge_gap = 0, l1_gap = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = fixture::random_problem(gen, draw(gen, 5, 25), draw(gen, 2, 20), draw(gen, 0, 3));
    ridge_gap = std::max(ridge_gap,
                         (constrained_ridge(p, 1e12).w - max_shrinkage(p).w).cwiseAbs().maxCoeff());
    l1_gap = std::max(l1_gap, std::abs(constrained_lasso(p, 1e9).w.lpNorm<1>() -
                                       basis_pursuit(p, 0.0).w.lpNorm<1>()));
  }
  Verdict v;
  v.status = (ridge_gap <= 1e-4 && l1_gap <= 1e-5) ? Verdict::Pass : Verdict::Fail;
  v.detail = "ridge vs min-norm " + fmt(ridge_gap) + ", lasso vs bp l1 " + fmt(l1_gap);
  return v;
}

Verdict factor_module() {
  std::mt19937_64 gen(404);
  double svd_gap = 0, recovery_gap = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Index T0 = draw(gen, 5, 30), N = draw(gen, 5, 40);
    const Index r = draw(gen, 1, std::min<Index>(4, std::min(T0, N) - 1));
    const MatrixXd A = oracle::normals(gen, T0, N);
    const auto fe = estimate_factors(A, r);
    svd_gap = std::max(svd_gap, (fe.factors * fe.loadings - oracle::truncated_svd(A, r)).norm());
    const MatrixXd L = oracle::normals(gen, T0, r) * oracle::normals(gen, r, N);
    const auto exact = estimate_factors(L, r);
    recovery_gap = std::max(recovery_gap, (exact.factors * exact.loadings - L).norm());
  }
  Verdict v;
  v.status = (svd_gap <= 1e-8 && recovery_gap <= 1e-8) ? Verdict::Pass : Verdict::Fail;
  v.detail = "vs truncated svd " + fmt(svd_gap) + ", noise-free recovery " + fmt(recovery_gap);
  return v;
}

Verdict monte_carlo() {
  const auto t = Clock::now();
  const std::vector<MethodConfig> methods{MethodConfig::parse("cridge:lambda=2"),
                                          MethodConfig::parse("di:lambda=0.01:alpha=0.9"),
                                          MethodConfig::parse("hcw")};
  Verdict v;
  std::ostringstream detail;
  bool ok = true;
  for (Variant variant : {Variant::A, Variant::B}) {
    SimulationConfig c;
    c.variant = variant;
    const auto rep = run_benchmark(c, methods, 50);
    int di_wins = 0;
    for (const auto& row : rep.outcomes) {
      if (row[0].ok && row[1].ok && row[1].post_rmse < row[0].post_rmse) ++di_wins;
    }
    const double cr = rep.summary[0].median_post_rmse;
    const double di = rep.summary[1].median_post_rmse;
    const double hcw = rep.summary[2].median_post_rmse;
    const bool failures = rep.summary[0].failures + rep.summary[1].failures +
                              rep.summary[2].failures > 0;
    ok = ok && !failures && cr < di && cr < hcw && di_wins < 5;
    detail << (variant == Variant::A ? "A" : "B") << ": median rmse cridge " << fmt(cr)
           << " di " << fmt(di) << " hcw " << fmt(hcw) << ", di wins " << di_wins << "/50; ";
  }
  const double secs = seconds_since(t);
  ok = ok && secs < 120;
  detail << fmt(secs) << " s";
  v.status = ok ? Verdict::Pass : Verdict::Fail;
  v.detail = detail.str();
  return v;
}

Verdict endogeneity_limit() {
  SimulationConfig c;
  c.dgp = DgpKind::CommonTime;
  c.J = 3;
  c.T0 = 2000;
  c.sigma_gamma = 1;
  c.sigma_u = 1;
  const auto rep = run_benchmark(c, {MethodConfig::parse("hcw")}, 200);
  const double mean = rep.summary[0].mean_one_minus_sum_w;
  Verdict v;
  v.status = (rep.summary[0].failures == 0 && std::abs(mean - 0.25) <= 0.05) ? Verdict::Pass
                                                                              : Verdict::Fail;
  v.detail = "mean 1 - sum(w) over 200 seeds = " + fmt(mean) + " (limit 0.25)";
  return v;
}

Verdict zero_noise() {
  const std::vector<std::string> names{"maxshrink", "basispursuit", "cridge", "classo",
                                       "celasticnet", "softnonneg"};
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SimulationConfig c;
    c.noise_scale = 0.0;
    c.seed = seed;
    c.tau = VectorXd::LinSpaced(c.T1, 0.5, 3.0);
    const auto sim = simulate_dgp(c);
    auto prob = truth_problem(sim);
    prob.q1 = sim.data.treated().head(c.T0);
    prob.Q = sim.data.control_outcomes().topRows(c.T0);
    for (const auto& name : names) {
      const auto m = MethodConfig::parse(name);
      WeightSolution s;
      switch (m.method) {
        case Method::MaxShrink: s = max_shrinkage(prob); break;
        case Method::BasisPursuit: s = basis_pursuit(prob, m.epsilon, m.alpha); break;
        case Method::CRidge: s = constrained_ridge(prob, m.lambda); break;
        case Method::CLasso: s = constrained_lasso(prob, m.lambda); break;
        case Method::CElasticNet: s = constrained_elastic_net(prob, m.lambda, m.alpha); break;
        case Method::SoftNonneg: s = soft_nonneg_lasso(prob, m.lambda, m.kappa); break;
        case Method::AdhInner: break;
      }
      const auto e = did_effects(sim.data, s);
      worst = std::max(worst, (e.tau_by_period - c.tau).cwiseAbs().maxCoeff());
    }
  }
  Verdict v;
  v.status = worst <= 1e-10 ? Verdict::Pass : Verdict::Fail;
  v.detail = "max |tau error| over 6 methods x 5 seeds = " + fmt(worst);
  return v;
}

// Long-format ADH table: state, year, cigsale and the predictor columns.
struct AdhTable {
  std::vector<std::string> states;
  std::vector<std::string> years;
  std::map<std::string, MatrixXd> columns;  // years x states
};

std::string find_adh_data() {
  if (const char* env = std::getenv("TRENDBAL_ADH_DATA"); env && *env) return env;
  for (const std::string p : {std::string(TRENDBAL_SOURCE_DIR) + "/tests/data/smoking.csv",
                              std::string("tests/data/smoking.csv")}) {
    if (std::filesystem::exists(p)) return p;
  }
  return {};
}

AdhTable load_adh(const std::string& path) {
  const auto rows = io::read_csv_file(path);
  if (rows.empty()) throw ParseError("empty file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    std::string h = rows[0][i];
    std::transform(h.begin(), h.end(), h.begin(), ::tolower);
    col[h] = i;
  }
  for (const char* need : {"state", "year", "cigsale", "lnincome", "beer", "age15to24", "retprice"}) {
    if (!col.count(need)) throw LookupError(std::string("missing column ") + need);
  }
  AdhTable t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    t.states.push_back(rows[r][col["state"]]);
    t.years.push_back(rows[r][col["year"]]);
  }
  std::sort(t.states.begin(), t.states.end());
  t.states.erase(std::unique(t.states.begin(), t.states.end()), t.states.end());
  io::sort_labels(t.years);
  t.years.erase(std::unique(t.years.begin(), t.years.end()), t.years.end());
  auto index = [](const std::vector<std::string>& v, const std::string& s) {
    return static_cast<Index>(std::find(v.begin(), v.end(), s) - v.begin());
  };
  for (const char* name : {"cigsale", "lnincome", "beer", "age15to24", "retprice"}) {
    MatrixXd m = MatrixXd::Constant(static_cast<Index>(t.years.size()),
                                    static_cast<Index>(t.states.size()), NAN);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const std::string& cellv = rows[r][col[name]];
      if (cellv.empty() || cellv == "NA" || cellv == "NaN" || cellv == ".") continue;
      m(index(t.years, rows[r][col["year"]]), index(t.states, rows[r][col["state"]])) =
          io::parse_double(cellv, name);
    }
    t.columns[name] = m;
  }
  return t;
}

// Per-state mean over years [from, to], skipping missing cells.
VectorXd window_mean(const AdhTable& t, const std::string& name, int from, int to) {
  const MatrixXd& m = t.columns.at(name);
  VectorXd out(m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    double s = 0;
    int n = 0;
    for (std::size_t y = 0; y < t.years.size(); ++y) {
      const int year = std::stoi(t.years[y]);
      const double x = m(static_cast<Index>(y), j);
      if (year >= from && year <= to && std::isfinite(x)) {
        s += x;
        ++n;
      }
    }
    out(j) = n > 0 ? s / n : NAN;
  }
  return out;
}

Verdict adh_data() {
  const std::string path = find_adh_data();
  Verdict v;
  if (path.empty()) {
    v.status = Verdict::Skip;
    v.detail = "smoking data not found (set TRENDBAL_ADH_DATA or add tests/data/smoking.csv)";
    return v;
  }
  const auto t = load_adh(path);
  std::string treated = "California";
  if (std::find(t.states.begin(), t.states.end(), treated) == t.states.end()) treated = "3";
  const Index treated_col =
      static_cast<Index>(std::find(t.states.begin(), t.states.end(), treated) - t.states.begin());
  if (treated_col == static_cast<Index>(t.states.size())) throw LookupError("no California rows");

  // Treated state first, others in sorted order.
  std::vector<Index> order{treated_col};
  for (Index j = 0; j < static_cast<Index>(t.states.size()); ++j) {
    if (j != treated_col) order.push_back(j);
  }
  auto reorder = [&](const VectorXd& x) {
    VectorXd y(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) y(static_cast<Index>(i)) = x(order[i]);
    return y;
  };
  const MatrixXd& cig = t.columns.at("cigsale");
  MatrixXd y(cig.rows(), cig.cols());
  std::vector<std::string> units;
  for (std::size_t i = 0; i < order.size(); ++i) {
    y.col(static_cast<Index>(i)) = cig.col(order[i]);
    units.push_back(t.states[static_cast<std::size_t>(order[i])]);
  }
  const Index t0 = static_cast<Index>(std::find(t.years.begin(), t.years.end(), "1988") -
                                      t.years.begin()) + 1;
  const auto data = PanelDataset::make(y, units, t.years, t0);
  const Index N = y.cols();

  // Loadings from the doubly demeaned pre-period outcomes.
  const auto intercept = CovariateProblem::make(VectorXd::Ones(1), MatrixXd::Ones(1, N - 1),
                                                VectorXd(), MatrixXd(0, N - 1));
  const auto fe = estimate_factors(build_projected_matrix(data, intercept), 4);

  auto lag = [&](const char* year) { return reorder(cig.row(data.period_index(year)).transpose()); };
  const std::vector<std::pair<std::string, VectorXd>> predictors{
      {"lnincome", reorder(window_mean(t, "lnincome", 1980, 1988))},
      {"age15to24", reorder(window_mean(t, "age15to24", 1980, 1988))},
      {"retprice", reorder(window_mean(t, "retprice", 1980, 1988))},
      {"beer", reorder(window_mean(t, "beer", 1984, 1988))},
      {"cigsale1988", lag("1988")},
      {"cigsale1980", lag("1980")},
      {"cigsale1975", lag("1975")}};
  const std::vector<double> published{0.348, 0.106, 0.538, 0.390, 0.987, 0.992, 0.995};
  MatrixXd X(N, 5);
  X.col(0).setOnes();
  X.rightCols(4) = fe.loadings.transpose();
  std::ostringstream detail;
  bool ok = true;
  detail << "R2";
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    const double r2 = ols_fit(X, predictors[k].second).r_squared;
    ok = ok && std::abs(r2 - published[k]) <= 0.02;
    detail << " " << predictors[k].first << "=" << fmt(r2);
  }

  // Trending (1, x), balancing pre-period outcomes.
  MatrixXd zall(8, N);
  zall.row(0).setOnes();
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    zall.row(static_cast<Index>(k + 1)) = predictors[k].second.transpose();
  }
  const MatrixXd pre = y.topRows(t0);
  const auto prob = CovariateProblem::make(zall.col(0), zall.rightCols(N - 1), pre.col(0),
                                           pre.rightCols(N - 1));
  const VectorXd cr = counterfactual(data, constrained_ridge(prob, 2.0).w, true);
  const VectorXd cl = counterfactual(data, constrained_lasso(prob, 2.0).w, true);
  const VectorXd adh = counterfactual(data, adh_inner(prob).w, true);
  const Index T1 = data.post_periods();
  const bool above = ((cr.tail(T1) - adh.tail(T1)).array() > 0).all() &&
                     ((cl.tail(T1) - adh.tail(T1)).array() > 0).all();
  ok = ok && above;
  detail << "; post-period mean cridge-adh " << fmt((cr - adh).tail(T1).mean())
         << ", classo-adh " << fmt((cl - adh).tail(T1).mean());
  v.status = ok ? Verdict::Pass : Verdict::Fail;
  v.detail = detail.str();
  return v;
}

Verdict pretrend_size() {
  std::mt19937_64 gen(909);
  const Index T0 = 20, T = 25;
  int rejections = 0;
  const int seeds = 500;
  for (int s = 0; s < seeds; ++s) {
    MatrixXd y(T, 2);
    y.col(0) = oracle::normals(gen, T);
    y.col(1).setZero();
    std::vector<std::string> periods;
    for (Index p = 1; p <= T; ++p) periods.push_back(std::to_string(p));
    const auto d = PanelDataset::make(y, {"treated", "control"}, periods, T0);
    if (pretrend_test(d, VectorXd::Ones(1)).p_values(1) < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / seeds;
  Verdict v;
  v.status = (rate >= 0.02 && rate <= 0.09) ? Verdict::Pass : Verdict::Fail;
  v.detail = "rejection rate " + fmt(rate) + " over 500 seeds";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"AC1", ridge_identity}, {"AC2", certificates},      {"AC3", limits},
      {"AC4", factor_module},  {"AC5", monte_carlo},       {"AC6", endogeneity_limit},
      {"AC7", zero_noise},     {"AC8", adh_data},          {"AC9", pretrend_size}};
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.status = Verdict::Fail;
      v.detail = std::string("error: ") + e.what();
    }
    const char* word = v.status == Verdict::Pass ? "PASS" : v.status == Verdict::Skip ? "SKIP" : "FAIL";
    if (v.status == Verdict::Fail) ++failures;
    std::printf("%s %s %s\n", name.c_str(), word, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
