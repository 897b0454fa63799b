#include "trendbal/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>
#include <thread>

#include "trendbal/error.hpp"
#include "trendbal/estimators.hpp"
#include "trendbal/io.hpp"

namespace trendbal {
namespace {

using std::numbers::pi;

std::vector<std::string> unit_names(Index n) {
  std::vector<std::string> out;
  for (Index i = 1; i <= n; ++i) out.push_back("unit" + std::to_string(i));
  return out;
}

std::vector<std::string> period_names(Index T) {
  std::vector<std::string> out;
  for (Index t = 1; t <= T; ++t) out.push_back(std::to_string(t));
  return out;
}

VectorXd expand_tau(const SimulationConfig& c) {
  if (c.tau.size() == 0) return VectorXd::Zero(c.T1);
  if (c.tau.size() == 1) return VectorXd::Constant(c.T1, c.tau(0));
  return c.tau;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rmse(const VectorXd& a, const VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double parse_param(std::string_view key, std::string_view value) {
  return io::parse_double(value, "method parameter '" + std::string(key) + "'");
}

}  // namespace

void SimulationConfig::validate() const {
  if (J < 1) throw InvalidArgument("simulation needs J >= 1 untreated units");
  if (T0 < 1 || T1 < 1) throw InvalidArgument("simulation needs T0 >= 1 and T1 >= 1");
  if (K < 0) throw InvalidArgument("K must be nonnegative");
  if (burn_in < 0) throw InvalidArgument("burn_in must be nonnegative");
  if (!(ar_coef > -1.0 && ar_coef < 1.0)) {
    throw InvalidArgument("ar_coef must lie in (-1, 1)");
  }
  if (!(noise_scale >= 0.0) || !(sigma_gamma >= 0.0) || !(sigma_u >= 0.0)) {
    throw InvalidArgument("noise scales must be nonnegative");
  }
  if (tau.size() > 1 && tau.size() != T1) {
    throw InvalidArgument("tau must have 0, 1 or T1 entries");
  }
}

MatrixXd ar1_noise(Rng& rng, Index T, Index n, double rho, Index burn_in,
                   double scale) {
  MatrixXd u(T, n);
  for (Index i = 0; i < n; ++i) {
    double v = 0.0;
    for (Index s = 0; s < burn_in; ++s) v = rho * v + rng.normal();
    for (Index t = 0; t < T; ++t) {
      v = rho * v + rng.normal();
      u(t, i) = scale * v;
    }
  }
  return u;
}

SimulationResult simulate_dgp(const SimulationConfig& c) {
  c.validate();
  Rng rng(c.seed);
  const Index N = c.J + 1;
  const Index T = c.periods();
  SimulationTruth tr;

  if (c.dgp == DgpKind::CommonTime) {
    tr.mu = rng.normal_vector(N);
    tr.gamma = c.sigma_gamma * rng.normal_matrix(T, 1);
    tr.z = MatrixXd(0, N);
    tr.u = c.sigma_u * rng.normal_matrix(T, N);
    tr.y0 = tr.u;
    for (Index i = 0; i < N; ++i) {
      tr.y0.col(i).array() += tr.mu(i) + tr.gamma.col(0).array();
    }
  } else {
    const double dJ = static_cast<double>(c.J);
    const double dT = static_cast<double>(T);
    const double dT0 = static_cast<double>(c.T0);
    tr.z.resize(c.K, N);
    for (Index i = 0; i < N; ++i) {
      for (Index k = 0; k < c.K; ++k) {
        tr.z(k, i) = rng.normal() - static_cast<double>(i + 1) / dJ +
                     static_cast<double>(k + 1);
      }
    }
    tr.mu.resize(N);
    for (Index i = 0; i < N; ++i) {
      const double zbar = c.K > 0 ? tr.z.col(i).mean() : 0.0;
      tr.mu(i) = zbar - static_cast<double>(i + 1) / dJ + rng.normal();
    }
    tr.u = ar1_noise(rng, T, N, c.ar_coef, c.burn_in, c.noise_scale);

    tr.gamma.resize(T, c.K + 1);
    for (Index t = 0; t < T; ++t) {
      const double tt = static_cast<double>(t + 1);
      tr.gamma(t, 0) = 0.5 * std::sin(1.0 + 1.5 * pi * tt / dT) + 2.0 * tt / dT0;
      for (Index k = 1; k <= c.K; ++k) {
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        tr.gamma(t, k) =
            sign * 0.6 *
            std::cos(-0.2 * pi * std::log(static_cast<double>(k)) + 2.0 * pi * tt / dT);
      }
    }
    if (c.variant == Variant::B) {
      const VectorXd at_t0 = tr.gamma.row(c.T0 - 1).transpose();
      for (Index t = 0; t < c.T0; ++t) tr.gamma.row(t) = at_t0.transpose();
    }
    tr.y0 = tr.u;
    for (Index i = 0; i < N; ++i) {
      VectorXd load(c.K + 1);
      load(0) = 1.0;
      load.tail(c.K) = tr.z.col(i);
      tr.y0.col(i) += (tr.gamma * load).array().matrix() +
                      VectorXd::Constant(T, tr.mu(i));
    }
  }

  tr.tau = expand_tau(c);
  MatrixXd y = tr.y0;
  y.col(0).tail(c.T1) += tr.tau;
  return {PanelDataset::make(std::move(y), unit_names(N), period_names(T), c.T0),
          std::move(tr)};
}

CovariateProblem truth_problem(const SimulationResult& sim) {
  const Index N = sim.data.outcomes.cols();
  const Index K = sim.truth.z.rows();
  MatrixXd zstar(K + 1, N);
  zstar.row(0).setOnes();
  if (K > 0) zstar.bottomRows(K) = sim.truth.z;
  auto p = CovariateProblem::make(zstar.col(0), zstar.rightCols(N - 1),
                                  VectorXd(), MatrixXd(0, N - 1));
  p.z_names = {"intercept"};
  for (Index k = 1; k <= K; ++k) p.z_names.push_back("z" + std::to_string(k));
  return p;
}

MethodConfig MethodConfig::parse(std::string_view text) {
  std::vector<std::string> parts;
  {
    std::string cur;
    for (char ch : text) {
      if (ch == ':') {
        parts.push_back(cur);
        cur.clear();
      } else if (ch != ' ') {
        cur.push_back(ch);
      }
    }
    parts.push_back(cur);
  }
  MethodConfig m;
  const std::string& name = parts[0];
  if (name == "di") {
    m.kind = BenchKind::DI;
    m.lambda = 0.01;
    m.alpha = 0.9;
  } else if (name == "hcw") {
    m.kind = BenchKind::HCW;
  } else if (name == "hcwc") {
    m.kind = BenchKind::HCWConstrained;
  } else {
    m.kind = BenchKind::Weights;
    m.method = parse_method(name);
    if (m.method == Method::CElasticNet) m.alpha = 0.5;
  }
  m.label = name;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      throw ParseError("method parameter must be key=value, got '" + parts[i] + "'");
    }
    const std::string key = parts[i].substr(0, eq);
    const std::string value = parts[i].substr(eq + 1);
    if (key == "lambda") {
      m.lambda = parse_param(key, value);
    } else if (key == "alpha") {
      m.alpha = parse_param(key, value);
    } else if (key == "kappa") {
      m.kappa = parse_param(key, value);
    } else if (key == "epsilon") {
      m.epsilon = parse_param(key, value);
    } else if (key == "k") {
      m.subset = static_cast<Index>(parse_param(key, value));
    } else {
      throw ParseError("unknown method parameter '" + key + "'");
    }
    m.label += ":" + key + "=" + value;
  }
  return m;
}

std::string MethodConfig::describe() const {
  std::ostringstream out;
  switch (kind) {
    case BenchKind::Weights:
      out << method_name(method);
      break;
    case BenchKind::DI:
      out << "di";
      break;
    case BenchKind::HCW:
      out << "hcw";
      break;
    case BenchKind::HCWConstrained:
      out << "hcwc";
      break;
  }
  out << " lambda=" << io::format_number(lambda)
      << " alpha=" << io::format_number(alpha)
      << " kappa=" << io::format_number(kappa)
      << " epsilon=" << io::format_number(epsilon) << " k=" << subset;
  return out.str();
}

std::vector<Index> resolve_hcw_subset(const PanelDataset& data,
                                      const MethodConfig& m,
                                      Index constraint_rows) {
  const Index J = data.controls();
  if (m.subset > 0) return hcw_select_subset(data, std::min(m.subset, J));
  const Index free_params = J - constraint_rows;
  if (data.t0 > free_params + 1) return {};
  return hcw_select_subset(data, std::min<Index>(J, 5 + constraint_rows));
}

MethodOutcome run_method(const SimulationResult& sim, const MethodConfig& m) {
  MethodOutcome out;
  const auto& data = sim.data;
  const Index T0 = data.t0;
  const Index T = data.periods();
  try {
    auto prob = truth_problem(sim);
    VectorXd cf;
    VectorXd w;
    switch (m.kind) {
      case BenchKind::Weights: {
        prob.q1 = data.treated().head(T0);
        prob.Q = data.control_outcomes().topRows(T0);
        prob.q_uses_outcomes = true;
        WeightSolution s;
        switch (m.method) {
          case Method::MaxShrink:
            s = max_shrinkage(prob);
            break;
          case Method::BasisPursuit:
            s = basis_pursuit(prob, m.epsilon, m.alpha);
            break;
          case Method::CRidge:
            s = constrained_ridge(prob, m.lambda);
            break;
          case Method::CLasso:
            s = constrained_lasso(prob, m.lambda);
            break;
          case Method::CElasticNet:
            s = constrained_elastic_net(prob, m.lambda, m.alpha);
            break;
          case Method::SoftNonneg:
            s = soft_nonneg_lasso(prob, m.lambda, m.kappa);
            break;
          case Method::AdhInner:
            s = adh_inner(prob);
            break;
        }
        w = s.w;
        cf = counterfactual(data, w);
        break;
      }
      case BenchKind::DI: {
        const auto fit = di_elastic_net(data, m.lambda, m.alpha);
        w = fit.w;
        cf = fit_counterfactual(data, fit);
        break;
      }
      case BenchKind::HCW: {
        const auto fit = hcw_ols(data, resolve_hcw_subset(data, m, 0));
        w = fit.w;
        cf = fit_counterfactual(data, fit);
        break;
      }
      case BenchKind::HCWConstrained: {
        const auto fit =
            hcw_ols(data, resolve_hcw_subset(data, m, prob.constraints()),
                    BalanceConstraint{prob.z1, prob.Z});
        w = fit.w;
        cf = fit_counterfactual(data, fit);
        break;
      }
    }
    const VectorXd truth = sim.truth.y0.col(0);
    out.post_rmse = rmse(cf.tail(T - T0), truth.tail(T - T0));
    out.pre_rmse = rmse(cf.head(T0), truth.head(T0));
    out.ate = default_ate_weights(T0, T).dot(data.treated() - cf);
    out.one_minus_sum_w = 1.0 - w.sum();
    out.error_series = cf - truth;
    out.counterfactual = std::move(cf);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TRENDBAL_THREADS")) {
    unsigned cap = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (res.ec == std::errc() && cap > 0) n = std::min(n, cap);
  }
  return n;
}

BenchmarkReport run_benchmark(const SimulationConfig& config,
                              const std::vector<MethodConfig>& methods,
                              Index n_seeds) {
  config.validate();
  if (n_seeds < 1) throw InvalidArgument("n_seeds must be at least 1");
  if (methods.empty()) throw InvalidArgument("no methods to compare");
  BenchmarkReport rep;
  rep.config = config;
  rep.methods = methods;
  const auto S = static_cast<std::size_t>(n_seeds);
  rep.seeds.resize(S);
  for (std::size_t s = 0; s < S; ++s) rep.seeds[s] = config.seed + s;
  rep.outcomes.assign(S, {});

  auto work = [&](std::size_t s) {
    SimulationConfig c = config;
    c.seed = rep.seeds[s];
    const auto sim = simulate_dgp(c);
    std::vector<MethodOutcome> row;
    for (const auto& m : methods) row.push_back(run_method(sim, m));
    rep.outcomes[s] = std::move(row);
  };

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), S));
  if (workers <= 1) {
    for (std::size_t s = 0; s < S; ++s) work(s);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t s = w; s < S; s += workers) work(s);
      });
    }
    for (auto& t : pool) t.join();
  }

  const Index T = config.periods();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodSummary sum;
    sum.bias = VectorXd::Zero(T);
    std::vector<double> post, pre;
    double gap = 0.0, ate_sum = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& o = rep.outcomes[s][m];
      if (!o.ok) {
        ++sum.failures;
        continue;
      }
      post.push_back(o.post_rmse);
      pre.push_back(o.pre_rmse);
      gap += o.one_minus_sum_w;
      ate_sum += o.ate;
    }
    const double ok = static_cast<double>(post.size());
    sum.median_post_rmse = median(post);
    sum.median_pre_rmse = median(pre);
    double total = 0.0;
    for (double v : post) total += v;
    sum.mean_post_rmse = ok > 0 ? total / ok : std::nan("");
    sum.mean_one_minus_sum_w = ok > 0 ? gap / ok : std::nan("");
    sum.mean_ate = ok > 0 ? ate_sum / ok : std::nan("");
    for (std::size_t s = 0; s < S; ++s) {
      const auto& o = rep.outcomes[s][m];
      if (o.ok) sum.bias += o.error_series / ok;
    }
    rep.summary.push_back(std::move(sum));
  }
  return rep;
}

}  // namespace trendbal
