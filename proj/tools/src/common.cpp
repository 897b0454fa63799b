#include "common.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include "trendbal/error.hpp"
#include "trendbal/io.hpp"

namespace trendbal::cli {

void add_data_options(CLI::App& app, DataOptions& o) {
  app.add_option("--data", o.data, "Panel CSV")->required();
  app.add_option("--layout", o.layout, "wide (period,<units>...) or long (unit,period,outcome)")
      ->capture_default_str();
  app.add_option("--treated", o.treated, "Label of the treated unit")->required();
  app.add_option("--t0", o.t0, "Label of the last pre-treatment period")->required();
  app.add_option("--covariates", o.covariates, "Unit covariate CSV: unit,<var>...");
  app.add_option("--trending", o.trending,
                 "Exactly balanced covariates besides the intercept, e.g. "
                 "col:income,mean:1980..1988,lag:1975");
  app.add_option("--balancing", o.balancing, "Penalized balancing covariates")
      ->capture_default_str();
  app.add_flag("--no-intercept", o.no_intercept, "Drop the adding-up row from the trending set");
  app.add_flag("--standardize", o.standardize, "Scale balancing rows by control-unit spread");
}

void add_output_options(CLI::App& app, OutputOptions& o) {
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_flag("--deterministic", o.deterministic, "Omit the timestamp from JSON metadata");
}

LoadedData load_data(const DataOptions& o) {
  LoadedData d;
  d.data = load_panel(o.data, parse_layout(o.layout), o.treated, o.t0);
  if (!o.covariates.empty()) d.externals = load_externals(o.covariates);
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list(o.trending);
  spec.balancing = CovariateSpec::parse_list(o.balancing);
  spec.include_intercept_in_z = !o.no_intercept;
  spec.standardize_balancing = o.standardize;
  d.prob = build_problem(d.data, spec, d.externals);
  return d;
}

std::filesystem::path prepare_output(const OutputOptions& o) {
  std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error("cannot create output directory '" + o.out + "'");
  }
  return dir;
}

json metadata(const std::string& command, const OutputOptions& o) {
  json m;
  m["tool"] = "trendbal";
  m["version"] = "0.1.0";
  m["command"] = command;
  if (!o.deterministic) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    m["generated_at"] = buf;
  }
  return m;
}

json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return io::round12(x);
}

json numbers(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

json strings(const std::vector<std::string>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path) {
  if (!out_) throw Error("cannot write '" + path.string() + "'");
  io::write_csv_row(out_, header);
}

void CsvWriter::row(const std::vector<std::string>& cells) { io::write_csv_row(out_, cells); }

std::string cell(double x) { return io::format_number(x); }

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
  return parts;
}

std::vector<double> parse_grid(const std::string& text, const std::string& flag,
                               bool nonnegative) {
  std::set<double> values;
  for (const auto& part : split(text, ',')) {
    const double v = io::parse_double(part, flag);
    if (!std::isfinite(v) || (nonnegative && v < 0)) {
      throw InvalidArgument(flag + " entries must be finite and nonnegative, got '" + part + "'");
    }
    values.insert(v);
  }
  return {values.begin(), values.end()};
}

std::vector<Index> parse_index_grid(const std::string& text, const std::string& flag) {
  auto to_index = [&](const std::string& s) {
    const double v = io::parse_double(s, flag);
    if (v < 0 || v != std::floor(v)) {
      throw InvalidArgument(flag + " entries must be nonnegative integers, got '" + s + "'");
    }
    return static_cast<Index>(v);
  };
  std::set<Index> values;
  for (const auto& part : split(text, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      values.insert(to_index(part));
      continue;
    }
    const Index lo = to_index(part.substr(0, dots));
    const Index hi = to_index(part.substr(dots + 2));
    if (hi < lo) throw InvalidArgument(flag + " range '" + part + "' is empty");
    for (Index r = lo; r <= hi; ++r) values.insert(r);
  }
  if (values.empty()) throw InvalidArgument(flag + " needs at least one value");
  return {values.begin(), values.end()};
}

VectorXd parse_vector(const std::string& text, const std::string& flag) {
  const auto parts = split(text, ',');
  VectorXd v(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    v(static_cast<Index>(i)) = io::parse_double(parts[i], flag);
  }
  return v;
}

bool uses_lambda(const MethodConfig& m) {
  if (m.kind == BenchKind::DI) return true;
  if (m.kind != BenchKind::Weights) return false;
  return m.method == Method::CRidge || m.method == Method::CLasso ||
         m.method == Method::CElasticNet || m.method == Method::SoftNonneg;
}

bool uses_alpha(const MethodConfig& m) {
  return m.kind == BenchKind::DI ||
         (m.kind == BenchKind::Weights && m.method == Method::CElasticNet);
}

namespace {

std::string base_name(const MethodConfig& m) {
  switch (m.kind) {
    case BenchKind::DI:
      return "di";
    case BenchKind::HCW:
      return "hcw";
    case BenchKind::HCWConstrained:
      return "hcwc";
    case BenchKind::Weights:
      break;
  }
  return std::string(method_name(m.method));
}

std::string make_label(const MethodConfig& m) {
  std::string label = base_name(m);
  if (uses_lambda(m)) label += ":lambda=" + cell(m.lambda);
  if (uses_alpha(m)) label += ":alpha=" + cell(m.alpha);
  if (m.kind == BenchKind::Weights && m.method == Method::SoftNonneg) {
    label += ":kappa=" + cell(m.kappa);
  }
  if ((m.kind == BenchKind::HCW || m.kind == BenchKind::HCWConstrained) && m.subset > 0) {
    label += ":k=" + std::to_string(m.subset);
  }
  return label;
}

}  // namespace

std::vector<MethodConfig> expand_methods(const std::string& methods,
                                         const std::vector<double>& lambdas,
                                         const std::vector<double>& alphas) {
  std::vector<MethodConfig> out;
  const auto names = split(methods, ',');
  if (names.empty()) throw InvalidArgument("--method needs at least one method");
  for (const auto& name : names) {
    const MethodConfig base = MethodConfig::parse(name);
    const std::vector<double> ls =
        (uses_lambda(base) && !lambdas.empty()) ? lambdas : std::vector<double>{base.lambda};
    const std::vector<double> as =
        (uses_alpha(base) && !alphas.empty()) ? alphas : std::vector<double>{base.alpha};
    for (double l : ls) {
      for (double a : as) {
        MethodConfig m = base;
        m.lambda = l;
        m.alpha = a;
        m.label = make_label(m);
        out.push_back(m);
      }
    }
  }
  return out;
}

WeightSolution solve_weights(const CovariateProblem& prob, const MethodConfig& m,
                             const VectorXd& v_diag) {
  switch (m.method) {
    case Method::MaxShrink:
      return max_shrinkage(prob);
    case Method::BasisPursuit:
      return basis_pursuit(prob, m.epsilon, m.alpha);
    case Method::CRidge:
      return constrained_ridge(prob, m.lambda);
    case Method::CLasso:
      return constrained_lasso(prob, m.lambda);
    case Method::CElasticNet:
      return constrained_elastic_net(prob, m.lambda, m.alpha);
    case Method::SoftNonneg:
      return soft_nonneg_lasso(prob, m.lambda, m.kappa);
    case Method::AdhInner:
      return adh_inner(prob, v_diag);
  }
  throw InvalidArgument("unknown method");
}

namespace {

EffectEstimate regression_effects(const PanelDataset& data, const InterceptFit& fit,
                                  const std::string& label, const DidOptions& did) {
  const Index T0 = data.t0;
  const Index T = data.periods();
  EffectEstimate e;
  e.counterfactual = fit_counterfactual(data, fit);
  e.gap_series = data.treated() - e.counterfactual;
  e.pre_reference = did.reference == PreReference::Single
                        ? e.gap_series(did.single_period)
                        : e.gap_series.head(T0).mean();
  e.tau_by_period = e.gap_series.tail(T - T0).array() - e.pre_reference;
  e.c_weights = default_ate_weights(T0, T);
  e.ate = e.c_weights.dot(e.gap_series);
  e.intercept = fit.c;
  e.w = fit.w;
  e.label = label;
  return e;
}

}  // namespace

FitResult fit_method(const PanelDataset& data, const CovariateProblem& prob,
                     const MethodConfig& m, const VectorXd& v_diag,
                     const DidOptions& did) {
  FitResult r;
  r.config = m;
  switch (m.kind) {
    case BenchKind::Weights: {
      r.solution = solve_weights(prob, m, v_diag);
      r.w = r.solution->w;
      r.effects = did_effects(data, *r.solution, did);
      r.effects.label = m.label;
      r.depends_on_pre_outcomes = r.solution->depends_on_pre_outcomes;
      return r;
    }
    case BenchKind::DI:
      r.regression = di_elastic_net(data, m.lambda, m.alpha);
      break;
    case BenchKind::HCW:
      r.regression = hcw_ols(data, resolve_hcw_subset(data, m, 0));
      break;
    case BenchKind::HCWConstrained:
      r.regression = hcw_ols(data, resolve_hcw_subset(data, m, prob.constraints()),
                             BalanceConstraint{prob.z1, prob.Z});
      break;
  }
  r.w = r.regression->w;
  r.effects = regression_effects(data, *r.regression, m.label, did);
  r.depends_on_pre_outcomes = true;
  return r;
}

void add_method_options(CLI::App& app, MethodOptions& o) {
  app.add_option("--method", o.methods,
                 "Comma-separated methods: maxshrink, basispursuit, cridge, classo, "
                 "celasticnet, softnonneg, adhinner, di, hcw, hcwc")
      ->capture_default_str();
  app.add_option("--lambda", o.lambdas, "Penalty grid, e.g. 1,2,4");
  app.add_option("--alpha", o.alphas, "Mixing-weight grid for celasticnet and di");
  app.add_option("--kappa", o.kappa, "softnonneg: cost ratio of negative weights");
  app.add_option("--epsilon", o.epsilon, "basispursuit: tie-break ridge");
  app.add_option("--v", o.v_diag, "adhinner: diagonal of V, one entry per trending row");
  app.add_option("--pre-reference", o.pre_reference,
                 "mean, or the label of a single pre-treatment period")
      ->capture_default_str();
}

std::vector<MethodConfig> methods_from(const MethodOptions& o) {
  auto ms = expand_methods(o.methods, parse_grid(o.lambdas, "--lambda", true),
                           parse_grid(o.alphas, "--alpha", true));
  for (auto& m : ms) {
    if (o.kappa) m.kappa = *o.kappa;
    if (o.epsilon) m.epsilon = *o.epsilon;
    if (o.kappa || o.epsilon) m.label = make_label(m);
  }
  return ms;
}

DidOptions did_from(const MethodOptions& o, const PanelDataset& data) {
  DidOptions did;
  if (o.pre_reference != "mean") {
    did.reference = PreReference::Single;
    did.single_period = data.period_index(o.pre_reference);
    if (did.single_period >= data.t0) {
      throw InvalidArgument("--pre-reference '" + o.pre_reference +
                            "' is not a pre-treatment period");
    }
  }
  return did;
}

json fit_json(const FitResult& fit, const PanelDataset& data) {
  const auto& m = fit.config;
  json j;
  j["label"] = m.label;
  j["method"] = base_name(m);
  j["kind"] = fit.solution ? "weights" : "regression";
  j["lambda"] = uses_lambda(m) ? number(m.lambda) : json(nullptr);
  j["alpha"] = (uses_alpha(m) || (m.kind == BenchKind::Weights && m.method == Method::BasisPursuit))
                   ? number(m.alpha)
                   : json(nullptr);
  j["kappa"] = (m.kind == BenchKind::Weights && m.method == Method::SoftNonneg)
                   ? number(m.kappa)
                   : json(nullptr);
  j["epsilon"] = (m.kind == BenchKind::Weights && m.method == Method::BasisPursuit)
                     ? number(m.epsilon)
                     : json(nullptr);
  json w = json::object();
  for (Index j2 = 0; j2 < fit.w.size(); ++j2) {
    w[data.unit_labels[static_cast<std::size_t>(j2 + 1)]] = number(fit.w(j2));
  }
  j["weights"] = w;
  j["sum_weights"] = number(fit.w.sum());
  j["l1_norm"] = number(fit.w.lpNorm<1>());
  j["l2_norm"] = number(fit.w.norm());
  if (fit.solution) {
    const auto& s = *fit.solution;
    j["intercept"] = nullptr;
    j["feas_residual"] = number(s.feas_residual);
    j["kkt_residual"] = number(s.kkt_residual);
    j["objective"] = number(s.objective);
    j["iterations"] = s.iterations;
    j["ridge_added"] = s.ridge_added;
    j["warnings"] = strings(s.warnings);
  } else {
    const auto& f = *fit.regression;
    j["intercept"] = number(f.c);
    j["feas_residual"] = nullptr;
    j["kkt_residual"] = number(f.kkt_residual);
    j["objective"] = number(f.residual_sse);
    j["iterations"] = f.iterations;
    j["ridge_added"] = false;
    json subset = json::array();
    for (Index idx : f.subset) subset.push_back(data.unit_labels[static_cast<std::size_t>(idx + 1)]);
    j["subset"] = subset;
    j["warnings"] = json::array();
  }
  j["depends_on_pre_outcomes"] = fit.depends_on_pre_outcomes;
  return j;
}

json effects_json(const FitResult& fit, const PanelDataset& data) {
  (void)data;
  const auto& e = fit.effects;
  json j;
  j["label"] = fit.config.label;
  j["ate"] = number(e.ate);
  j["pre_reference"] = number(e.pre_reference);
  j["intercept"] = number(e.intercept);
  j["tau"] = numbers(e.tau_by_period);
  return j;
}

json config_json(const SimulationConfig& c) {
  json j;
  j["dgp"] = c.dgp == DgpKind::Trending ? "trending" : "commontime";
  j["variant"] = c.variant == Variant::A ? "a" : "b";
  j["controls"] = c.J;
  j["pre_periods"] = c.T0;
  j["post_periods"] = c.T1;
  j["num_covariates"] = c.K;
  j["noise_scale"] = number(c.noise_scale);
  j["ar_coef"] = number(c.ar_coef);
  j["burn_in"] = c.burn_in;
  j["seed"] = c.seed;
  j["sigma_gamma"] = number(c.sigma_gamma);
  j["sigma_u"] = number(c.sigma_u);
  j["tau"] = numbers(c.tau);
  return j;
}

void add_simulation_options(CLI::App& app, SimulationConfig& c, std::string& variant,
                            std::string& dgp, std::string& tau) {
  app.add_option("--dgp", dgp, "trending or commontime")->capture_default_str();
  app.add_option("--variant", variant, "a, or b to hold pre-treatment trends flat")
      ->capture_default_str();
  app.add_option("--controls", c.J, "Number of untreated units")->capture_default_str();
  app.add_option("--pre-periods", c.T0, "Pre-treatment periods")->capture_default_str();
  app.add_option("--post-periods", c.T1, "Post-treatment periods")->capture_default_str();
  app.add_option("--num-covariates", c.K, "Trending covariates per unit")->capture_default_str();
  app.add_option("--noise", c.noise_scale, "Scale of the AR(1) noise")->capture_default_str();
  app.add_option("--ar", c.ar_coef, "AR(1) coefficient")->capture_default_str();
  app.add_option("--burn-in", c.burn_in, "AR(1) burn-in periods")->capture_default_str();
  app.add_option("--sigma-gamma", c.sigma_gamma, "commontime: sd of the period effect")
      ->capture_default_str();
  app.add_option("--sigma-u", c.sigma_u, "commontime: sd of the idiosyncratic term")
      ->capture_default_str();
  app.add_option("--tau", tau, "Injected effect: one value or one per post period");
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

void finish_simulation_options(SimulationConfig& c, const std::string& variant,
                               const std::string& dgp, const std::string& tau) {
  if (variant == "a" || variant == "A") {
    c.variant = Variant::A;
  } else if (variant == "b" || variant == "B") {
    c.variant = Variant::B;
  } else {
    throw InvalidArgument("--variant must be a or b, got '" + variant + "'");
  }
  if (dgp == "trending") {
    c.dgp = DgpKind::Trending;
  } else if (dgp == "commontime") {
    c.dgp = DgpKind::CommonTime;
  } else {
    throw InvalidArgument("--dgp must be trending or commontime, got '" + dgp + "'");
  }
  c.tau = parse_vector(tau, "--tau");
  c.validate();
}

}  // namespace trendbal::cli
