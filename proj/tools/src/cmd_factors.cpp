#include "common.hpp"

#include "trendbal/error.hpp"
#include "trendbal/factors.hpp"

namespace trendbal::cli {

namespace {

struct FactorOptions {
  DataOptions data;
  OutputOptions output;
  std::string r = "0..3";
  std::string method = "cridge";
  std::optional<double> lambda;
  std::string v_diag;
};

int run_factors(const FactorOptions& o) {
  const auto loaded = load_data(o.data);
  const auto& data = loaded.data;
  const auto rs = parse_index_grid(o.r, "--r");
  MethodConfig m = expand_methods(o.method, o.lambda ? std::vector<double>{*o.lambda}
                                                     : std::vector<double>{},
                                  {})
                       .at(0);
  if (m.kind != BenchKind::Weights) {
    throw InvalidArgument("factors needs a weight method, got '" + o.method + "'");
  }
  const VectorXd v = parse_vector(o.v_diag, "--v");

  const MatrixXd A = build_projected_matrix(data, loaded.prob);
  const Index rmax = rs.back();
  const auto top = estimate_factors(A, rmax);

  struct PerR {
    Index r;
    FactorEstimate fe;
    FitResult fit;
    std::vector<std::string> warnings;
  };
  std::vector<PerR> runs;
  for (Index r : rs) {
    auto fe = estimate_factors(A, r);
    const auto aug = augment_constraints(loaded.prob, fe);
    auto fit = fit_method(data, aug, m, v);
    auto warnings = fe.warnings;
    warnings.insert(warnings.end(), aug.warnings.begin(), aug.warnings.end());
    runs.push_back({r, std::move(fe), std::move(fit), std::move(warnings)});
  }

  const auto dir = prepare_output(o.output);
  const auto& units = data.unit_labels;

  {
    CsvWriter eig(dir / "eigenvalues.csv", {"index", "eigenvalue"});
    for (Index i = 0; i < top.all_eigenvalues.size(); ++i) {
      eig.row({std::to_string(i + 1), cell(top.all_eigenvalues(i))});
    }
  }
  {
    std::vector<std::string> header{"unit"};
    for (Index k = 1; k <= rmax; ++k) header.push_back("h" + std::to_string(k));
    CsvWriter load(dir / "loadings.csv", header);
    for (std::size_t i = 0; i < units.size(); ++i) {
      std::vector<std::string> row{units[i]};
      for (Index k = 0; k < rmax; ++k) row.push_back(cell(top.loadings(k, static_cast<Index>(i))));
      load.row(row);
    }
  }
  {
    std::vector<std::string> header{"period", "actual"};
    for (const auto& run : runs) header.push_back("r=" + std::to_string(run.r));
    CsvWriter all(dir / "counterfactual.csv", header);
    for (Index t = 0; t < data.periods(); ++t) {
      std::vector<std::string> row{data.period_labels[static_cast<std::size_t>(t)],
                                   cell(data.treated()(t))};
      for (const auto& run : runs) row.push_back(cell(run.fit.effects.counterfactual(t)));
      all.row(row);
    }
  }
  for (const auto& run : runs) {
    CsvWriter cf(dir / ("counterfactual_r" + std::to_string(run.r) + ".csv"),
                 {"period", "actual", "counterfactual", "gap"});
    for (Index t = 0; t < data.periods(); ++t) {
      cf.row({data.period_labels[static_cast<std::size_t>(t)], cell(data.treated()(t)),
              cell(run.fit.effects.counterfactual(t)), cell(run.fit.effects.gap_series(t))});
    }
  }

  json doc;
  doc["metadata"] = metadata("factors", o.output);
  doc["treated"] = units[0];
  doc["method"] = m.label;
  doc["trending"] = strings(loaded.prob.z_names);
  doc["balancing"] = strings(loaded.prob.q_names);
  doc["eigenvalues"] = numbers(top.all_eigenvalues);
  json fits = json::array();
  for (const auto& run : runs) {
    json f;
    f["r"] = run.r;
    f["residual_fro"] = number(run.fe.residual_fro);
    f["solution"] = fit_json(run.fit, data);
    f["effects"] = effects_json(run.fit, data);
    f["warnings"] = strings(run.warnings);
    fits.push_back(f);
  }
  doc["fits"] = fits;
  write_json(dir / "factors.json", doc);
  return 0;
}

}  // namespace

Command register_factors(CLI::App& app) {
  auto opts = std::make_shared<FactorOptions>();
  auto* sub = app.add_subcommand(
      "factors", "Estimate factor loadings and refit with them as balancing constraints");
  add_data_options(*sub, opts->data);
  sub->add_option("--r", opts->r, "Factor counts, e.g. 0..3 or 0,2,4")->capture_default_str();
  sub->add_option("--method", opts->method, "Weight method")->capture_default_str();
  sub->add_option("--lambda", opts->lambda, "Penalty for the weight method");
  sub->add_option("--v", opts->v_diag, "adhinner: diagonal of V");
  add_output_options(*sub, opts->output);
  return {sub, [opts] { return run_factors(*opts); }};
}

}  // namespace trendbal::cli
