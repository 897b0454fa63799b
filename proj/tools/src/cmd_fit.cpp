#include "common.hpp"

namespace trendbal::cli {

namespace {

struct FitOptions {
  DataOptions data;
  OutputOptions output;
  MethodOptions methods;
};

int run_fit(const FitOptions& o) {
  const auto loaded = load_data(o.data);
  const auto& data = loaded.data;
  const auto configs = methods_from(o.methods);
  const VectorXd v = parse_vector(o.methods.v_diag, "--v");
  const DidOptions did = did_from(o.methods, data);

  std::vector<FitResult> fits;
  for (const auto& m : configs) fits.push_back(fit_method(data, loaded.prob, m, v, did));

  const auto dir = prepare_output(o.output);
  const auto& units = data.unit_labels;

  json weights;
  weights["metadata"] = metadata("fit", o.output);
  weights["treated"] = units[0];
  weights["controls"] = strings({units.begin() + 1, units.end()});
  weights["t0"] = data.period_labels[static_cast<std::size_t>(data.t0 - 1)];
  weights["trending"] = strings(loaded.prob.z_names);
  weights["balancing"] = strings(loaded.prob.q_names);
  weights["problem_warnings"] = strings(loaded.prob.warnings);
  json sols = json::array();
  for (const auto& f : fits) sols.push_back(fit_json(f, data));
  weights["solutions"] = sols;
  write_json(dir / "weights.json", weights);

  json effects;
  effects["metadata"] = metadata("fit", o.output);
  effects["treated"] = units[0];
  effects["pre_reference"] = o.methods.pre_reference;
  effects["post_periods"] =
      strings({data.period_labels.begin() + data.t0, data.period_labels.end()});
  json est = json::array();
  for (const auto& f : fits) est.push_back(effects_json(f, data));
  effects["estimates"] = est;
  write_json(dir / "effects.json", effects);

  std::vector<std::string> header{"period", "actual"};
  std::vector<std::string> gap_header{"period"};
  for (const auto& f : fits) {
    header.push_back(f.config.label);
    gap_header.push_back(f.config.label);
  }
  CsvWriter cf(dir / "counterfactual.csv", header);
  CsvWriter gap(dir / "gap.csv", gap_header);
  for (Index t = 0; t < data.periods(); ++t) {
    const auto& label = data.period_labels[static_cast<std::size_t>(t)];
    std::vector<std::string> row{label, cell(data.treated()(t))};
    std::vector<std::string> grow{label};
    for (const auto& f : fits) {
      row.push_back(cell(f.effects.counterfactual(t)));
      grow.push_back(cell(f.effects.gap_series(t)));
    }
    cf.row(row);
    gap.row(grow);
  }
  return 0;
}

}  // namespace

Command register_fit(CLI::App& app) {
  auto opts = std::make_shared<FitOptions>();
  auto* sub = app.add_subcommand("fit", "Fit balancing weights and treatment effects");
  add_data_options(*sub, opts->data);
  add_method_options(*sub, opts->methods);
  add_output_options(*sub, opts->output);
  return {sub, [opts] { return run_fit(*opts); }};
}

}  // namespace trendbal::cli
