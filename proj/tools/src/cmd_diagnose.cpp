#include "common.hpp"

#include "trendbal/diagnostics.hpp"
#include "trendbal/error.hpp"

namespace trendbal::cli {

namespace {

struct DiagnoseOptions {
  DataOptions data;
  OutputOptions output;
  MethodOptions methods;
  bool pretrend = false;
  bool compatibility = false;
  std::string against = "maxshrink";
};

json report_json(const DiagnosticsReport& r, const std::string& label,
                 const std::string& against) {
  json j;
  j["label"] = label;
  j["test"] = std::string(test_kind_name(r.kind));
  j["against"] = against.empty() ? json(nullptr) : json(against);
  j["names"] = strings(r.names);
  j["coefficients"] = numbers(r.coefficients);
  j["std_errors"] = numbers(r.std_errors);
  j["t_stats"] = numbers(r.t_stats);
  j["p_values"] = numbers(r.p_values);
  j["f_stat"] = r.f_stat ? number(*r.f_stat) : json(nullptr);
  j["f_p_value"] = r.f_p_value ? number(*r.f_p_value) : json(nullptr);
  j["n_obs"] = r.n_obs;
  j["df_resid"] = r.df_resid;
  j["caveat"] = r.caveat;
  j["warnings"] = strings(r.warnings);
  return j;
}

int run_diagnose(DiagnoseOptions o) {
  if (!o.pretrend && !o.compatibility) o.pretrend = true;
  const auto loaded = load_data(o.data);
  const auto& data = loaded.data;
  const auto configs = methods_from(o.methods);
  const VectorXd v = parse_vector(o.methods.v_diag, "--v");

  std::optional<FitResult> reference;
  if (o.compatibility) {
    const auto ref = expand_methods(o.against, {}, {});
    if (ref.size() != 1) throw InvalidArgument("--against takes a single method");
    reference = fit_method(data, loaded.prob, ref[0], v);
  }

  json reports = json::array();
  for (const auto& m : configs) {
    const auto fit = fit_method(data, loaded.prob, m, v);
    if (o.pretrend) {
      reports.push_back(
          report_json(pretrend_test(data, fit.w, fit.depends_on_pre_outcomes), m.label, ""));
    }
    if (o.compatibility) {
      const bool caveat = fit.depends_on_pre_outcomes || reference->depends_on_pre_outcomes;
      reports.push_back(report_json(compatibility_test(data, fit.w, reference->w, caveat),
                                    m.label, reference->config.label));
    }
  }

  const auto dir = prepare_output(o.output);
  json doc;
  doc["metadata"] = metadata("diagnose", o.output);
  doc["treated"] = data.unit_labels[0];
  doc["t0"] = data.period_labels[static_cast<std::size_t>(data.t0 - 1)];
  doc["reports"] = reports;
  write_json(dir / "diagnostics.json", doc);
  return 0;
}

}  // namespace

Command register_diagnose(CLI::App& app) {
  auto opts = std::make_shared<DiagnoseOptions>();
  auto* sub = app.add_subcommand("diagnose", "Pre-trend and weight-compatibility regressions");
  add_data_options(*sub, opts->data);
  add_method_options(*sub, opts->methods);
  sub->add_flag("--pretrend", opts->pretrend, "Regress the pre-treatment gap on time (default)");
  sub->add_flag("--compatibility", opts->compatibility,
                "Compare each fitted weight vector with --against");
  sub->add_option("--against", opts->against, "Reference method for --compatibility")
      ->capture_default_str();
  add_output_options(*sub, opts->output);
  return {sub, [opts] { return run_diagnose(*opts); }};
}

}  // namespace trendbal::cli
