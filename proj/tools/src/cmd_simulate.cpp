#include "common.hpp"

#include "trendbal/error.hpp"

namespace trendbal::cli {

namespace {

struct SimOptions {
  SimulationConfig config;
  std::string variant = "a";
  std::string dgp = "trending";
  std::string tau;
  OutputOptions output;
};

struct CompareOptions {
  SimOptions sim;
  std::string methods = "cridge,di,hcw";
  Index seeds = 50;
};

std::vector<std::string> column_labels(const std::string& prefix, Index from, Index to) {
  std::vector<std::string> out;
  for (Index k = from; k <= to; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

int run_simulate(SimOptions o) {
  finish_simulation_options(o.config, o.variant, o.dgp, o.tau);
  const auto sim = simulate_dgp(o.config);
  const auto& data = sim.data;
  const auto& truth = sim.truth;
  const Index K = truth.z.rows();
  const auto dir = prepare_output(o.output);

  {
    std::ofstream out(dir / "dataset.csv");
    if (!out) throw Error("cannot write dataset.csv");
    write_panel(out, data, PanelLayout::Wide);
  }
  {
    std::vector<std::string> header{"unit"};
    for (const auto& l : column_labels("z", 1, K)) header.push_back(l);
    CsvWriter cov(dir / "covariates.csv", header);
    std::vector<std::string> th{"unit", "mu"};
    for (const auto& l : column_labels("z", 1, K)) th.push_back(l);
    CsvWriter units(dir / "truth_units.csv", th);
    for (std::size_t i = 0; i < data.unit_labels.size(); ++i) {
      const auto ii = static_cast<Index>(i);
      std::vector<std::string> row{data.unit_labels[i]};
      for (Index k = 0; k < K; ++k) row.push_back(cell(truth.z(k, ii)));
      cov.row(row);
      row.insert(row.begin() + 1, cell(truth.mu(ii)));
      units.row(row);
    }
  }
  {
    std::vector<std::string> header{"period"};
    header.insert(header.end(), data.unit_labels.begin(), data.unit_labels.end());
    CsvWriter y0(dir / "truth_y0.csv", header);
    std::vector<std::string> gh{"period"};
    for (const auto& l : column_labels("gamma", 0, truth.gamma.cols() - 1)) gh.push_back(l);
    CsvWriter gamma(dir / "truth_gamma.csv", gh);
    for (Index t = 0; t < data.periods(); ++t) {
      const auto& p = data.period_labels[static_cast<std::size_t>(t)];
      std::vector<std::string> row{p};
      for (Index i = 0; i < truth.y0.cols(); ++i) row.push_back(cell(truth.y0(t, i)));
      y0.row(row);
      std::vector<std::string> grow{p};
      for (Index k = 0; k < truth.gamma.cols(); ++k) grow.push_back(cell(truth.gamma(t, k)));
      gamma.row(grow);
    }
  }

  json doc;
  doc["metadata"] = metadata("simulate", o.output);
  doc["config"] = config_json(o.config);
  doc["treated"] = data.unit_labels[0];
  doc["t0"] = data.period_labels[static_cast<std::size_t>(data.t0 - 1)];
  doc["tau"] = numbers(truth.tau);
  doc["files"] = strings({"dataset.csv", "covariates.csv", "truth_units.csv", "truth_y0.csv",
                          "truth_gamma.csv"});
  write_json(dir / "simulation.json", doc);
  return 0;
}

int run_compare(CompareOptions o) {
  finish_simulation_options(o.sim.config, o.sim.variant, o.sim.dgp, o.sim.tau);
  if (o.seeds < 1) throw InvalidArgument("--seeds must be positive");
  std::vector<MethodConfig> methods;
  for (const auto& name : split(o.methods, ',')) methods.push_back(MethodConfig::parse(name));
  if (methods.empty()) throw InvalidArgument("--methods needs at least one method");

  const auto report = run_benchmark(o.sim.config, methods, o.seeds);
  const auto dir = prepare_output(o.sim.output);

  json doc;
  doc["metadata"] = metadata("compare", o.sim.output);
  doc["config"] = config_json(o.sim.config);
  doc["n_seeds"] = o.seeds;
  json seeds = json::array();
  for (auto s : report.seeds) seeds.push_back(s);
  doc["seeds"] = seeds;
  json blocks = json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto& s = report.summary[m];
    json b;
    b["label"] = methods[m].label;
    b["description"] = methods[m].describe();
    b["failures"] = s.failures;
    b["median_post_rmse"] = number(s.median_post_rmse);
    b["median_pre_rmse"] = number(s.median_pre_rmse);
    b["mean_post_rmse"] = number(s.mean_post_rmse);
    b["mean_one_minus_sum_w"] = number(s.mean_one_minus_sum_w);
    b["mean_ate"] = number(s.mean_ate);
    b["bias"] = numbers(s.bias);
    blocks.push_back(b);
  }
  doc["methods"] = blocks;
  write_json(dir / "report.json", doc);

  CsvWriter per(dir / "per_seed.csv", {"seed", "method", "ok", "post_rmse", "pre_rmse", "ate",
                                       "one_minus_sum_w", "error"});
  for (std::size_t s = 0; s < report.seeds.size(); ++s) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& r = report.outcomes[s][m];
      if (r.ok) {
        per.row({std::to_string(report.seeds[s]), methods[m].label, "1", cell(r.post_rmse),
                 cell(r.pre_rmse), cell(r.ate), cell(r.one_minus_sum_w), ""});
      } else {
        per.row({std::to_string(report.seeds[s]), methods[m].label, "0", "", "", "", "",
                 r.error});
      }
    }
  }

  std::vector<std::string> header{"period"};
  for (const auto& m : methods) header.push_back(m.label);
  CsvWriter bias(dir / "bias.csv", header);
  const Index T = o.sim.config.periods();
  for (Index t = 0; t < T; ++t) {
    std::vector<std::string> row{std::to_string(t + 1)};
    for (const auto& s : report.summary) {
      row.push_back(s.bias.size() == T ? cell(s.bias(t)) : std::string());
    }
    bias.row(row);
  }
  return 0;
}

}  // namespace

Command register_simulate(CLI::App& app) {
  auto opts = std::make_shared<SimOptions>();
  auto* sub = app.add_subcommand("simulate", "Generate a panel and its true components");
  add_simulation_options(*sub, opts->config, opts->variant, opts->dgp, opts->tau);
  add_output_options(*sub, opts->output);
  return {sub, [opts] { return run_simulate(*opts); }};
}

Command register_compare(CLI::App& app) {
  auto opts = std::make_shared<CompareOptions>();
  auto* sub = app.add_subcommand("compare", "Benchmark methods over simulated seeds");
  add_simulation_options(*sub, opts->sim.config, opts->sim.variant, opts->sim.dgp,
                         opts->sim.tau);
  sub->add_option("--methods", opts->methods,
                  "Comma-separated method specs, e.g. cridge:lambda=2,di,hcw")
      ->capture_default_str();
  sub->add_option("--seeds", opts->seeds, "Number of seeds, starting at --seed")
      ->capture_default_str();
  add_output_options(*sub, opts->sim.output);
  return {sub, [opts] { return run_compare(*opts); }};
}

}  // namespace trendbal::cli
