#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trendbal/estimators.hpp"
#include "trendbal/panel.hpp"
#include "trendbal/simulation.hpp"
#include "trendbal/solvers.hpp"

namespace trendbal::cli {

using json = nlohmann::ordered_json;

struct DataOptions {
  std::string data;
  std::string layout = "wide";
  std::string treated;
  std::string t0;
  std::string covariates;
  std::string trending;
  std::string balancing = "pre";
  bool no_intercept = false;
  bool standardize = false;
};

struct OutputOptions {
  std::string out = ".";
  bool deterministic = false;
};

void add_data_options(CLI::App& app, DataOptions& opts);
void add_output_options(CLI::App& app, OutputOptions& opts);

struct LoadedData {
  PanelDataset data;
  ExternalTable externals;
  CovariateProblem prob;
};

LoadedData load_data(const DataOptions& opts);

/// Creates the output directory and returns it.
std::filesystem::path prepare_output(const OutputOptions& opts);

/// Tool name and version, plus an ISO-8601 UTC timestamp unless
/// deterministic output was requested.
json metadata(const std::string& command, const OutputOptions& opts);

/// Finite values rounded to 12 significant digits, null otherwise.
json number(double x);
json numbers(const VectorXd& v);
json strings(const std::vector<std::string>& v);

void write_json(const std::filesystem::path& path, const json& doc);

/// Writes a header and rows of already formatted cells.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
};

std::string cell(double x);

/// "1,2,4" -> ascending unique values; empty text gives an empty grid.
std::vector<double> parse_grid(const std::string& text, const std::string& flag,
                               bool nonnegative);
/// "0..3" or "0,2,5" -> ascending unique nonnegative integers.
std::vector<Index> parse_index_grid(const std::string& text, const std::string& flag);
/// Comma-separated reals; empty text gives an empty vector.
VectorXd parse_vector(const std::string& text, const std::string& flag);
std::vector<std::string> split(const std::string& text, char sep);

/// Method specs expanded over the lambda and alpha grids. Grids left empty
/// keep each method's own default.
std::vector<MethodConfig> expand_methods(const std::string& methods,
                                         const std::vector<double>& lambdas,
                                         const std::vector<double>& alphas);

bool uses_lambda(const MethodConfig& m);
bool uses_alpha(const MethodConfig& m);

/// A fitted counterfactual from either a weight solver or a regression
/// baseline.
struct FitResult {
  MethodConfig config;
  std::optional<WeightSolution> solution;
  std::optional<InterceptFit> regression;
  VectorXd w;
  EffectEstimate effects;
  bool depends_on_pre_outcomes = false;
};

FitResult fit_method(const PanelDataset& data, const CovariateProblem& prob,
                     const MethodConfig& m, const VectorXd& v_diag,
                     const DidOptions& did = {});

/// Method, grid and pre-reference flags shared by fit and diagnose.
struct MethodOptions {
  std::string methods = "cridge";
  std::string lambdas;
  std::string alphas;
  std::optional<double> kappa;
  std::optional<double> epsilon;
  std::string v_diag;
  std::string pre_reference = "mean";
};

void add_method_options(CLI::App& app, MethodOptions& o);
std::vector<MethodConfig> methods_from(const MethodOptions& o);
DidOptions did_from(const MethodOptions& o, const PanelDataset& data);

WeightSolution solve_weights(const CovariateProblem& prob, const MethodConfig& m,
                             const VectorXd& v_diag);

json fit_json(const FitResult& fit, const PanelDataset& data);
json effects_json(const FitResult& fit, const PanelDataset& data);

json config_json(const SimulationConfig& c);
void add_simulation_options(CLI::App& app, SimulationConfig& c, std::string& variant,
                            std::string& dgp, std::string& tau);
void finish_simulation_options(SimulationConfig& c, const std::string& variant,
                               const std::string& dgp, const std::string& tau);

/// A subcommand and the action to run when it was selected.
struct Command {
  CLI::App* app;
  std::function<int()> run;
};

Command register_fit(CLI::App& app);
Command register_factors(CLI::App& app);
Command register_simulate(CLI::App& app);
Command register_compare(CLI::App& app);
Command register_diagnose(CLI::App& app);

}  // namespace trendbal::cli
