#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace trendbal {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Balanced panel of outcomes. Rows are periods, columns units; column 0 is
/// always the treated unit and columns 1..J the untreated units in input
/// order. The first `t0` periods are pre-treatment.
struct PanelDataset {
  MatrixXd outcomes;
  std::vector<std::string> unit_labels;
  std::vector<std::string> period_labels;
  Index t0 = 0;

  /// Validates and returns the dataset; throws on any broken invariant.
  static PanelDataset make(MatrixXd outcomes, std::vector<std::string> units,
                           std::vector<std::string> periods, Index t0);

  Index periods() const { return outcomes.rows(); }
  Index post_periods() const { return outcomes.rows() - t0; }
  Index controls() const { return outcomes.cols() - 1; }

  auto treated() const { return outcomes.col(0); }
  auto control_outcomes() const { return outcomes.rightCols(controls()); }

  Index period_index(std::string_view label) const;
  Index unit_index(std::string_view label) const;

  void validate() const;
};

enum class PanelLayout { Wide, Long };

PanelLayout parse_layout(std::string_view name);

/// Wide: header `period,<unit1>,...`; long: header `unit,period,outcome`.
/// `t0_label` names the last pre-treatment period. Long-format units and
/// all periods are ordered by label (numeric when every label is numeric).
PanelDataset load_panel(const std::string& path, PanelLayout layout,
                        const std::string& treated,
                        const std::string& t0_label);
PanelDataset parse_panel(std::istream& in, PanelLayout layout,
                         const std::string& treated,
                         const std::string& t0_label);

void write_panel(std::ostream& out, const PanelDataset& data,
                 PanelLayout layout);

/// Unit-level external covariates: CSV header `unit,<var1>,...,<varP>`.
struct ExternalTable {
  std::vector<std::string> units;
  std::vector<std::string> columns;
  MatrixXd values;  // units x columns

  bool empty() const { return columns.empty(); }
  double at(std::string_view unit, std::string_view column) const;
};

ExternalTable load_externals(const std::string& path);
ExternalTable parse_externals(std::istream& in);

/// One covariate row of z_i or q_i.
///
/// Text forms accepted by `parse`:
///   `col:NAME`        external column NAME
///   `mean:FROM..TO`   outcome averaged over periods FROM..TO inclusive
///   `lag:PERIOD`      outcome in a single period
///   `pre`             every pre-treatment outcome, one row each
///   `NAME`            shorthand for `col:NAME`
struct CovariateDef {
  enum class Kind { Column, OutcomeMean, OutcomeLag, PreOutcomes };

  Kind kind = Kind::Column;
  std::string column;
  std::string from;
  std::string to;

  static CovariateDef parse(std::string_view text);
  std::string label() const;
  bool references_outcomes() const { return kind != Kind::Column; }
};

struct CovariateSpec {
  std::vector<CovariateDef> trending;
  std::vector<CovariateDef> balancing;
  bool include_intercept_in_z = true;
  bool standardize_balancing = false;

  /// Comma-separated list of CovariateDef texts; empty string yields none.
  static std::vector<CovariateDef> parse_list(std::string_view text);
};

/// Exact-balancing system (z1, Z) and balancing system (q1, Q).
struct CovariateProblem {
  VectorXd z1;
  MatrixXd Z;
  VectorXd q1;
  MatrixXd Q;
  /// Per-row scale applied to (q1, Q); ones unless standardized.
  VectorXd normalization;

  std::vector<std::string> z_names;
  std::vector<std::string> q_names;
  bool z_uses_outcomes = false;
  bool q_uses_outcomes = false;
  std::vector<std::string> warnings;

  Index controls() const { return Z.cols(); }
  Index constraints() const { return Z.rows(); }
  Index balancing() const { return Q.rows(); }

  /// Builds a problem from raw matrices; names default to z0.., q0...
  /// Validation as in `validate(true)`.
  static CovariateProblem make(VectorXd z1, MatrixXd Z, VectorXd q1,
                               MatrixXd Q);

  /// Checks shapes, finiteness and full row rank of Z. With
  /// `allow_square` false the system must be strictly underdetermined.
  void validate(bool allow_square = true) const;
};

/// Index of the first row of `M` that is linearly dependent on the rows
/// before it, or -1 when M has full row rank.
Index first_dependent_row(const MatrixXd& M);

CovariateProblem build_problem(const PanelDataset& data,
                               const CovariateSpec& spec,
                               const ExternalTable& externals = {});

}  // namespace trendbal
