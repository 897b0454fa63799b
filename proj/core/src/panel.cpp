#include "trendbal/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <Eigen/QR>

#include "trendbal/error.hpp"
#include "trendbal/io.hpp"

namespace trendbal {
namespace {

void require_unique(const std::vector<std::string>& labels,
                    const char* what) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw ParseError(std::string("duplicate ") + what + " label '" + l +
                       "'");
    }
  }
}

// Moves the treated unit to column 0, keeping the others in order.
PanelDataset assemble(const MatrixXd& by_unit,
                      const std::vector<std::string>& units,
                      std::vector<std::string> periods,
                      const std::string& treated,
                      const std::string& t0_label) {
  const auto it = std::find(units.begin(), units.end(), treated);
  if (it == units.end()) {
    throw LookupError("unknown treated unit '" + treated + "'");
  }
  const auto tcol = static_cast<Index>(it - units.begin());
  const auto pit = std::find(periods.begin(), periods.end(), t0_label);
  if (pit == periods.end()) {
    throw LookupError("unknown period '" + t0_label + "'");
  }
  const auto t0 = static_cast<Index>(pit - periods.begin()) + 1;

  MatrixXd out(by_unit.rows(), by_unit.cols());
  std::vector<std::string> labels;
  labels.reserve(units.size());
  out.col(0) = by_unit.col(tcol);
  labels.push_back(treated);
  Index c = 1;
  for (Index j = 0; j < by_unit.cols(); ++j) {
    if (j == tcol) continue;
    out.col(c++) = by_unit.col(j);
    labels.push_back(units[static_cast<std::size_t>(j)]);
  }
  return PanelDataset::make(std::move(out), std::move(labels),
                            std::move(periods), t0);
}

PanelDataset parse_wide(const std::vector<io::CsvRow>& rows,
                        const std::string& treated,
                        const std::string& t0_label) {
  if (rows.empty()) throw ParseError("empty panel file");
  const auto& header = rows.front();
  if (header.size() < 3 || header[0] != "period") {
    throw ParseError(
        "wide panel header must be 'period,<unit1>,...,<unitN>' with at "
        "least two units");
  }
  std::vector<std::string> units(header.begin() + 1, header.end());
  require_unique(units, "unit");

  std::map<std::string, std::vector<double>> by_period;
  std::vector<std::string> periods;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.empty() || row[0].empty()) throw ParseError("missing period label");
    const auto& period = row[0];
    if (by_period.count(period)) {
      throw ParseError("duplicate period label '" + period + "'");
    }
    std::vector<double> values(units.size(), std::nan(""));
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (u + 1 >= row.size() || row[u + 1].empty()) {
        throw BalancedPanelError(units[u], period);
      }
      values[u] = io::parse_double(
          row[u + 1], "unit '" + units[u] + "', period '" + period + "'");
    }
    by_period.emplace(period, std::move(values));
    periods.push_back(period);
  }
  io::sort_labels(periods);

  MatrixXd m(static_cast<Index>(periods.size()),
             static_cast<Index>(units.size()));
  for (std::size_t t = 0; t < periods.size(); ++t) {
    const auto& v = by_period.at(periods[t]);
    for (std::size_t u = 0; u < units.size(); ++u) {
      m(static_cast<Index>(t), static_cast<Index>(u)) = v[u];
    }
  }
  return assemble(m, units, std::move(periods), treated, t0_label);
}

PanelDataset parse_long(const std::vector<io::CsvRow>& rows,
                        const std::string& treated,
                        const std::string& t0_label) {
  if (rows.empty()) throw ParseError("empty panel file");
  const auto& header = rows.front();
  if (header.size() != 3 || header[0] != "unit" || header[1] != "period" ||
      header[2] != "outcome") {
    throw ParseError("long panel header must be 'unit,period,outcome'");
  }
  std::map<std::pair<std::string, std::string>, double> cells;
  std::set<std::string> unit_set;
  std::set<std::string> period_set;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 3) {
      throw ParseError("long panel row " + std::to_string(r + 1) +
                       " must have 3 fields");
    }
    const double v = io::parse_double(
        row[2], "unit '" + row[0] + "', period '" + row[1] + "'");
    if (!cells.emplace(std::make_pair(row[0], row[1]), v).second) {
      throw ParseError("duplicate cell for unit '" + row[0] + "', period '" +
                       row[1] + "'");
    }
    unit_set.insert(row[0]);
    period_set.insert(row[1]);
  }
  std::vector<std::string> units(unit_set.begin(), unit_set.end());
  std::vector<std::string> periods(period_set.begin(), period_set.end());
  io::sort_labels(units);
  io::sort_labels(periods);

  MatrixXd m(static_cast<Index>(periods.size()),
             static_cast<Index>(units.size()));
  for (std::size_t u = 0; u < units.size(); ++u) {
    for (std::size_t t = 0; t < periods.size(); ++t) {
      const auto it = cells.find({units[u], periods[t]});
      if (it == cells.end()) throw BalancedPanelError(units[u], periods[t]);
      m(static_cast<Index>(t), static_cast<Index>(u)) = it->second;
    }
  }
  return assemble(m, units, std::move(periods), treated, t0_label);
}

double column_sd(const Eigen::Ref<const VectorXd>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() /
                   static_cast<double>(v.size() - 1));
}

}  // namespace

PanelDataset PanelDataset::make(MatrixXd outcomes,
                                std::vector<std::string> units,
                                std::vector<std::string> periods, Index t0) {
  PanelDataset d{std::move(outcomes), std::move(units), std::move(periods),
                 t0};
  d.validate();
  return d;
}

void PanelDataset::validate() const {
  if (outcomes.cols() < 2) {
    throw DimensionError("panel needs a treated unit and at least one control");
  }
  if (static_cast<Index>(unit_labels.size()) != outcomes.cols()) {
    throw DimensionError("unit label count does not match outcome columns");
  }
  if (static_cast<Index>(period_labels.size()) != outcomes.rows()) {
    throw DimensionError("period label count does not match outcome rows");
  }
  if (t0 < 1 || t0 >= outcomes.rows()) {
    throw DimensionError("t0 must satisfy 1 <= t0 < T (t0=" +
                         std::to_string(t0) +
                         ", T=" + std::to_string(outcomes.rows()) + ")");
  }
  require_unique(unit_labels, "unit");
  require_unique(period_labels, "period");
  for (Index j = 0; j < outcomes.cols(); ++j) {
    for (Index t = 0; t < outcomes.rows(); ++t) {
      if (!std::isfinite(outcomes(t, j))) {
        throw BalancedPanelError(unit_labels[static_cast<std::size_t>(j)],
                                 period_labels[static_cast<std::size_t>(t)]);
      }
    }
  }
}

Index PanelDataset::period_index(std::string_view label) const {
  const auto it =
      std::find(period_labels.begin(), period_labels.end(), label);
  if (it == period_labels.end()) {
    throw LookupError("unknown period '" + std::string(label) + "'");
  }
  return static_cast<Index>(it - period_labels.begin());
}

Index PanelDataset::unit_index(std::string_view label) const {
  const auto it = std::find(unit_labels.begin(), unit_labels.end(), label);
  if (it == unit_labels.end()) {
    throw LookupError("unknown unit '" + std::string(label) + "'");
  }
  return static_cast<Index>(it - unit_labels.begin());
}

PanelLayout parse_layout(std::string_view name) {
  if (name == "wide") return PanelLayout::Wide;
  if (name == "long") return PanelLayout::Long;
  throw InvalidArgument("layout must be 'wide' or 'long', got '" +
                        std::string(name) + "'");
}

PanelDataset parse_panel(std::istream& in, PanelLayout layout,
                         const std::string& treated,
                         const std::string& t0_label) {
  const auto rows = io::read_csv(in);
  return layout == PanelLayout::Wide ? parse_wide(rows, treated, t0_label)
                                     : parse_long(rows, treated, t0_label);
}

PanelDataset load_panel(const std::string& path, PanelLayout layout,
                        const std::string& treated,
                        const std::string& t0_label) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open panel file: " + path);
  return parse_panel(in, layout, treated, t0_label);
}

void write_panel(std::ostream& out, const PanelDataset& data,
                 PanelLayout layout) {
  if (layout == PanelLayout::Wide) {
    io::CsvRow header{"period"};
    header.insert(header.end(), data.unit_labels.begin(),
                  data.unit_labels.end());
    io::write_csv_row(out, header);
    for (Index t = 0; t < data.periods(); ++t) {
      io::CsvRow row{data.period_labels[static_cast<std::size_t>(t)]};
      for (Index j = 0; j < data.outcomes.cols(); ++j) {
        row.push_back(io::format_number(data.outcomes(t, j)));
      }
      io::write_csv_row(out, row);
    }
    return;
  }
  io::write_csv_row(out, {"unit", "period", "outcome"});
  for (Index j = 0; j < data.outcomes.cols(); ++j) {
    for (Index t = 0; t < data.periods(); ++t) {
      io::write_csv_row(out, {data.unit_labels[static_cast<std::size_t>(j)],
                              data.period_labels[static_cast<std::size_t>(t)],
                              io::format_number(data.outcomes(t, j))});
    }
  }
}

double ExternalTable::at(std::string_view unit, std::string_view column) const {
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (c == columns.end()) {
    throw LookupError("unknown covariate column '" + std::string(column) + "'");
  }
  const auto u = std::find(units.begin(), units.end(), unit);
  if (u == units.end()) {
    throw LookupError("covariate table has no row for unit '" +
                      std::string(unit) + "'");
  }
  return values(static_cast<Index>(u - units.begin()),
                static_cast<Index>(c - columns.begin()));
}

ExternalTable parse_externals(std::istream& in) {
  const auto rows = io::read_csv(in);
  if (rows.empty() || rows.front().empty() || rows.front()[0] != "unit") {
    throw ParseError("covariate header must be 'unit,<var1>,...,<varP>'");
  }
  ExternalTable t;
  t.columns.assign(rows.front().begin() + 1, rows.front().end());
  require_unique(t.columns, "covariate column");
  t.values.resize(static_cast<Index>(rows.size() - 1),
                  static_cast<Index>(t.columns.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != t.columns.size() + 1) {
      throw ParseError("covariate row " + std::to_string(r + 1) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(t.columns.size() + 1));
    }
    t.units.push_back(row[0]);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      t.values(static_cast<Index>(r - 1), static_cast<Index>(c)) =
          io::parse_double(row[c + 1],
                           "covariate '" + t.columns[c] + "', unit '" +
                               row[0] + "'");
    }
  }
  require_unique(t.units, "unit");
  return t;
}

ExternalTable load_externals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open covariate file: " + path);
  return parse_externals(in);
}

CovariateDef CovariateDef::parse(std::string_view text) {
  CovariateDef d;
  if (text == "pre") {
    d.kind = Kind::PreOutcomes;
    return d;
  }
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    if (text.empty()) throw ParseError("empty covariate definition");
    d.column = std::string(text);
    return d;
  }
  const auto head = text.substr(0, colon);
  const auto rest = text.substr(colon + 1);
  if (head == "col") {
    if (rest.empty()) throw ParseError("col: needs a column name");
    d.column = std::string(rest);
  } else if (head == "lag") {
    if (rest.empty()) throw ParseError("lag: needs a period label");
    d.kind = Kind::OutcomeLag;
    d.from = d.to = std::string(rest);
  } else if (head == "mean") {
    const auto dots = rest.find("..");
    if (dots == std::string_view::npos || dots == 0 ||
        dots + 2 >= rest.size()) {
      throw ParseError("mean: window must look like FROM..TO, got '" +
                       std::string(rest) + "'");
    }
    d.kind = Kind::OutcomeMean;
    d.from = std::string(rest.substr(0, dots));
    d.to = std::string(rest.substr(dots + 2));
  } else {
    throw ParseError("unknown covariate kind '" + std::string(head) + "'");
  }
  return d;
}

std::string CovariateDef::label() const {
  switch (kind) {
    case Kind::Column:
      return column;
    case Kind::OutcomeMean:
      return "mean:" + from + ".." + to;
    case Kind::OutcomeLag:
      return "lag:" + from;
    case Kind::PreOutcomes:
      return "pre";
  }
  return {};
}

std::vector<CovariateDef> CovariateSpec::parse_list(std::string_view text) {
  std::vector<CovariateDef> defs;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(
        start, comma == std::string_view::npos ? text.size() - start
                                               : comma - start);
    if (!piece.empty()) defs.push_back(CovariateDef::parse(piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return defs;
}

Index first_dependent_row(const MatrixXd& M) {
  if (M.rows() == 0) return -1;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  for (Index k = 1; k <= M.rows(); ++k) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(M.topRows(k).transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < k || M.row(k - 1).cwiseAbs().maxCoeff() <= 1e-14 * scale) {
      return k - 1;
    }
  }
  return -1;
}

CovariateProblem CovariateProblem::make(VectorXd z1, MatrixXd Z, VectorXd q1,
                                        MatrixXd Q) {
  CovariateProblem p;
  p.z1 = std::move(z1);
  p.Z = std::move(Z);
  p.q1 = std::move(q1);
  p.Q = std::move(Q);
  if (p.Q.size() == 0 && p.Q.cols() != p.Z.cols()) p.Q.resize(0, p.Z.cols());
  p.normalization = VectorXd::Ones(p.Q.rows());
  for (Index i = 0; i < p.Z.rows(); ++i) p.z_names.push_back("z" + std::to_string(i));
  for (Index i = 0; i < p.Q.rows(); ++i) p.q_names.push_back("q" + std::to_string(i));
  p.validate(true);
  return p;
}

void CovariateProblem::validate(bool allow_square) const {
  const Index J = Z.cols();
  if (J < 1) throw DimensionError("problem has no untreated units");
  if (z1.size() != Z.rows()) {
    throw DimensionError("z1 length does not match rows of Z");
  }
  if (q1.size() != Q.rows() || (Q.rows() > 0 && Q.cols() != J)) {
    throw DimensionError("q1/Q shapes are inconsistent with Z");
  }
  if (!z1.allFinite() || !Z.allFinite() || !q1.allFinite() || !Q.allFinite()) {
    throw ParseError("covariate problem contains non-finite values");
  }
  if (Z.rows() > J || (!allow_square && Z.rows() >= J)) {
    throw DimensionError(
        "exact-balancing system needs fewer constraints than untreated "
        "units: K+1=" + std::to_string(Z.rows()) +
        ", J=" + std::to_string(J));
  }
  const Index dep = first_dependent_row(Z);
  if (dep >= 0) {
    const auto name = dep < static_cast<Index>(z_names.size())
                          ? z_names[static_cast<std::size_t>(dep)]
                          : std::to_string(dep);
    throw RankError("Z is not of full row rank: row " + std::to_string(dep) +
                        " ('" + name + "') depends on earlier rows",
                    dep);
  }
}

namespace {

struct BuiltRows {
  MatrixXd rows;  // n x (J+1), column 0 treated
  std::vector<std::string> names;
  bool uses_outcomes = false;
};

BuiltRows build_rows(const PanelDataset& data,
                     const std::vector<CovariateDef>& defs,
                     const ExternalTable& externals) {
  const Index units = data.outcomes.cols();
  std::vector<VectorXd> rows;
  BuiltRows out;
  auto check_pre = [&](Index idx, const std::string& label) {
    if (idx >= data.t0) {
      throw InvalidArgument("covariate references period '" + label +
                            "' which is not pre-treatment");
    }
  };
  for (const auto& def : defs) {
    switch (def.kind) {
      case CovariateDef::Kind::Column: {
        if (std::find(externals.columns.begin(), externals.columns.end(),
                      def.column) == externals.columns.end()) {
          throw LookupError("unknown covariate column '" + def.column + "'");
        }
        VectorXd r(units);
        for (Index j = 0; j < units; ++j) {
          r(j) = externals.at(data.unit_labels[static_cast<std::size_t>(j)],
                              def.column);
        }
        rows.push_back(std::move(r));
        out.names.push_back(def.label());
        break;
      }
      case CovariateDef::Kind::OutcomeLag: {
        const Index t = data.period_index(def.from);
        check_pre(t, def.from);
        rows.push_back(data.outcomes.row(t).transpose());
        out.names.push_back(def.label());
        out.uses_outcomes = true;
        break;
      }
      case CovariateDef::Kind::OutcomeMean: {
        const Index a = data.period_index(def.from);
        const Index b = data.period_index(def.to);
        if (b < a) {
          throw InvalidArgument("empty averaging window " + def.label());
        }
        check_pre(b, def.to);
        // Plain per-unit sums keep the result independent of column order.
        VectorXd r(units);
        for (Index j = 0; j < units; ++j) {
          double sum = 0.0;
          for (Index t = a; t <= b; ++t) sum += data.outcomes(t, j);
          r(j) = sum / static_cast<double>(b - a + 1);
        }
        rows.push_back(std::move(r));
        out.names.push_back(def.label());
        out.uses_outcomes = true;
        break;
      }
      case CovariateDef::Kind::PreOutcomes:
        for (Index t = 0; t < data.t0; ++t) {
          rows.push_back(data.outcomes.row(t).transpose());
          out.names.push_back("y:" +
                              data.period_labels[static_cast<std::size_t>(t)]);
        }
        out.uses_outcomes = true;
        break;
    }
  }
  out.rows.resize(static_cast<Index>(rows.size()), units);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.rows.row(static_cast<Index>(i)) = rows[i].transpose();
  }
  return out;
}

}  // namespace

CovariateProblem build_problem(const PanelDataset& data,
                               const CovariateSpec& spec,
                               const ExternalTable& externals) {
  data.validate();
  const Index J = data.controls();

  auto trending = build_rows(data, spec.trending, externals);
  if (spec.include_intercept_in_z) {
    MatrixXd with(trending.rows.rows() + 1, data.outcomes.cols());
    with.row(0).setOnes();
    if (trending.rows.rows() > 0) with.bottomRows(trending.rows.rows()) = trending.rows;
    trending.rows = std::move(with);
    trending.names.insert(trending.names.begin(), "intercept");
  }
  if (trending.rows.rows() == 0) {
    throw InvalidArgument("no trending covariates: enable the intercept or "
                          "name at least one covariate");
  }
  auto balancing = build_rows(data, spec.balancing, externals);

  CovariateProblem p;
  p.z1 = trending.rows.col(0);
  p.Z = trending.rows.rightCols(J);
  p.z_names = std::move(trending.names);
  p.z_uses_outcomes = trending.uses_outcomes;
  if (balancing.rows.rows() > 0) {
    p.q1 = balancing.rows.col(0);
    p.Q = balancing.rows.rightCols(J);
  } else {
    p.q1.resize(0);
    p.Q.resize(0, J);
  }
  p.q_names = std::move(balancing.names);
  p.q_uses_outcomes = balancing.uses_outcomes;
  p.normalization = VectorXd::Ones(p.Q.rows());
  if (spec.standardize_balancing) {
    for (Index i = 0; i < p.Q.rows(); ++i) {
      const double sd = column_sd(p.Q.row(i).transpose());
      if (sd > 0.0) p.normalization(i) = 1.0 / sd;
    }
    p.q1 = p.q1.cwiseProduct(p.normalization);
    p.Q = p.normalization.asDiagonal() * p.Q;
  }
  if (p.Z.rows() >= J) {
    throw DimensionError(
        "exact-balancing system is not underdetermined: K+1=" +
        std::to_string(p.Z.rows()) + " >= J=" + std::to_string(J) +
        "; drop trending covariates or add untreated units");
  }
  p.validate(false);
  return p;
}

}  // namespace trendbal
