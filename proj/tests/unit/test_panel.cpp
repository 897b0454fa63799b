#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "trendbal/error.hpp"
#include "trendbal/panel.hpp"

using namespace trendbal;

namespace {

PanelDataset parse(const std::string& text, PanelLayout layout,
                   const std::string& treated, const std::string& t0) {
  std::istringstream in(text);
  return parse_panel(in, layout, treated, t0);
}

PanelDataset random_panel(std::mt19937_64& gen, Index T, Index units,
                          Index t0) {
  std::vector<std::string> u, p;
  for (Index j = 0; j < units; ++j) u.push_back("u" + std::to_string(j));
  for (Index t = 0; t < T; ++t) p.push_back(std::to_string(1990 + t));
  return PanelDataset::make(oracle::normals(gen, T, units), u, p, t0);
}

ExternalTable table(const std::string& text) {
  std::istringstream in(text);
  return parse_externals(in);
}

}  // namespace

TEST(Panel, WideSmall) {
  const auto d = parse("period,a,b\n1,1.5,2\n2,3,4\n3,5,6e1\n",
                       PanelLayout::Wide, "a", "2");
  EXPECT_EQ(d.outcomes.rows(), 3);
  EXPECT_EQ(d.outcomes.cols(), 2);
  EXPECT_EQ(d.t0, 2);
  EXPECT_DOUBLE_EQ(d.outcomes(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(d.outcomes(2, 1), 60.0);
}

TEST(Panel, TreatedMovesToFirstColumn) {
  const auto d = parse("period,a,b,c\n1,1,2,3\n2,4,5,6\n", PanelLayout::Wide,
                       "b", "1");
  EXPECT_EQ(d.unit_labels, (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_DOUBLE_EQ(d.outcomes(1, 0), 5);
  EXPECT_DOUBLE_EQ(d.outcomes(1, 1), 4);
  EXPECT_DOUBLE_EQ(d.outcomes(1, 2), 6);
}

TEST(Panel, LongOrderIndependent) {
  const std::string sorted =
      "unit,period,outcome\na,1,1\na,2,2\na,3,3\nb,1,4\nb,2,5\nb,3,6\n";
  const std::string shuffled =
      "unit,period,outcome\nb,3,6\na,2,2\nb,1,4\na,3,3\na,1,1\nb,2,5\n";
  const auto x = parse(sorted, PanelLayout::Long, "a", "2");
  const auto y = parse(shuffled, PanelLayout::Long, "a", "2");
  EXPECT_EQ(x.outcomes, y.outcomes);
  EXPECT_EQ(x.unit_labels, y.unit_labels);
  EXPECT_EQ(x.period_labels, y.period_labels);
}

TEST(Panel, NumericPeriodOrdering) {
  const auto d = parse("unit,period,outcome\na,10,3\na,9,2\nb,10,1\nb,9,0\n",
                       PanelLayout::Long, "a", "9");
  EXPECT_EQ(d.period_labels, (std::vector<std::string>{"9", "10"}));
  EXPECT_EQ(d.t0, 1);
}

TEST(Panel, MissingCellNamed) {
  try {
    parse("unit,period,outcome\na,1,1\na,2,2\nb,1,3\n", PanelLayout::Long, "a",
          "1");
    FAIL();
  } catch (const BalancedPanelError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'b'"), std::string::npos);
    EXPECT_NE(msg.find("'2'"), std::string::npos);
  }
  EXPECT_THROW(parse("period,a,b\n1,1,\n2,3,4\n", PanelLayout::Wide, "a", "1"),
               BalancedPanelError);
}

TEST(Panel, BadInputsRejected) {
  EXPECT_THROW(parse("period,a,b\n1,1,2\n2,3,4\n", PanelLayout::Wide, "z", "1"),
               LookupError);
  EXPECT_THROW(parse("period,a,b\n1,1,2\n2,3,4\n", PanelLayout::Wide, "a", "7"),
               LookupError);
  EXPECT_THROW(parse("period,a,b\n1,1,x\n2,3,4\n", PanelLayout::Wide, "a", "1"),
               ParseError);
  // t0 must leave a post period.
  EXPECT_THROW(parse("period,a,b\n1,1,2\n2,3,4\n", PanelLayout::Wide, "a", "2"),
               DimensionError);
  EXPECT_THROW(parse_layout("tall"), InvalidArgument);
}

TEST(Panel, WideLongWideRoundTrip) {
  std::mt19937_64 gen(1);
  const auto d = random_panel(gen, 7, 5, 4);
  std::ostringstream wide;
  write_panel(wide, d, PanelLayout::Wide);
  const auto a = parse(wide.str(), PanelLayout::Wide, "u0", "1993");
  std::ostringstream lng;
  write_panel(lng, a, PanelLayout::Long);
  const auto b = parse(lng.str(), PanelLayout::Long, "u0", "1993");
  std::ostringstream wide2;
  write_panel(wide2, b, PanelLayout::Wide);
  const auto c = parse(wide2.str(), PanelLayout::Wide, "u0", "1993");
  EXPECT_EQ(a.outcomes, c.outcomes);
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_EQ(a.unit_labels, c.unit_labels);
}

TEST(BuildProblem, InterceptOnly) {
  std::mt19937_64 gen(2);
  const auto d = random_panel(gen, 6, 5, 3);
  CovariateSpec spec;
  const auto p = build_problem(d, spec);
  EXPECT_EQ(p.Z.rows(), 1);
  EXPECT_TRUE((p.Z.array() == 1.0).all());
  EXPECT_EQ(p.z1(0), 1.0);
  EXPECT_EQ(p.Q.rows(), 0);
  EXPECT_FALSE(p.z_uses_outcomes);
}

TEST(BuildProblem, PreOutcomesBalancing) {
  std::mt19937_64 gen(3);
  const auto d = random_panel(gen, 8, 6, 5);
  CovariateSpec spec;
  spec.balancing = CovariateSpec::parse_list("pre");
  const auto p = build_problem(d, spec);
  EXPECT_EQ(p.Q, d.outcomes.topRightCorner(5, 5));
  EXPECT_EQ(p.q1, d.outcomes.col(0).head(5));
  EXPECT_TRUE(p.q_uses_outcomes);
  EXPECT_EQ(p.q_names.front(), "y:1990");
}

TEST(BuildProblem, WindowsLagsAndColumns) {
  std::mt19937_64 gen(4);
  const auto d = random_panel(gen, 8, 6, 5);
  const auto ext = table("unit,x,y\nu0,1,2\nu1,3,4\nu2,5,7\nu3,7,6\nu4,9,1\nu5,2,2\n");
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("x,col:y");
  spec.balancing = CovariateSpec::parse_list("mean:1991..1993,lag:1994");
  const auto p = build_problem(d, spec, ext);
  EXPECT_EQ(p.z_names, (std::vector<std::string>{"intercept", "x", "y"}));
  EXPECT_DOUBLE_EQ(p.z1(1), 1);
  EXPECT_DOUBLE_EQ(p.Z(2, 1), 7);
  const double mean = d.outcomes.block(1, 3, 3, 1).mean();
  EXPECT_NEAR(p.Q(0, 2), mean, 1e-15);
  EXPECT_EQ(p.Q(1, 0), d.outcomes(4, 1));
  EXPECT_FALSE(p.z_uses_outcomes);
  EXPECT_TRUE(p.q_uses_outcomes);
}

TEST(BuildProblem, DuplicatedTrendingRowRejected) {
  std::mt19937_64 gen(5);
  const auto d = random_panel(gen, 8, 6, 5);
  const auto ext = table("unit,x\nu0,1\nu1,3\nu2,5\nu3,7\nu4,9\nu5,2\n");
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("x,x");
  try {
    build_problem(d, spec, ext);
    FAIL();
  } catch (const RankError& e) {
    EXPECT_EQ(e.index(), 2);
  }
}

TEST(BuildProblem, OverdeterminedRejected) {
  std::mt19937_64 gen(6);
  const auto d = random_panel(gen, 8, 4, 5);
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("lag:1990,lag:1991,lag:1992");
  EXPECT_THROW(build_problem(d, spec), DimensionError);
}

TEST(BuildProblem, PostPeriodReferenceRejected) {
  std::mt19937_64 gen(7);
  const auto d = random_panel(gen, 8, 6, 5);
  CovariateSpec spec;
  spec.balancing = CovariateSpec::parse_list("lag:1996");
  EXPECT_THROW(build_problem(d, spec), InvalidArgument);
  spec.balancing = CovariateSpec::parse_list("mean:1993..1995");
  EXPECT_THROW(build_problem(d, spec), InvalidArgument);
}

TEST(BuildProblem, MissingColumnNamed) {
  std::mt19937_64 gen(8);
  const auto d = random_panel(gen, 8, 6, 5);
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("beer");
  try {
    build_problem(d, spec, table("unit,x\nu0,1\n"));
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("beer"), std::string::npos);
  }
}

TEST(BuildProblem, PermutationEquivariant) {
  std::mt19937_64 gen(9);
  const auto d = random_panel(gen, 9, 8, 6);
  std::vector<Index> perm(7);
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), gen);
  MatrixXd Y(d.outcomes.rows(), d.outcomes.cols());
  std::vector<std::string> units{d.unit_labels[0]};
  Y.col(0) = d.outcomes.col(0);
  for (Index k = 0; k < 7; ++k) {
    Y.col(k + 1) = d.outcomes.col(perm[static_cast<std::size_t>(k)]);
    units.push_back(d.unit_labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
  }
  const auto dp = PanelDataset::make(Y, units, d.period_labels, d.t0);
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("mean:1990..1992");
  spec.balancing = CovariateSpec::parse_list("pre");
  const auto a = build_problem(d, spec);
  const auto b = build_problem(dp, spec);
  for (Index k = 0; k < 7; ++k) {
    EXPECT_EQ(b.Z.col(k), a.Z.col(perm[static_cast<std::size_t>(k)] - 1));
    EXPECT_EQ(b.Q.col(k), a.Q.col(perm[static_cast<std::size_t>(k)] - 1));
  }
  EXPECT_EQ(a.z1, b.z1);
  EXPECT_EQ(a.q1, b.q1);
}

TEST(BuildProblem, StandardizationUsesControlSpread) {
  std::mt19937_64 gen(10);
  const auto d = random_panel(gen, 8, 6, 5);
  CovariateSpec spec;
  spec.balancing = CovariateSpec::parse_list("pre");
  spec.standardize_balancing = true;
  const auto p = build_problem(d, spec);
  for (Index i = 0; i < p.Q.rows(); ++i) {
    const VectorXd row = p.Q.row(i).transpose();
    const double sd =
        std::sqrt((row.array() - row.mean()).square().sum() / (row.size() - 1));
    EXPECT_NEAR(sd, 1.0, 1e-12);
    EXPECT_NEAR(p.q1(i) / p.normalization(i), d.outcomes(i, 0), 1e-12);
  }
}

TEST(BuildProblem, ConstraintRowScalingKeepsFeasibleSet) {
  std::mt19937_64 gen(11);
  const auto d = random_panel(gen, 8, 8, 5);
  CovariateSpec spec;
  spec.trending = CovariateSpec::parse_list("lag:1991");
  const auto p = build_problem(d, spec);
  const MatrixXd N = oracle::null_space(p.Z);
  const MatrixXd Ns = oracle::null_space(4.0 * p.Z);
  // Same null space, so the feasible affine set is unchanged.
  EXPECT_LE((N * N.transpose() - Ns * Ns.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariates, ParseForms) {
  EXPECT_EQ(CovariateDef::parse("col:x").kind, CovariateDef::Kind::Column);
  EXPECT_EQ(CovariateDef::parse("x").column, "x");
  const auto m = CovariateDef::parse("mean:1980..1988");
  EXPECT_EQ(m.kind, CovariateDef::Kind::OutcomeMean);
  EXPECT_EQ(m.from, "1980");
  EXPECT_EQ(m.to, "1988");
  EXPECT_EQ(CovariateDef::parse("lag:1975").kind, CovariateDef::Kind::OutcomeLag);
  EXPECT_EQ(CovariateDef::parse("pre").kind, CovariateDef::Kind::PreOutcomes);
  EXPECT_THROW(CovariateDef::parse("mean:1980"), ParseError);
  EXPECT_THROW(CovariateDef::parse("foo:bar"), ParseError);
  EXPECT_TRUE(CovariateSpec::parse_list("").empty());
  EXPECT_EQ(CovariateSpec::parse_list("a, b ,lag:3").size(), 3u);
}
