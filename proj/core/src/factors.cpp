#include "trendbal/factors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "trendbal/error.hpp"

namespace trendbal {
namespace {

// I - B(B'B)^{-1}B' applied on the left, through a thin QR of B.
MatrixXd residualize(const MatrixXd& B, const MatrixXd& Y,
                     const std::string& what) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(B);
  qr.setThreshold(1e-10);
  if (qr.rank() < B.cols()) {
    throw RankError(what + " is rank deficient; cannot project it out",
                    qr.rank());
  }
  const MatrixXd Qb = qr.householderQ() * MatrixXd::Identity(B.rows(), B.cols());
  MatrixXd R = Y - Qb * (Qb.transpose() * Y);
  // Second pass removes what rounding left in the span.
  R -= Qb * (Qb.transpose() * R);
  return R;
}

}  // namespace

MatrixXd build_projected_matrix(const PanelDataset& data,
                                const CovariateProblem& prob,
                                const MatrixXd& g) {
  data.validate();
  const Index T0 = data.t0;
  const Index J = data.controls();
  if (prob.controls() != J) {
    throw DimensionError("covariate problem and panel disagree on J");
  }
  const Index p = g.size() == 0 ? 0 : g.cols();
  if (p > 0 && g.rows() != T0) {
    throw DimensionError("observed factors must have T0 = " +
                         std::to_string(T0) + " rows");
  }
  if (T0 <= 1 + p) {
    throw InsufficientDataError("factor projection needs T0 > 1 + p (T0=" +
                                std::to_string(T0) + ", p=" +
                                std::to_string(p) + ")");
  }
  MatrixXd time_basis(T0, 1 + p);
  time_basis.col(0).setOnes();
  if (p > 0) time_basis.rightCols(p) = g;

  MatrixXd zstar(prob.constraints(), J + 1);
  zstar.col(0) = prob.z1;
  zstar.rightCols(J) = prob.Z;

  const MatrixXd Y = data.outcomes.topRows(T0);
  const MatrixXd over_time = residualize(time_basis, Y, "the time basis (1, g)");
  return residualize(zstar.transpose(), over_time.transpose(),
                     "the covariate matrix (z1, Z)")
      .transpose();
}

FactorEstimate estimate_factors(const MatrixXd& A, Index r) {
  const Index T0 = A.rows();
  const Index units = A.cols();
  if (r < 0 || r > std::min(T0, units)) {
    throw DimensionError("number of factors r=" + std::to_string(r) +
                         " must lie in [0, min(T0, J+1)] = [0, " +
                         std::to_string(std::min(T0, units)) + "]");
  }
  if (!A.allFinite()) throw InvalidArgument("factor input has non-finite values");

  FactorEstimate fe;
  fe.r = r;
  const double t0 = static_cast<double>(T0);

  MatrixXd gram = A * A.transpose();
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
  if (es.info() != Eigen::Success) {
    throw Error("eigendecomposition of AA' failed");
  }
  // Eigen returns ascending order; reverse with a stable index sort so
  // exact ties keep a fixed order.
  std::vector<Index> order(static_cast<std::size_t>(T0));
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return es.eigenvalues()(a) > es.eigenvalues()(b);
  });

  fe.all_eigenvalues.resize(T0);
  for (Index k = 0; k < T0; ++k) {
    fe.all_eigenvalues(k) =
        std::max(0.0, es.eigenvalues()(order[static_cast<std::size_t>(k)])) / t0;
  }
  fe.eigenvalues = fe.all_eigenvalues.head(r);
  fe.factors.resize(T0, r);
  for (Index k = 0; k < r; ++k) {
    fe.factors.col(k) =
        std::sqrt(t0) * es.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  fe.loadings = fe.factors.transpose() * A / t0;

  for (Index k = 0; k < r; ++k) {
    const double top = fe.loadings.row(k).cwiseAbs().maxCoeff();
    for (Index j = 0; j < units; ++j) {
      const double v = fe.loadings(k, j);
      if (std::abs(v) > 1e-12 * top) {
        if (v < 0) {
          fe.loadings.row(k) *= -1.0;
          fe.factors.col(k) *= -1.0;
        }
        break;
      }
    }
  }

  if (r > 0 && r < T0) {
    const double scale = std::max(1.0, fe.all_eigenvalues(0));
    if (fe.all_eigenvalues(r - 1) - fe.all_eigenvalues(r) < 1e-10 * scale) {
      fe.warnings.push_back(
          "eigenvalues " + std::to_string(r) + " and " + std::to_string(r + 1) +
          " are nearly equal; the selected factor space is not well determined");
    }
  }
  fe.residual_fro = (A - fe.factors * fe.loadings).norm();
  return fe;
}

CovariateProblem augment_constraints(const CovariateProblem& prob,
                                     const FactorEstimate& fe) {
  if (fe.r == 0) return prob;
  const Index J = prob.controls();
  if (fe.loadings.cols() != J + 1) {
    throw DimensionError("loadings must have J+1 columns");
  }
  const Index k1 = prob.constraints();
  if (k1 + fe.r > J) {
    throw DimensionError("K+1+r=" + std::to_string(k1 + fe.r) +
                         " exceeds J=" + std::to_string(J) +
                         "; use fewer factors");
  }
  CovariateProblem out = prob;
  out.z1.resize(k1 + fe.r);
  out.z1 << prob.z1, fe.loadings.col(0);
  out.Z.resize(k1 + fe.r, J);
  out.Z << prob.Z, fe.loadings.rightCols(J);
  for (Index k = 0; k < fe.r; ++k) out.z_names.push_back("h" + std::to_string(k + 1));
  out.z_uses_outcomes = true;
  const Index dep = first_dependent_row(out.Z);
  if (dep >= 0) {
    throw RankError("constraints with " + std::to_string(fe.r) +
                        " factor rows are rank deficient at row " +
                        std::to_string(dep) + "; try a smaller r",
                    dep);
  }
  if (k1 + fe.r == J) {
    out.warnings.push_back(
        "factor-augmented constraint system is square; the unique feasible "
        "weight vector will be returned");
  }
  out.validate(true);
  return out;
}

}  // namespace trendbal
