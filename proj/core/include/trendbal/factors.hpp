#pragma once

#include <string>
#include <vector>

#include "trendbal/panel.hpp"

namespace trendbal {

/// Principal-component factors of the projected pre-treatment outcomes.
struct FactorEstimate {
  Index r = 0;
  /// T0 x r, columns scaled so that factors'factors = T0 I.
  MatrixXd factors;
  /// r x (J+1); column 0 belongs to the treated unit.
  MatrixXd loadings;
  /// Leading eigenvalues of AA'/T0, nonincreasing. Their sum equals
  /// |factors * loadings|_F^2 / T0.
  VectorXd eigenvalues;
  /// Every eigenvalue of AA'/T0, for scree output.
  VectorXd all_eigenvalues;
  double residual_fro = 0.0;
  std::vector<std::string> warnings;
};

/// A = M_G Y* M_Z*, where Y* holds the pre-treatment outcomes (T0 x (J+1)),
/// M_G removes the span of a constant and the optional observed factors
/// `g` (T0 x p) over time, and M_Z* removes the row space of (z1, Z) across
/// units.
MatrixXd build_projected_matrix(const PanelDataset& data,
                                const CovariateProblem& prob,
                                const MatrixXd& g = MatrixXd());

/// Top-r eigenvectors of AA' scaled by sqrt(T0); loadings = factors'A / T0.
/// Each factor is signed so its first nonzero loading is positive.
FactorEstimate estimate_factors(const MatrixXd& A, Index r);

/// Adds the estimated loadings as exact-balancing rows: (z1; h1) over
/// (Z; H). The balancing system is left alone.
CovariateProblem augment_constraints(const CovariateProblem& prob,
                                     const FactorEstimate& fe);

}  // namespace trendbal
