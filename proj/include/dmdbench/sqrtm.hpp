#pragma once

#include "dmdbench/types.hpp"

namespace dmdbench {

/// Principal square root via complex Schur form and the upper-triangular
/// recurrence R_ij = (T_ij - Σ_k R_ik R_kj) / (R_ii + R_jj).
/// Throws SquareRootBranchFailure when an eigenvalue lies on the closed
/// negative real axis (no principal root exists).
MatrixXcd principal_sqrt(const MatrixXcd& m);

/// Real input; the imaginary residue of the result is dropped after checking
/// it is below 1e-8 relative to the root's norm.
MatrixXd principal_sqrt(const MatrixXd& m);

}  // namespace dmdbench
