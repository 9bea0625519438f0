#include "dmdbench/sqrtm.hpp"

#include <Eigen/Eigenvalues>

#include "dmdbench/error.hpp"

namespace dmdbench {

MatrixXcd principal_sqrt(const MatrixXcd& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("square root needs a square matrix");
    const Eigen::Index n = m.rows();
    if (n == 0) return m;

    Eigen::ComplexSchur<MatrixXcd> schur(m);
    if (schur.info() != Eigen::Success) throw SquareRootBranchFailure("Schur decomposition did not converge");
    const MatrixXcd& t = schur.matrixT();
    const MatrixXcd& u = schur.matrixU();

    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Complex ev = t(i, i);
        if (std::abs(ev.imag()) <= 1e-12 * scale && ev.real() <= 0.0)
            throw SquareRootBranchFailure("eigenvalue on the closed negative real axis");
    }

    MatrixXcd r = MatrixXcd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        r(j, j) = std::sqrt(t(j, j));
        for (Eigen::Index i = j - 1; i >= 0; --i) {
            Complex acc = t(i, j);
            for (Eigen::Index k = i + 1; k < j; ++k) acc -= r(i, k) * r(k, j);
            r(i, j) = acc / (r(i, i) + r(j, j));
        }
    }
    return u * r * u.adjoint();
}

MatrixXd principal_sqrt(const MatrixXd& m) {
    const MatrixXcd root = principal_sqrt(MatrixXcd(m.cast<Complex>()));
    const double residue = root.imag().norm();
    if (residue > 1e-8 * std::max(1.0, root.norm()))
        throw SquareRootBranchFailure("principal root of a real matrix has a large imaginary part");
    return root.real();
}

}  // namespace dmdbench
