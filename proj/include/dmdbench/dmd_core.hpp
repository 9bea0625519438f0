#pragma once

// Exact, forward-backward, total-least-squares and optimized DMD.

#include <optional>
#include <string>
#include <vector>

#include "dmdbench/lds_models.hpp"
#include "dmdbench/types.hpp"

namespace dmdbench {

/// Column k of `next` is the within-trajectory successor of column k of
/// `current`. `offsets[i]` is the first snapshot of trajectory i in the
/// concatenated snapshot list; trajectory i contributes lengths[i] - 1 pairs.
struct SnapshotPairs {
    MatrixXd current;  // X
    MatrixXd next;     // X'
    std::vector<int> lengths;
    std::string source;

    int dim() const { return static_cast<int>(current.rows()); }
    int count() const { return static_cast<int>(current.cols()); }

    /// Snapshots of trajectory i as a d × L matrix.
    MatrixXd trajectory(int i) const;
};

SnapshotPairs make_pairs(const TrajectorySet& data, const std::optional<MonomialBasis>& lifting = std::nullopt);

/// Same, for raw trajectory matrices (d × L each).
SnapshotPairs make_pairs(const std::vector<MatrixXd>& trajectories,
                         const std::optional<MonomialBasis>& lifting = std::nullopt);

enum class Algorithm { exact, fb, tls, opt };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

enum class AmplitudeFit {
    first_snapshot,  // b = Φ⁺ x₁
    all_snapshots,   // argmin_b ‖X - Φ diag(b) T(Λ)‖_F over the first trajectory
};

struct DmdOptions {
    std::optional<int> rank;
    double truncation = 1e-10;  // keep σ_i / σ_1 > truncation
    AmplitudeFit amplitudes = AmplitudeFit::first_snapshot;
};

struct DmdModel {
    ComplexList eigenvalues;
    MatrixXcd modes;      // d × r
    VectorXcd amplitudes;
    int rank = 0;
    Algorithm algorithm = Algorithm::exact;
    double kappa_est = 1.0;

    MatrixXd basis;             // d × r orthonormal projection basis U_r
    MatrixXd reduced_operator;  // r × r operator in that basis

    bool conjugate_closed = true;
    bool converged = true;
    int iterations = 0;
    std::vector<double> objective_history;  // opt only: accepted objective values
};

/// True when every eigenvalue's conjugate is in the list within `tol`.
bool is_conjugate_closed(const ComplexList& values, double tol = 1e-9);

DmdModel exact_dmd(const SnapshotPairs& pairs, const DmdOptions& options = {});
DmdModel fb_dmd(const SnapshotPairs& pairs, const DmdOptions& options = {});
DmdModel tls_dmd(const SnapshotPairs& pairs, const DmdOptions& options = {});

struct OptDmdOptions {
    int rank = 0;
    std::optional<ComplexList> init;
    double initial_damping = 1e-2;
    double damping_factor = 2.0;
    double tolerance = 1e-8;
    int max_iterations = 200;
};

/// Variable-projection fit of X ≈ Φ_b T(Λ), T_jk = λ_j^k, on one trajectory
/// (d × L). Λ is refined by Levenberg-Marquardt on the projected residual.
DmdModel opt_dmd(const MatrixXd& trajectory, const OptDmdOptions& options);

/// Rejects multi-trajectory input, matching the single-trajectory method.
DmdModel opt_dmd(const SnapshotPairs& pairs, const OptDmdOptions& options);

/// Least-squares objective ‖X - X T⁺ T‖_F² for a candidate spectrum.
double projected_residual(const MatrixXd& trajectory, const ComplexList& eigenvalues);

/// Dispatches on the algorithm tag. opt receives the first trajectory only.
DmdModel fit(Algorithm algorithm, const SnapshotPairs& pairs, const DmdOptions& options = {});

struct Reconstruction {
    MatrixXcd values;       // d × steps, column k = Φ Λ^k b
    double imag_residue = 0.0;  // max |Im| over entries
};

Reconstruction reconstruct(const DmdModel& model, int steps);

/// ‖X' - U_r Ã U_rᵀ X‖_F: one-step prediction error of the fitted operator.
double one_step_error(const DmdModel& model, const SnapshotPairs& pairs);

}  // namespace dmdbench
