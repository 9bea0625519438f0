#pragma once

// Latent linear systems, multinomial observables, monomial liftings and
// noisy trajectory simulation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmdbench/types.hpp"

namespace dmdbench {

/// Conjugate pair alpha ± i·beta, realized as the block [[alpha, beta], [-beta, alpha]].
struct ConjugatePair {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Parameterized latent dynamics. For dim 3 (one pair, one real) the matrix
/// is Q·S·Λ·S⁻¹·Q⁻¹ with Q depending on (theta, phi) and S = diag(s, 1, 1).
/// Any other shape uses the block-diagonal Λ directly (theta, phi, s ignored
/// and required to be at their neutral values 0, 0, 1).
struct SystemSpec {
    double theta = 0.0;
    double phi = 0.0;
    double s = 1.0;
    std::vector<ConjugatePair> pairs;
    std::vector<double> reals;

    int dim() const { return static_cast<int>(2 * pairs.size() + reals.size()); }
    bool uses_qsl_form() const { return pairs.size() == 1 && reals.size() == 1; }

    /// Eigenvalues in block order: for each pair (upper, lower), then reals.
    ComplexList spectrum() const;
};

struct LinearSystem {
    SystemSpec spec;
    MatrixXd A;
    ComplexList spectrum;
    double kappa = 1.0;         // σmax(A) / σmin(A)
    double eigvec_kappa = 1.0;  // κ of the real eigenbasis Q·S
};

/// Realizes A. Throws SingularParameterization when |cos θ| ≤ 1e-12 or s ≤ 0.
LinearSystem build_system(const SystemSpec& spec);

/// Ratio of extreme singular values; +inf for a singular matrix.
double condition_number(const MatrixXd& m);

struct MonomialTerm {
    double coefficient = 0.0;
    std::vector<int> exponents;
};

/// Multinomial measurement map without constant terms.
struct ObservableMap {
    std::string name;
    int in_dim = 0;
    int out_dim = 0;
    int max_order = 1;
    std::vector<std::vector<MonomialTerm>> terms;  // one list per output

    /// Throws InvalidArgument when a term breaks the order/constant rules.
    void validate() const;
};

ObservableMap linear_observable(int dim);

/// y_i = x_i + 0.1·(x_i² + x_j·x_k), {i, j, k} a permutation of {1, 2, 3}.
ObservableMap quadratic_observable();

/// Observes every monomial of order 1..order, in graded-lex order.
ObservableMap monomial_observable(int dim, int order);

VectorXd observe(const ObservableMap& map, const VectorXd& x);

/// Multi-index basis of monomials with 1 ≤ |α| ≤ order. Indices are ordered
/// by total degree, and lexicographically descending within one degree:
/// (1,0,0), (0,1,0), (0,0,1), (2,0,0), (1,1,0), (1,0,1), (0,2,0), ...
struct MonomialBasis {
    int dim = 0;
    int order = 1;
    std::vector<std::vector<int>> multi_indices;
    ComplexList lattice;  // Σ_j α_j·spectrum_j (empty for monomial_lifting)
    bool resonant = false;

    int size() const { return static_cast<int>(multi_indices.size()); }
};

std::vector<std::vector<int>> graded_lex_indices(int dim, int order);

MonomialBasis build_basis(const ComplexList& spectrum, int order);

/// Basis for lifting data whose spectrum is unknown; lattice left empty.
MonomialBasis monomial_lifting(int dim, int order);

/// Π_j spectrum_j^{α_j} for every index of the basis: the spectrum of the
/// lifted discrete-time map.
ComplexList lattice_multipliers(const MonomialBasis& basis, const ComplexList& spectrum);

VectorXd lift(const MonomialBasis& basis, const VectorXd& y);
VectorXcd lift(const MonomialBasis& basis, const VectorXcd& y);

struct NoiseSpec {
    double system_sigma = 0.0;
    double measurement_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct TrajectorySet {
    std::vector<MatrixXd> trajectories;  // out_dim × L each
    std::vector<MatrixXd> latent;        // dim × L each; empty when unknown
    std::string system_id;
    std::string observable_id;
    NoiseSpec noise;

    int count() const { return static_cast<int>(trajectories.size()); }
};

/// Uniform draw on the unit sphere from an isotropic Gaussian.
VectorXd sample_unit_sphere(int dim, std::uint64_t key);

/// Simulates from given initial latent states.
TrajectorySet simulate_from(const LinearSystem& sys, const ObservableMap& map, const NoiseSpec& noise,
                            const std::vector<VectorXd>& initial_states, int length);

/// N trajectories of length L with initial states on the unit sphere. Each
/// trajectory draws from its own substream keyed by (noise.seed, index).
TrajectorySet simulate(const LinearSystem& sys, const ObservableMap& map, const NoiseSpec& noise,
                       int trajectories, int length);

/// Short identifier of a spec, used for provenance records.
std::string describe(const SystemSpec& spec);

}  // namespace dmdbench
