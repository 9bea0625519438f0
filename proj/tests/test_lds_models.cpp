#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "dmdbench/error.hpp"
#include "dmdbench/lds_models.hpp"
#include "support.hpp"

using namespace dmdbench;
using testing_support::multiset_distance;
using testing_support::reference_spec;

namespace {

ComplexList eigenvalues_of(const MatrixXd& a) {
    Eigen::EigenSolver<MatrixXd> es(a);
    ComplexList out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()(i));
    return out;
}

// Independent evaluation of the quadratic observable, written out by hand.
VectorXd quadratic_by_hand(const VectorXd& x) {
    VectorXd y(3);
    y(0) = x(0) + 0.1 * (x(0) * x(0) + x(1) * x(2));
    y(1) = x(1) + 0.1 * (x(1) * x(1) + x(0) * x(2));
    y(2) = x(2) + 0.1 * (x(2) * x(2) + x(0) * x(1));
    return y;
}

}  // namespace

TEST_CASE("identity parameterization gives the block-diagonal matrix") {
    const LinearSystem sys = build_system(reference_spec());
    MatrixXd expected = MatrixXd::Zero(3, 3);
    const double a = 0.5 * std::sqrt(3.0) / 2.0;
    expected << a, 0.25, 0, -0.25, a, 0, 0, 0, 0.8;
    CHECK((sys.A - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-normal system keeps its spectrum") {
    const LinearSystem sys = build_system(reference_spec(1.4, 0.0, 0.1));
    const ComplexList expected = {{0.4330127018922193, 0.25}, {0.4330127018922193, -0.25}, {0.8, 0.0}};
    CHECK(multiset_distance(eigenvalues_of(sys.A), expected) < 1e-10);
    CHECK(sys.kappa > 1.0);
    CHECK(sys.eigvec_kappa > 10.0);
}

TEST_CASE("singular parameterizations are rejected") {
    CHECK_THROWS_AS(build_system(reference_spec(std::numbers::pi / 2.0, 0.3, 0.5)), SingularParameterization);
    CHECK_THROWS_AS(build_system(reference_spec(0.2, 0.0, 0.0)), SingularParameterization);
    CHECK_THROWS_AS(build_system(reference_spec(0.2, 0.0, -1.0)), SingularParameterization);
}

TEST_CASE("spectral invariance over a random parameter grid") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> theta(-1.55, 1.55), phi(-3.2, 3.2), logs(-2.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const SystemSpec spec = reference_spec(theta(rng), phi(rng), std::pow(10.0, logs(rng)));
        const LinearSystem sys = build_system(spec);
        CHECK(multiset_distance(eigenvalues_of(sys.A), spec.spectrum()) < 1e-9);
    }
}

TEST_CASE("orthogonal eigenvectors give a perfectly conditioned eigenbasis") {
    const LinearSystem sys = build_system(reference_spec());
    CHECK(sys.eigvec_kappa == doctest::Approx(1.0).epsilon(1e-14));
    // A is normal, so its singular values are the eigenvalue moduli.
    CHECK(sys.kappa == doctest::Approx(0.8 / 0.5).epsilon(1e-12));
}

TEST_CASE("block-diagonal form for larger systems") {
    SystemSpec spec;
    spec.pairs = {{0.4, 0.3}, {0.1, -0.6}};
    spec.reals = {0.9, -0.2};
    const LinearSystem sys = build_system(spec);
    CHECK(sys.A.rows() == 6);
    CHECK(multiset_distance(eigenvalues_of(sys.A), spec.spectrum()) < 1e-12);
    spec.theta = 0.3;
    CHECK_THROWS_AS(build_system(spec), InvalidArgument);
}

TEST_CASE("quadratic observable examples") {
    const ObservableMap map = quadratic_observable();
    CHECK(observe(map, VectorXd::Zero(3)).cwiseAbs().maxCoeff() == 0.0);
    const VectorXd e1 = observe(map, VectorXd::Unit(3, 0));
    CHECK(e1(0) == doctest::Approx(1.1));
    CHECK(e1(1) == 0.0);
    CHECK(e1(2) == 0.0);
    const VectorXd ones = observe(map, VectorXd::Ones(3));
    for (int i = 0; i < 3; ++i) CHECK(ones(i) == doctest::Approx(1.2));
    CHECK_THROWS_AS(observe(map, VectorXd::Ones(4)), DimensionMismatch);
}

TEST_CASE("observe matches a hand-written evaluator on random inputs") {
    const ObservableMap map = quadratic_observable();
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 1000; ++i) {
        VectorXd x(3);
        for (int k = 0; k < 3; ++k) x(k) = n(rng);
        CHECK((observe(map, x) - quadratic_by_hand(x)).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + x.squaredNorm()));
    }
}

TEST_CASE("monomial observable is the order-2 lifting") {
    const ObservableMap map = monomial_observable(3, 2);
    CHECK(map.out_dim == 9);
    VectorXd x(3);
    x << 0.3, -0.7, 1.9;
    const VectorXd y = observe(map, x);
    const double expected[9] = {0.3, -0.7, 1.9, 0.09, -0.21, 0.57, 0.49, -1.33, 3.61};
    for (int i = 0; i < 9; ++i) CHECK(y(i) == doctest::Approx(expected[i]).epsilon(1e-14));
}

TEST_CASE("graded-lex basis ordering") {
    const auto idx = graded_lex_indices(3, 2);
    const std::vector<std::vector<int>> expected = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {2, 0, 0}, {1, 1, 0},
                                                    {1, 0, 1}, {0, 2, 0}, {0, 1, 1}, {0, 0, 2}};
    CHECK(idx == expected);
    CHECK(graded_lex_indices(3, 3).size() == 19);
}

TEST_CASE("order-2 basis of a 3D spectrum has 9 lattice values") {
    const Complex a{0.43, 0.25}, c{0.8, 0.0};
    const ComplexList spectrum = {a, std::conj(a), c};
    const MonomialBasis basis = build_basis(spectrum, 2);
    CHECK(basis.size() == 9);
    ComplexList brute = spectrum;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i; j < 3; ++j) brute.push_back(spectrum[i] + spectrum[j]);
    CHECK(multiset_distance(basis.lattice, brute) < 1e-15);

    ComplexList products = spectrum;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i; j < 3; ++j) products.push_back(spectrum[i] * spectrum[j]);
    CHECK(multiset_distance(lattice_multipliers(basis, spectrum), products) < 1e-15);
}

TEST_CASE("order-1 basis is the identity lifting") {
    const ComplexList spectrum = {{0.1, 0.2}, {0.1, -0.2}, {0.5, 0.0}};
    const MonomialBasis basis = build_basis(spectrum, 1);
    CHECK(basis.size() == 3);
    CHECK(multiset_distance(basis.lattice, spectrum) == 0.0);
    VectorXd y(3);
    y << 1.5, -2.0, 0.25;
    CHECK((lift(basis, y) - y).norm() == 0.0);
}

TEST_CASE("resonant spectra are flagged") {
    CHECK(build_basis({{0.2, 0.0}, {0.4, 0.0}, {0.9, 0.0}}, 2).resonant);  // 0.2 + 0.2 = 0.4
    CHECK_FALSE(build_basis({{0.21, 0.0}, {0.4, 0.0}, {0.93, 0.0}}, 2).resonant);
}

TEST_CASE("lift examples") {
    const MonomialBasis basis = monomial_lifting(3, 2);
    const VectorXd ones = lift(basis, VectorXd(VectorXd::Ones(3)));
    CHECK(ones.size() == 9);
    CHECK((ones - VectorXd::Ones(9)).norm() == 0.0);

    VectorXd y(3);
    y << 2.0, 0.0, 0.0;
    VectorXd expected(9);
    expected << 2, 0, 0, 4, 0, 0, 0, 0, 0;
    CHECK((lift(basis, y) - expected).norm() == 0.0);

    // Scalar loop over the multi-indices.
    y << 0.7, -1.3, 0.4;
    const VectorXd lifted = lift(basis, y);
    for (int i = 0; i < basis.size(); ++i) {
        double v = 1.0;
        for (int j = 0; j < 3; ++j)
            for (int p = 0; p < basis.multi_indices[i][j]; ++p) v *= y(j);
        CHECK(lifted(i) == doctest::Approx(v).epsilon(1e-15));
    }
    CHECK_THROWS_AS(lift(basis, VectorXd(VectorXd::Ones(2))), DimensionMismatch);
}

TEST_CASE("lifting commutes with diagonal dynamics") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Complex lam{u(rng), u(rng)};
        const ComplexList spectrum = {lam, std::conj(lam), {u(rng), 0.0}};
        const MonomialBasis basis = build_basis(spectrum, 2);
        const ComplexList mult = lattice_multipliers(basis, spectrum);
        VectorXcd x(3);
        for (int k = 0; k < 3; ++k) x(k) = Complex{u(rng), u(rng)} * 0.5;
        VectorXcd lx(3);
        for (int k = 0; k < 3; ++k) lx(k) = spectrum[k] * x(k);
        const VectorXcd lhs = lift(basis, lx);
        VectorXcd rhs = lift(basis, x);
        for (int i = 0; i < basis.size(); ++i) rhs(i) *= mult[i];
        CHECK((lhs - rhs).norm() < 1e-10);
    }
}

TEST_CASE("lifting commutes with non-normal dynamics in eigencoordinates") {
    const LinearSystem sys = build_system(reference_spec(1.3, 0.79, 0.5));
    Eigen::EigenSolver<MatrixXd> es(sys.A);
    const MatrixXcd v = es.eigenvectors();
    ComplexList spectrum;
    for (int i = 0; i < 3; ++i) spectrum.push_back(es.eigenvalues()(i));
    const MonomialBasis basis = build_basis(spectrum, 2);
    const ComplexList mult = lattice_multipliers(basis, spectrum);
    VectorXd x(3);
    x << 0.2, -0.5, 0.4;
    const VectorXcd z0 = v.partialPivLu().solve(x.cast<Complex>());
    const VectorXcd z1 = v.partialPivLu().solve((sys.A * x).cast<Complex>());
    VectorXcd expected = lift(basis, z0);
    for (int i = 0; i < basis.size(); ++i) expected(i) *= mult[i];
    CHECK((lift(basis, z1) - expected).norm() < 1e-10);
}

TEST_CASE("pure decay without noise") {
    LinearSystem sys;
    sys.A = 0.5 * MatrixXd::Identity(3, 3);
    VectorXd x0(3);
    x0 << 1, 0, 0;
    const TrajectorySet set = simulate_from(sys, linear_observable(3), {}, {x0}, 3);
    const MatrixXd& x = set.latent.front();
    CHECK(x(0, 0) == 1.0);
    CHECK(x(0, 1) == 0.5);
    CHECK(x(0, 2) == 0.25);
    CHECK(x.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((set.trajectories.front() - x).norm() == 0.0);
}

TEST_CASE("zero noise reproduces the recurrence exactly") {
    const LinearSystem sys = build_system(reference_spec(1.2, 0.79, 0.5));
    NoiseSpec noise;
    noise.seed = 99;
    const TrajectorySet set = simulate(sys, quadratic_observable(), noise, 4, 12);
    for (int t = 0; t < 4; ++t) {
        VectorXd x = set.latent[t].col(0);
        for (int k = 0; k < 12; ++k) {
            CHECK((set.latent[t].col(k) - x).norm() == 0.0);
            CHECK((set.trajectories[t].col(k) - observe(quadratic_observable(), x)).norm() == 0.0);
            x = sys.A * x;
        }
    }
}

TEST_CASE("initial states lie on the unit sphere") {
    const LinearSystem sys = build_system(reference_spec());
    for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL, 0xffffffffffffffffULL}) {
        NoiseSpec noise{0.05, 0.05, seed};
        const TrajectorySet set = simulate(sys, linear_observable(3), noise, 50, 2);
        CHECK(set.count() == 50);
        for (const auto& x : set.latent) CHECK(std::abs(x.col(0).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("simulation is deterministic in the seed") {
    const LinearSystem sys = build_system(reference_spec(1.4, 0.0, 0.1));
    const NoiseSpec noise{0.05, 0.05, 42};
    const TrajectorySet a = simulate(sys, linear_observable(3), noise, 10, 10);
    const TrajectorySet b = simulate(sys, linear_observable(3), noise, 10, 10);
    for (int t = 0; t < 10; ++t) CHECK((a.trajectories[t] - b.trajectories[t]).norm() == 0.0);
    NoiseSpec other = noise;
    other.seed = 43;
    const TrajectorySet c = simulate(sys, linear_observable(3), other, 10, 10);
    CHECK((a.trajectories[0] - c.trajectories[0]).norm() > 0.0);
}

TEST_CASE("noise levels scale the perturbation") {
    const LinearSystem sys = build_system(reference_spec());
    const TrajectorySet clean = simulate(sys, linear_observable(3), {0.0, 0.0, 8}, 200, 2);
    const TrajectorySet noisy = simulate(sys, linear_observable(3), {0.0, 0.05, 8}, 200, 2);
    double sq = 0.0;
    int count = 0;
    for (int t = 0; t < 200; ++t) {
        sq += (noisy.trajectories[t] - clean.trajectories[t]).squaredNorm();
        count += 6;
    }
    CHECK(std::sqrt(sq / count) == doctest::Approx(0.05).epsilon(0.1));
}
