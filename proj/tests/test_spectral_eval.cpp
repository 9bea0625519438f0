#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>

#include "dmdbench/error.hpp"
#include "dmdbench/rng.hpp"
#include "dmdbench/spectral_eval.hpp"

using namespace dmdbench;

namespace {

const Complex kPair{0.4330127018922193, 0.25};
const ComplexList kTruth = {kPair, std::conj(kPair), {0.8, 0.0}};

// Bins sorted by (Im, Re): lower pair member, real, upper pair member.
constexpr std::size_t kLower = 0, kReal = 1, kUpper = 2;

double grid_integral(const DensityGrid& g) {
    double s = 0.0;
    for (int j = 0; j < g.geometry().cells; ++j)
        for (int i = 0; i < g.geometry().cells; ++i) s += g.density(i, j);
    return s * g.cell_area();
}

RegisteredTrial conjugated(const RegisteredTrial& t) {
    RegisteredTrial out = t;
    for (auto& bin : out.assignments)
        for (auto& v : bin) v = std::conj(v);
    return out;
}

}  // namespace

TEST_CASE("bins are sorted by imaginary then real part") {
    const ComplexList bins = sorted_bins(kTruth);
    CHECK(bins[kLower] == std::conj(kPair));
    CHECK(bins[kReal] == Complex{0.8, 0.0});
    CHECK(bins[kUpper] == kPair);
}

TEST_CASE("exact estimates land in their own bins") {
    const RegisteredTrial r = register_estimates({kTruth[2], kTruth[0], kTruth[1]}, kTruth);
    CHECK_FALSE(r.discarded);
    CHECK(r.reason == DiscardReason::none);
    for (std::size_t b = 0; b < 3; ++b) {
        REQUIRE(r.assignments[b].size() == 1);
        CHECK(r.assignments[b][0] == r.truth[b]);
    }
}

TEST_CASE("excess real estimates discard the trial") {
    const RegisteredTrial r = register_estimates({{0.81, 0.0}, {0.79, 0.0}, {0.44, 0.0}}, kTruth);
    CHECK(r.discarded);
    CHECK(r.reason == DiscardReason::excess_real);
    CHECK(std::string(to_string(r.reason)) == "excess-real");
    for (const auto& bin : r.assignments) CHECK(bin.empty());
}

TEST_CASE("two estimated pairs on one true pair register their mean") {
    const ComplexList est = {{0.4, 0.2}, {0.4, -0.2}, {0.5, 0.3}, {0.5, -0.3}, {0.8, 0.0}};
    const RegisteredTrial r = register_estimates(est, kTruth);
    CHECK_FALSE(r.discarded);
    const Complex mean = (Complex{0.4, 0.2} + Complex{0.5, 0.3}) / 2.0;
    REQUIRE(r.assignments[kUpper].size() == 1);
    REQUIRE(r.assignments[kLower].size() == 1);
    CHECK(r.assignments[kUpper][0] == mean);
    CHECK(r.assignments[kLower][0] == std::conj(mean));
    CHECK(r.assignments[kUpper][0] == Complex{0.45, 0.25});
    CHECK(r.assignments[kLower][0] == Complex{0.45, -0.25});
    REQUIRE(r.assignments[kReal].size() == 1);
    CHECK(r.assignments[kReal][0] == Complex{0.8, 0.0});
}

TEST_CASE("too few estimates are a solver error") {
    const RegisteredTrial r = register_estimates({{0.8, 0.0}}, kTruth);
    CHECK(r.discarded);
    CHECK(r.reason == DiscardReason::solver_error);
    CHECK(failed_trial(kTruth).reason == DiscardReason::solver_error);
}

TEST_CASE("realness uses a relative tolerance") {
    CHECK(is_real({0.8, 1e-10}));
    CHECK_FALSE(is_real({0.8, 1e-8}));
    CHECK(is_real({100.0, 5e-8}));
}

TEST_CASE("registration is permutation invariant and conjugation equivariant") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 0.05);
    for (int trial = 0; trial < 300; ++trial) {
        const Complex p = kPair + Complex{n(rng), n(rng)};
        ComplexList est = {p, std::conj(p), {0.8 + n(rng), 0.0}};
        if (trial % 3 == 0) {
            const Complex q = kPair + Complex{n(rng), n(rng)};
            est.push_back(q);
            est.push_back(std::conj(q));
        }
        const RegisteredTrial base = register_estimates(est, kTruth);
        for (int k = 0; k < 5; ++k) {
            std::shuffle(est.begin(), est.end(), rng);
            const RegisteredTrial shuffled = register_estimates(est, kTruth);
            CHECK(shuffled.discarded == base.discarded);
            for (std::size_t b = 0; b < 3; ++b) {
                REQUIRE(shuffled.assignments[b].size() == base.assignments[b].size());
                for (std::size_t i = 0; i < base.assignments[b].size(); ++i)
                    CHECK(std::abs(shuffled.assignments[b][i] - base.assignments[b][i]) < 1e-15);
            }
        }
        // Conjugating every estimate swaps the contents of the pair bins.
        ComplexList conj_est;
        for (const auto& v : est) conj_est.push_back(std::conj(v));
        const RegisteredTrial conj = register_estimates(conj_est, kTruth);
        const RegisteredTrial mirrored = conjugated(base);
        REQUIRE(conj.assignments[kUpper].size() == mirrored.assignments[kLower].size());
        for (std::size_t i = 0; i < conj.assignments[kUpper].size(); ++i)
            CHECK(std::abs(conj.assignments[kUpper][i] - mirrored.assignments[kLower][i]) < 1e-15);
    }
}

TEST_CASE("discard depends only on realness counts") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        ComplexList est;
        const Complex p{u(rng), 0.05 + std::abs(u(rng))};
        est = {p, std::conj(p), {u(rng), 0.0}};
        const bool before = register_estimates(est, kTruth).discarded;
        for (auto& v : est) v = {v.real(), 2.0 * v.imag()};
        CHECK(register_estimates(est, kTruth).discarded == before);
    }
}

TEST_CASE("single deposit is a unit-mass symmetric bump") {
    DensityGrid g;
    g.deposit({0.0, 0.0});
    CHECK(g.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grid_integral(g) == doctest::Approx(1.0).epsilon(1e-6));
    const int c = g.geometry().cells / 2;
    for (int k = 1; k <= 3; ++k) {
        CHECK(g.mass(c + k, c) == doctest::Approx(g.mass(c - k, c)).epsilon(1e-12));
        CHECK(g.mass(c, c + k) == doctest::Approx(g.mass(c + k, c)).epsilon(1e-12));
    }
    CHECK(g.mass(c, c) > g.mass(c + 1, c));
    // The kernel vanishes beyond five bandwidths.
    CHECK(g.mass(c + 6, c) == 0.0);
}

TEST_CASE("empty input leaves the grid unchanged and coincident deposits add") {
    DensityGrid g;
    g.accumulate({});
    CHECK(g.total_mass() == 0.0);
    CHECK(g.sample_count() == 0);
    g.deposit({0.3, 0.2});
    g.deposit({0.3, 0.2});
    CHECK(g.total_mass() == doctest::Approx(2.0).epsilon(1e-12));
    DensityGrid single;
    single.deposit({0.3, 0.2});
    for (std::size_t k = 0; k < g.masses().size(); ++k) CHECK(g.masses()[k] == doctest::Approx(2.0 * single.masses()[k]));
}

TEST_CASE("mass is conserved with clipping") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    DensityGrid g;
    for (int i = 0; i < 500; ++i) g.deposit({u(rng), u(rng)});
    CHECK(g.clipped_count() > 0);
    CHECK(g.sample_count() == 500);
    CHECK(g.total_mass() == doctest::Approx(500.0).epsilon(1e-10));
    CHECK(std::abs(grid_integral(g) - 1.0) < 1e-6);
}

TEST_CASE("discarded trials do not reach the grid") {
    DensityGrid g;
    g.accumulate({failed_trial(kTruth), register_estimates(kTruth, kTruth)});
    CHECK(g.sample_count() == 3);
}

TEST_CASE("KL divergence basics") {
    DensityGrid p, q;
    p.deposit({0.2, 0.1});
    q.deposit({0.2, 0.1});
    CHECK(kl_divergence(p, q) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    DensityGrid r;
    r.deposit({-0.7, -0.4});
    CHECK(kl_divergence(p, r) > 10.0);
    DensityGrid other(GridGeometry{.cells = 11});
    CHECK_THROWS_AS(kl_divergence(p, other), GeometryMismatch);
}

TEST_CASE("KL divergence is non-negative on random grids") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        GridGeometry geo;
        geo.cells = 41;
        geo.sigma = 0.05;
        DensityGrid p(geo), q(geo);
        for (int i = 0; i < 20; ++i) p.deposit({u(rng), u(rng)});
        for (int i = 0; i < 20; ++i) q.deposit({u(rng), u(rng)});
        CHECK(kl_divergence(p, q) >= 0.0);
        CHECK(kl_divergence(p, p) == 0.0);
    }
}

TEST_CASE("complex standard deviation") {
    CHECK(complex_std({}) == 0.0);
    CHECK(complex_std({{0.3, 0.1}, {0.3, 0.1}, {0.3, 0.1}}) == 0.0);
    // Deviations ±(0.1 + 0.1i): squared modulus 0.02 each.
    CHECK(complex_std({{0.1, 0.1}, {0.3, 0.3}}) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-14));
    CHECK(complex_std({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) == doctest::Approx(1.0));
}

TEST_CASE("statistics pool registered values and count discards") {
    StatsAccumulator acc(kTruth);
    acc.add(register_estimates(kTruth, kTruth), 2.0);
    acc.add(register_estimates({{0.1, 0.0}, {0.2, 0.0}, {0.3, 0.0}}, kTruth), 4.0);
    acc.add(failed_trial(kTruth), std::nullopt);
    acc.add(register_estimates({kPair + 0.01, std::conj(kPair + 0.01), {0.82, 0.0}}, kTruth), 3.0);
    const auto stats = acc.finish();
    REQUIRE(stats.size() == 3);
    CHECK(acc.trials() == 4);
    CHECK(acc.discarded() == 2);
    for (const auto& s : stats) {
        CHECK(s.discard_fraction == doctest::Approx(0.5));
        CHECK(s.samples == 2);
        CHECK(s.std >= 0.0);
        CHECK(s.kappa_mean == doctest::Approx(3.0));
    }
    CHECK(stats[kReal].mean.real() == doctest::Approx(0.81));
    CHECK(stats[kReal].std == doctest::Approx(0.01));
}

TEST_CASE("batch loop stops after one batch with an infinite threshold") {
    const TrialFunction exact = [](long long) { return TrialOutcome{register_estimates(kTruth, kTruth), 1.0}; };
    BatchOptions opts;
    opts.batch_size = 10;
    opts.kl_threshold = std::numeric_limits<double>::infinity();
    const ConvergenceResult r = run_until_converged(exact, kTruth, opts);
    CHECK(r.batches == 1);
    CHECK(r.converged);
    CHECK(r.trials == 10);
}

TEST_CASE("noiseless trials converge in two batches with zero spread") {
    const TrialFunction exact = [](long long) { return TrialOutcome{register_estimates(kTruth, kTruth), 1.0}; };
    BatchOptions opts;
    opts.batch_size = 30;
    const ConvergenceResult r = run_until_converged(exact, kTruth, opts);
    CHECK(r.batches == 2);
    CHECK(r.converged);
    for (const auto& s : r.stats) CHECK(s.std == 0.0);
}

TEST_CASE("KL between successive batches trends downward") {
    const TrialFunction noisy = [](long long trial) {
        GaussianStream g(derive_seed(77, {static_cast<std::uint64_t>(trial)}));
        const Complex p = kPair + Complex{0.03 * g(), 0.03 * g()};
        const ComplexList est = {p, std::conj(p), {0.8 + 0.03 * g(), 0.0}};
        return TrialOutcome{register_estimates(est, kTruth), 1.0};
    };
    BatchOptions opts;
    opts.kl_threshold = 0.0;  // never satisfied: run every batch
    opts.max_batches = 6;
    const ConvergenceResult r = run_until_converged(noisy, kTruth, opts);
    REQUIRE(r.kl_history.size() == 6);
    CHECK_FALSE(r.converged);
    int decreases = 0;
    for (std::size_t k = 2; k < r.kl_history.size(); ++k) decreases += r.kl_history[k] < r.kl_history[k - 1];
    CHECK(decreases >= 3);
    CHECK(r.kl_history.back() < r.kl_history[1]);
}

TEST_CASE("worker count does not change the result") {
    const TrialFunction noisy = [](long long trial) {
        GaussianStream g(derive_seed(5, {static_cast<std::uint64_t>(trial)}));
        if (trial % 17 == 0) throw RankDeficient("synthetic failure");
        const Complex p = kPair + Complex{0.05 * g(), 0.05 * g()};
        return TrialOutcome{register_estimates({p, std::conj(p), {0.8 + 0.05 * g(), 0.0}}, kTruth), 1.0 + trial};
    };
    BatchOptions one;
    one.batch_size = 100;
    one.max_batches = 3;
    BatchOptions eight = one;
    eight.threads = 8;
    const ConvergenceResult a = run_until_converged(noisy, kTruth, one);
    const ConvergenceResult b = run_until_converged(noisy, kTruth, eight);
    CHECK(a.grid.masses() == b.grid.masses());
    CHECK(a.kl_history == b.kl_history);
    CHECK(a.discarded == b.discarded);
    CHECK(a.discarded > 0);
    for (std::size_t k = 0; k < a.stats.size(); ++k) CHECK(a.stats[k].std == b.stats[k].std);
}
