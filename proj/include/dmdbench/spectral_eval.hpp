#pragma once

// Registration of estimated spectra to ground-truth bins, smoothed density
// grids, KL-divergence stopping and per-bin statistics.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmdbench/types.hpp"

namespace dmdbench {

enum class DiscardReason { none, excess_real, solver_error };

const char* to_string(DiscardReason r);

/// Relative realness test |Im λ| ≤ 1e-9·max(1, |λ|).
bool is_real(const Complex& v, double tol = 1e-9);

/// Truth bins are the truth eigenvalues sorted by (Im, Re). Each bin holds at
/// most one registered value per trial: the mean of the estimates assigned
/// to it (pair bins mirror the upper-half mean into the lower bin).
struct RegisteredTrial {
    ComplexList truth;                    // sorted bins
    std::vector<ComplexList> assignments; // aligned with truth
    bool discarded = false;
    DiscardReason reason = DiscardReason::none;
};

RegisteredTrial register_estimates(const ComplexList& estimates, const ComplexList& truth);

/// A discarded trial for solver failures, with the bins of `truth`.
RegisteredTrial failed_trial(const ComplexList& truth);

/// Truth values sorted by (Im, Re): the bin order used throughout.
ComplexList sorted_bins(const ComplexList& truth);

struct GridGeometry {
    double re_min = -1.1, re_max = 1.1;
    double im_min = -1.1, im_max = 1.1;
    int cells = 221;  // per axis, cell centers include both bounds
    double sigma = 0.01;

    double re_step() const { return (re_max - re_min) / (cells - 1); }
    double im_step() const { return (im_max - im_min) / (cells - 1); }
    bool operator==(const GridGeometry&) const = default;
};

class DensityGrid {
public:
    explicit DensityGrid(GridGeometry geometry = {});

    const GridGeometry& geometry() const { return geometry_; }

    /// Deposits a Gaussian bump of unit (times `weight`) mass, truncated at 5σ
    /// and renormalized over the cells it covers. Out-of-range samples are
    /// clamped to the boundary and counted.
    void deposit(const Complex& value, double weight = 1.0);

    /// Deposits every registered value of non-discarded trials.
    void accumulate(const std::vector<RegisteredTrial>& trials);

    /// Cell-wise sum of masses; geometries must match.
    void merge(const DensityGrid& other);

    double mass(int re_index, int im_index) const { return mass_[index(re_index, im_index)]; }
    double total_mass() const;
    /// Mass / (total · cell area); integrates to 1 when any sample exists.
    double density(int re_index, int im_index) const;
    double cell_area() const { return geometry_.re_step() * geometry_.im_step(); }

    double re_at(int i) const { return geometry_.re_min + i * geometry_.re_step(); }
    double im_at(int j) const { return geometry_.im_min + j * geometry_.im_step(); }

    long long sample_count() const { return samples_; }
    long long clipped_count() const { return clipped_; }
    const std::vector<double>& masses() const { return mass_; }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j) * geometry_.cells + static_cast<std::size_t>(i);
    }

    GridGeometry geometry_;
    std::vector<double> mass_;
    double total_ = 0.0;  // running sum of deposited weights
    long long samples_ = 0;
    long long clipped_ = 0;
};

/// Σ p log(p/q) over cells, after adding 1e-12 to every cell mass and
/// normalizing. Throws GeometryMismatch.
double kl_divergence(const DensityGrid& p, const DensityGrid& q);

struct BinStats {
    Complex truth;
    Complex mean;
    double std = 0.0;  // sqrt(mean |v - mean|²)
    int samples = 0;
    double discard_fraction = 0.0;
    double kappa_mean = 0.0;  // mean κ(Ã) over trials with a model
};

/// Pools registered values per bin across trials.
class StatsAccumulator {
public:
    explicit StatsAccumulator(ComplexList truth);

    void add(const RegisteredTrial& trial, std::optional<double> kappa_est);

    std::vector<BinStats> finish() const;
    long long trials() const { return trials_; }
    long long discarded() const { return discarded_; }
    const ComplexList& bins() const { return truth_; }
    const std::vector<ComplexList>& values() const { return values_; }

private:
    ComplexList truth_;
    std::vector<ComplexList> values_;
    long long trials_ = 0;
    long long discarded_ = 0;
    double kappa_sum_ = 0.0;
    long long kappa_count_ = 0;
};

/// Scalar deviation of complex samples: sqrt of the mean squared modulus of
/// the centered values. Zero for fewer than one sample.
double complex_std(const ComplexList& samples);

struct TrialOutcome {
    RegisteredTrial registered;
    std::optional<double> kappa_est;  // empty when the solver failed
};

/// Runs one trial given its global index. Must be safe to call concurrently.
using TrialFunction = std::function<TrialOutcome(long long trial_index)>;

struct BatchOptions {
    int batch_size = 300;
    double kl_threshold = 1e-3;
    int max_batches = 20;
    int threads = 1;
    GridGeometry grid;
};

struct ConvergenceResult {
    DensityGrid grid;
    std::vector<BinStats> stats;
    std::vector<double> kl_history;  // KL(before || after) per batch
    int batches = 0;
    bool converged = false;
    long long trials = 0;
    long long discarded = 0;
    std::vector<ComplexList> bin_values;  // pooled registered values per bin
};

/// Adds batches of trials until KL(before || after) < threshold or the batch
/// limit is reached. Trials run on `threads` workers; results are merged in
/// trial order, so the output does not depend on the worker count.
ConvergenceResult run_until_converged(const TrialFunction& trial, const ComplexList& truth,
                                      const BatchOptions& options);

}  // namespace dmdbench
