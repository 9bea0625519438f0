#include "dmdbench/spectral_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "dmdbench/error.hpp"

namespace dmdbench {

const char* to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::none: return "none";
        case DiscardReason::excess_real: return "excess-real";
        case DiscardReason::solver_error: return "solver-error";
    }
    return "unknown";
}

bool is_real(const Complex& v, double tol) { return std::abs(v.imag()) <= tol * std::max(1.0, std::abs(v)); }

namespace {

bool by_imag_then_real(const Complex& a, const Complex& b) {
    if (a.imag() != b.imag()) return a.imag() < b.imag();
    return a.real() < b.real();
}

std::size_t nearest(const ComplexList& candidates, const std::vector<std::size_t>& subset, const Complex& v) {
    std::size_t best = subset.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c : subset) {
        const double d = std::abs(v - candidates[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

ComplexList sorted_bins(const ComplexList& truth) {
    ComplexList bins = truth;
    std::stable_sort(bins.begin(), bins.end(), by_imag_then_real);
    return bins;
}

RegisteredTrial failed_trial(const ComplexList& truth) {
    RegisteredTrial out;
    out.truth = sorted_bins(truth);
    out.assignments.resize(out.truth.size());
    out.discarded = true;
    out.reason = DiscardReason::solver_error;
    return out;
}

RegisteredTrial register_estimates(const ComplexList& estimates, const ComplexList& truth) {
    RegisteredTrial out;
    out.truth = sorted_bins(truth);
    out.assignments.resize(out.truth.size());

    const auto real_truth = std::count_if(out.truth.begin(), out.truth.end(), [](const Complex& t) { return is_real(t); });
    const auto real_est = std::count_if(estimates.begin(), estimates.end(), [](const Complex& e) { return is_real(e); });
    if (real_est > real_truth) {
        out.discarded = true;
        out.reason = DiscardReason::excess_real;
        return out;
    }
    if (estimates.size() < truth.size()) {
        out.discarded = true;
        out.reason = DiscardReason::solver_error;
        return out;
    }

    // Registration classes: real bins and upper-half representatives of pairs.
    std::vector<std::size_t> classes;
    for (std::size_t b = 0; b < out.truth.size(); ++b)
        if (is_real(out.truth[b]) || out.truth[b].imag() > 0.0) classes.push_back(b);

    ComplexList sorted = estimates;
    std::stable_sort(sorted.begin(), sorted.end(), by_imag_then_real);

    ComplexList sum(out.truth.size(), Complex{0.0, 0.0});
    std::vector<int> count(out.truth.size(), 0);
    for (const Complex& e : sorted) {
        if (!is_real(e) && e.imag() < 0.0) continue;  // mirrored by its upper partner
        const std::size_t c = nearest(out.truth, classes, e);
        sum[c] += e;
        ++count[c];
    }

    std::vector<std::size_t> lower;
    for (std::size_t b = 0; b < out.truth.size(); ++b)
        if (!is_real(out.truth[b]) && out.truth[b].imag() < 0.0) lower.push_back(b);

    for (std::size_t c : classes) {
        if (count[c] == 0) continue;
        const Complex mean = sum[c] / static_cast<double>(count[c]);
        out.assignments[c].push_back(mean);
        if (!is_real(out.truth[c])) {
            const std::size_t mirror = nearest(out.truth, lower, std::conj(out.truth[c]));
            out.assignments[mirror].push_back(std::conj(mean));
        }
    }
    return out;
}

DensityGrid::DensityGrid(GridGeometry geometry) : geometry_(geometry) {
    if (geometry_.cells < 2 || !(geometry_.re_max > geometry_.re_min) || !(geometry_.im_max > geometry_.im_min) ||
        !(geometry_.sigma > 0.0))
        throw InvalidArgument("invalid density grid geometry");
    mass_.assign(static_cast<std::size_t>(geometry_.cells) * geometry_.cells, 0.0);
}

void DensityGrid::deposit(const Complex& value, double weight) {
    const GridGeometry& g = geometry_;
    double re = value.real();
    double im = value.imag();
    if (!std::isfinite(re) || !std::isfinite(im)) {
        re = std::isnan(re) ? 0.0 : re;
        im = std::isnan(im) ? 0.0 : im;
    }
    const bool clipped = re < g.re_min || re > g.re_max || im < g.im_min || im > g.im_max;
    re = std::clamp(re, g.re_min, g.re_max);
    im = std::clamp(im, g.im_min, g.im_max);
    if (clipped) ++clipped_;

    const double hr = g.re_step();
    const double hi = g.im_step();
    const int ci = std::clamp(static_cast<int>(std::lround((re - g.re_min) / hr)), 0, g.cells - 1);
    const int cj = std::clamp(static_cast<int>(std::lround((im - g.im_min) / hi)), 0, g.cells - 1);
    const double cutoff = 5.0 * g.sigma;
    const int kr = static_cast<int>(std::ceil(cutoff / hr));
    const int ki = static_cast<int>(std::ceil(cutoff / hi));
    const int i0 = std::max(0, ci - kr), i1 = std::min(g.cells - 1, ci + kr);
    const int j0 = std::max(0, cj - ki), j1 = std::min(g.cells - 1, cj + ki);

    std::vector<double> w(static_cast<std::size_t>(i1 - i0 + 1) * (j1 - j0 + 1), 0.0);
    double total = 0.0;
    const double inv_two_var = 1.0 / (2.0 * g.sigma * g.sigma);
    for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
            const double dr = re_at(i) - re;
            const double di = im_at(j) - im;
            const double d2 = dr * dr + di * di;
            if (d2 > cutoff * cutoff) continue;
            const double v = std::exp(-d2 * inv_two_var);
            w[static_cast<std::size_t>(j - j0) * (i1 - i0 + 1) + (i - i0)] = v;
            total += v;
        }
    }
    if (total <= 0.0) {
        mass_[index(ci, cj)] += weight;
    } else {
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i)
                mass_[index(i, j)] += weight * w[static_cast<std::size_t>(j - j0) * (i1 - i0 + 1) + (i - i0)] / total;
    }
    total_ += weight;
    ++samples_;
}

void DensityGrid::accumulate(const std::vector<RegisteredTrial>& trials) {
    for (const auto& t : trials) {
        if (t.discarded) continue;
        for (std::size_t b = 0; b < t.truth.size(); ++b) {
            for (const Complex& v : t.assignments[b]) {
                // A real bin can hold the mean of complex estimates; spread it
                // symmetrically so the field stays conjugate-symmetric.
                if (is_real(t.truth[b]) && !is_real(v)) {
                    deposit(v, 0.5);
                    deposit(std::conj(v), 0.5);
                } else {
                    deposit(v);
                }
            }
        }
    }
}

void DensityGrid::merge(const DensityGrid& other) {
    if (!(geometry_ == other.geometry_)) throw GeometryMismatch("cannot merge grids with different geometry");
    for (std::size_t k = 0; k < mass_.size(); ++k) mass_[k] += other.mass_[k];
    total_ += other.total_;
    samples_ += other.samples_;
    clipped_ += other.clipped_;
}

double DensityGrid::total_mass() const {
    double s = 0.0;
    for (double m : mass_) s += m;
    return s;
}

double DensityGrid::density(int re_index, int im_index) const {
    if (total_ <= 0.0) return 0.0;
    return mass(re_index, im_index) / (total_ * cell_area());
}

double kl_divergence(const DensityGrid& p, const DensityGrid& q) {
    if (!(p.geometry() == q.geometry())) throw GeometryMismatch("KL divergence needs identical grid geometry");
    constexpr double floor = 1e-12;
    const auto& pm = p.masses();
    const auto& qm = q.masses();
    const double n = static_cast<double>(pm.size());
    const double p_total = p.total_mass() + floor * n;
    const double q_total = q.total_mass() + floor * n;
    double kl = 0.0;
    for (std::size_t k = 0; k < pm.size(); ++k) {
        const double pk = (pm[k] + floor) / p_total;
        const double qk = (qm[k] + floor) / q_total;
        kl += pk * std::log(pk / qk);
    }
    return std::max(kl, 0.0);
}

double complex_std(const ComplexList& samples) {
    if (samples.empty()) return 0.0;
    // Shifted by the first sample: identical lists give exactly zero.
    const Complex shift = samples.front();
    Complex mean{0.0, 0.0};
    for (const auto& s : samples) mean += s - shift;
    mean /= static_cast<double>(samples.size());
    double acc = 0.0;
    for (const auto& s : samples) acc += std::norm(s - shift - mean);
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

StatsAccumulator::StatsAccumulator(ComplexList truth) : truth_(sorted_bins(truth)), values_(truth_.size()) {}

void StatsAccumulator::add(const RegisteredTrial& trial, std::optional<double> kappa_est) {
    if (trial.truth.size() != truth_.size()) throw DimensionMismatch("trial bins differ from accumulator bins");
    ++trials_;
    if (kappa_est && std::isfinite(*kappa_est)) {
        kappa_sum_ += *kappa_est;
        ++kappa_count_;
    }
    if (trial.discarded) {
        ++discarded_;
        return;
    }
    for (std::size_t b = 0; b < truth_.size(); ++b)
        values_[b].insert(values_[b].end(), trial.assignments[b].begin(), trial.assignments[b].end());
}

std::vector<BinStats> StatsAccumulator::finish() const {
    std::vector<BinStats> out(truth_.size());
    const double discard_fraction = trials_ > 0 ? static_cast<double>(discarded_) / static_cast<double>(trials_) : 0.0;
    const double kappa_mean = kappa_count_ > 0 ? kappa_sum_ / static_cast<double>(kappa_count_) : 0.0;
    for (std::size_t b = 0; b < truth_.size(); ++b) {
        BinStats& s = out[b];
        s.truth = truth_[b];
        s.samples = static_cast<int>(values_[b].size());
        Complex mean{0.0, 0.0};
        for (const auto& v : values_[b]) mean += v;
        s.mean = s.samples > 0 ? mean / static_cast<double>(s.samples) : Complex{0.0, 0.0};
        s.std = complex_std(values_[b]);
        s.discard_fraction = discard_fraction;
        s.kappa_mean = kappa_mean;
    }
    return out;
}

ConvergenceResult run_until_converged(const TrialFunction& trial, const ComplexList& truth,
                                      const BatchOptions& options) {
    if (options.batch_size < 1) throw InvalidArgument("batch size must be positive");
    if (options.max_batches < 1) throw InvalidArgument("max_batches must be positive");
    ConvergenceResult result;
    result.grid = DensityGrid(options.grid);
    StatsAccumulator stats(truth);
    const int workers = std::max(1, options.threads);

    for (int batch = 0; batch < options.max_batches; ++batch) {
        const long long first = static_cast<long long>(batch) * options.batch_size;
        std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(options.batch_size));

        auto run_one = [&](std::size_t k) {
            try {
                outcomes[k] = trial(first + static_cast<long long>(k));
            } catch (const Error&) {
                outcomes[k] = TrialOutcome{failed_trial(truth), std::nullopt};
            }
        };
        if (workers == 1) {
            for (std::size_t k = 0; k < outcomes.size(); ++k) run_one(k);
        } else {
            std::atomic<std::size_t> cursor{0};
            std::vector<std::jthread> pool;
            for (int w = 0; w < workers; ++w)
                pool.emplace_back([&] {
                    for (std::size_t k = cursor++; k < outcomes.size(); k = cursor++) run_one(k);
                });
        }

        DensityGrid before = result.grid;
        std::vector<RegisteredTrial> registered;
        registered.reserve(outcomes.size());
        for (auto& o : outcomes) {
            stats.add(o.registered, o.kappa_est);
            registered.push_back(std::move(o.registered));
        }
        result.grid.accumulate(registered);
        const double kl = kl_divergence(before, result.grid);
        result.kl_history.push_back(kl);
        result.batches = batch + 1;
        if (kl < options.kl_threshold) {
            result.converged = true;
            break;
        }
    }
    result.stats = stats.finish();
    result.trials = stats.trials();
    result.discarded = stats.discarded();
    result.bin_values = stats.values();
    return result;
}

}  // namespace dmdbench
