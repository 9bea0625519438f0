#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dmdbench/lds_models.hpp"

namespace testing_support {

using dmdbench::Complex;
using dmdbench::ComplexList;

inline dmdbench::SystemSpec reference_spec(double theta = 0.0, double phi = 0.0, double s = 1.0, double real = 0.8) {
    dmdbench::SystemSpec spec;
    spec.theta = theta;
    spec.phi = phi;
    spec.s = s;
    spec.pairs = {{0.5 * std::sqrt(3.0) / 2.0, 0.25}};
    spec.reals = {real};
    return spec;
}

// Largest distance under the best one-to-one matching (brute force over
// permutations; only used for lists of at most 9 values).
inline double multiset_distance(ComplexList a, ComplexList b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    std::vector<int> perm(b.size());
    std::iota(perm.begin(), perm.end(), 0);
    if (a.size() > 9) return std::numeric_limits<double>::infinity();
    // Greedy is exact once values are well separated; fall back to a full
    // search only for short lists.
    if (a.size() > 6) {
        double worst = 0.0;
        std::vector<bool> used(b.size(), false);
        for (const Complex& v : a) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t j = 0; j < b.size(); ++j)
                if (!used[j] && std::abs(v - b[j]) < best) best = std::abs(v - b[j]), arg = j;
            used[arg] = true;
            worst = std::max(worst, best);
        }
        return worst;
    }
    double best = std::numeric_limits<double>::infinity();
    do {
        double worst = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[perm[i]]));
        best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace testing_support
