#include "dmdbench/lds_models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "dmdbench/error.hpp"
#include "dmdbench/rng.hpp"

namespace dmdbench {

ComplexList SystemSpec::spectrum() const {
    ComplexList out;
    out.reserve(dim());
    for (const auto& p : pairs) {
        out.emplace_back(p.alpha, p.beta);
        out.emplace_back(p.alpha, -p.beta);
    }
    for (double r : reals) out.emplace_back(r, 0.0);
    return out;
}

double condition_number(const MatrixXd& m) {
    Eigen::JacobiSVD<MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 1.0;
    const double lo = sv(sv.size() - 1);
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / lo;
}

namespace {

MatrixXd block_diagonal(const SystemSpec& spec) {
    const int n = spec.dim();
    MatrixXd lambda = MatrixXd::Zero(n, n);
    int k = 0;
    for (const auto& p : spec.pairs) {
        lambda(k, k) = p.alpha;
        lambda(k, k + 1) = p.beta;
        lambda(k + 1, k) = -p.beta;
        lambda(k + 1, k + 1) = p.alpha;
        k += 2;
    }
    for (double r : spec.reals) {
        lambda(k, k) = r;
        ++k;
    }
    return lambda;
}

}  // namespace

LinearSystem build_system(const SystemSpec& spec) {
    if (spec.dim() == 0) throw InvalidArgument("empty spectrum");
    for (const auto& p : spec.pairs) {
        if (p.beta == 0.0) throw InvalidArgument("conjugate pair with zero imaginary part");
        if (!std::isfinite(p.alpha) || !std::isfinite(p.beta)) throw InvalidArgument("non-finite eigenvalue");
    }
    for (double r : spec.reals)
        if (!std::isfinite(r)) throw InvalidArgument("non-finite eigenvalue");
    if (!(spec.s > 0.0)) throw SingularParameterization("s must be positive");
    if (!(std::abs(std::cos(spec.theta)) > 1e-12))
        throw SingularParameterization("|cos(theta)| <= 1e-12 makes Q singular");

    LinearSystem sys;
    sys.spec = spec;
    sys.spectrum = spec.spectrum();
    const MatrixXd lambda = block_diagonal(spec);

    if (spec.uses_qsl_form()) {
        MatrixXd q = MatrixXd::Identity(3, 3);
        q(0, 2) = std::sin(spec.theta) * std::cos(spec.phi);
        q(1, 2) = std::sin(spec.theta) * std::sin(spec.phi);
        q(2, 2) = std::cos(spec.theta);
        MatrixXd scale = MatrixXd::Identity(3, 3);
        scale(0, 0) = spec.s;
        const MatrixXd basis = q * scale;
        // Q⁻¹ and S⁻¹ have closed forms; avoid a generic inverse.
        MatrixXd basis_inv = MatrixXd::Identity(3, 3);
        basis_inv(0, 0) = 1.0 / spec.s;
        basis_inv(0, 2) = -q(0, 2) / (spec.s * q(2, 2));
        basis_inv(1, 2) = -q(1, 2) / q(2, 2);
        basis_inv(2, 2) = 1.0 / q(2, 2);
        sys.A = basis * lambda * basis_inv;
        sys.eigvec_kappa = condition_number(basis);
    } else {
        if (spec.theta != 0.0 || spec.phi != 0.0 || spec.s != 1.0)
            throw InvalidArgument("theta/phi/s apply only to the one-pair-one-real 3D form");
        sys.A = lambda;
        sys.eigvec_kappa = 1.0;
    }
    sys.kappa = condition_number(sys.A);
    return sys;
}

void ObservableMap::validate() const {
    if (in_dim <= 0 || out_dim <= 0) throw InvalidArgument("observable dimensions must be positive");
    if (static_cast<int>(terms.size()) != out_dim) throw InvalidArgument("one term list per output required");
    for (const auto& row : terms) {
        for (const auto& t : row) {
            if (static_cast<int>(t.exponents.size()) != in_dim)
                throw InvalidArgument("multi-index length differs from in_dim");
            int degree = 0;
            for (int e : t.exponents) {
                if (e < 0) throw InvalidArgument("negative exponent");
                degree += e;
            }
            if (degree < 1) throw InvalidArgument("constant terms are not allowed");
            if (degree > max_order) throw InvalidArgument("term exceeds declared max order");
        }
    }
}

ObservableMap linear_observable(int dim) {
    ObservableMap map;
    map.name = "linear";
    map.in_dim = map.out_dim = dim;
    map.max_order = 1;
    map.terms.resize(dim);
    for (int i = 0; i < dim; ++i) {
        std::vector<int> e(dim, 0);
        e[i] = 1;
        map.terms[i].push_back({1.0, e});
    }
    return map;
}

ObservableMap quadratic_observable() {
    ObservableMap map;
    map.name = "eq-y";
    map.in_dim = map.out_dim = 3;
    map.max_order = 2;
    map.terms.resize(3);
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const int k = (i + 2) % 3;
        std::vector<int> lin(3, 0), sq(3, 0), cross(3, 0);
        lin[i] = 1;
        sq[i] = 2;
        cross[j] = 1;
        cross[k] = 1;
        map.terms[i] = {{1.0, lin}, {0.1, sq}, {0.1, cross}};
    }
    return map;
}

ObservableMap monomial_observable(int dim, int order) {
    ObservableMap map;
    map.name = "monomial-order-" + std::to_string(order);
    map.in_dim = dim;
    map.max_order = order;
    for (auto& alpha : graded_lex_indices(dim, order)) map.terms.push_back({{1.0, alpha}});
    map.out_dim = static_cast<int>(map.terms.size());
    return map;
}

namespace {

template <typename Scalar, typename Vec>
Scalar monomial(const Vec& x, const std::vector<int>& alpha) {
    Scalar v{1.0};
    for (std::size_t j = 0; j < alpha.size(); ++j)
        for (int p = 0; p < alpha[j]; ++p) v *= x(static_cast<Eigen::Index>(j));
    return v;
}

}  // namespace

VectorXd observe(const ObservableMap& map, const VectorXd& x) {
    if (x.size() != map.in_dim)
        throw DimensionMismatch("state has " + std::to_string(x.size()) + " entries, map expects " +
                                std::to_string(map.in_dim));
    VectorXd y = VectorXd::Zero(map.out_dim);
    for (int i = 0; i < map.out_dim; ++i)
        for (const auto& t : map.terms[i]) y(i) += t.coefficient * monomial<double>(x, t.exponents);
    return y;
}

std::vector<std::vector<int>> graded_lex_indices(int dim, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> alpha(dim, 0);
    // Fill position `pos` onward with `remaining` total degree, larger
    // exponents in earlier slots first.
    std::function<void(int, int)> fill = [&](int pos, int remaining) {
        if (pos == dim - 1) {
            alpha[pos] = remaining;
            out.push_back(alpha);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            alpha[pos] = e;
            fill(pos + 1, remaining - e);
        }
        alpha[pos] = 0;
    };
    if (dim <= 0) return out;
    for (int degree = 1; degree <= order; ++degree) fill(0, degree);
    return out;
}

MonomialBasis build_basis(const ComplexList& spectrum, int order) {
    if (order < 1) throw InvalidArgument("basis order must be at least 1");
    if (spectrum.empty()) throw InvalidArgument("empty spectrum");
    MonomialBasis basis;
    basis.dim = static_cast<int>(spectrum.size());
    basis.order = order;
    basis.multi_indices = graded_lex_indices(basis.dim, order);
    basis.lattice.reserve(basis.multi_indices.size());
    for (const auto& alpha : basis.multi_indices) {
        Complex xi{0.0, 0.0};
        for (int j = 0; j < basis.dim; ++j) xi += static_cast<double>(alpha[j]) * spectrum[j];
        basis.lattice.push_back(xi);
    }
    for (std::size_t a = 0; a < basis.lattice.size() && !basis.resonant; ++a)
        for (std::size_t b = a + 1; b < basis.lattice.size(); ++b)
            if (std::abs(basis.lattice[a] - basis.lattice[b]) <= 1e-9) {
                basis.resonant = true;
                break;
            }
    return basis;
}

MonomialBasis monomial_lifting(int dim, int order) {
    if (order < 1) throw InvalidArgument("basis order must be at least 1");
    if (dim < 1) throw InvalidArgument("basis dimension must be positive");
    MonomialBasis basis;
    basis.dim = dim;
    basis.order = order;
    basis.multi_indices = graded_lex_indices(dim, order);
    return basis;
}

ComplexList lattice_multipliers(const MonomialBasis& basis, const ComplexList& spectrum) {
    if (static_cast<int>(spectrum.size()) != basis.dim)
        throw DimensionMismatch("spectrum size differs from basis dimension");
    ComplexList out;
    out.reserve(basis.multi_indices.size());
    for (const auto& alpha : basis.multi_indices) {
        Complex v{1.0, 0.0};
        for (int j = 0; j < basis.dim; ++j)
            for (int p = 0; p < alpha[j]; ++p) v *= spectrum[j];
        out.push_back(v);
    }
    return out;
}

namespace {

template <typename Vec>
Vec lift_impl(const MonomialBasis& basis, const Vec& y) {
    using Scalar = typename Vec::Scalar;
    if (y.size() != basis.dim)
        throw DimensionMismatch("vector has " + std::to_string(y.size()) + " entries, basis expects " +
                                std::to_string(basis.dim));
    Vec out(basis.size());
    for (int i = 0; i < basis.size(); ++i) out(i) = monomial<Scalar>(y, basis.multi_indices[i]);
    return out;
}

}  // namespace

VectorXd lift(const MonomialBasis& basis, const VectorXd& y) { return lift_impl(basis, y); }
VectorXcd lift(const MonomialBasis& basis, const VectorXcd& y) { return lift_impl(basis, y); }

VectorXd sample_unit_sphere(int dim, std::uint64_t key) {
    GaussianStream g(key);
    VectorXd v(dim);
    double norm = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v(i) = g();
        norm = v.norm();
    } while (norm == 0.0);
    return v / norm;
}

TrajectorySet simulate_from(const LinearSystem& sys, const ObservableMap& map, const NoiseSpec& noise,
                            const std::vector<VectorXd>& initial_states, int length) {
    if (length < 2) throw InvalidArgument("trajectory length must be at least 2");
    if (initial_states.empty()) throw InvalidArgument("at least one trajectory required");
    if (noise.system_sigma < 0.0 || noise.measurement_sigma < 0.0)
        throw InvalidArgument("noise standard deviations must be nonnegative");
    const int n = static_cast<int>(sys.A.rows());
    if (map.in_dim != n) throw DimensionMismatch("observable input dimension differs from system dimension");

    TrajectorySet set;
    set.system_id = describe(sys.spec);
    set.observable_id = map.name;
    set.noise = noise;
    for (std::size_t t = 0; t < initial_states.size(); ++t) {
        if (initial_states[t].size() != n) throw DimensionMismatch("initial state dimension");
        const std::uint64_t key = derive_seed(noise.seed, {t});
        GaussianStream sys_noise(derive_seed(key, {1}));
        GaussianStream meas_noise(derive_seed(key, {2}));

        MatrixXd x(n, length);
        x.col(0) = initial_states[t];
        for (int k = 1; k < length; ++k) {
            x.col(k) = sys.A * x.col(k - 1);
            if (noise.system_sigma > 0.0)
                for (int i = 0; i < n; ++i) x(i, k) += noise.system_sigma * sys_noise();
        }
        MatrixXd y(map.out_dim, length);
        for (int k = 0; k < length; ++k) {
            y.col(k) = observe(map, x.col(k));
            if (noise.measurement_sigma > 0.0)
                for (int i = 0; i < map.out_dim; ++i) y(i, k) += noise.measurement_sigma * meas_noise();
        }
        set.trajectories.push_back(std::move(y));
        set.latent.push_back(std::move(x));
    }
    return set;
}

TrajectorySet simulate(const LinearSystem& sys, const ObservableMap& map, const NoiseSpec& noise,
                       int trajectories, int length) {
    if (trajectories < 1) throw InvalidArgument("at least one trajectory required");
    const int n = static_cast<int>(sys.A.rows());
    std::vector<VectorXd> initial;
    initial.reserve(trajectories);
    for (int t = 0; t < trajectories; ++t)
        initial.push_back(sample_unit_sphere(n, derive_seed(noise.seed, {static_cast<std::uint64_t>(t), 0})));
    return simulate_from(sys, map, noise, initial, length);
}

std::string describe(const SystemSpec& spec) {
    std::string out;
    char buf[96];
    std::snprintf(buf, sizeof buf, "theta=%.17g;phi=%.17g;s=%.17g", spec.theta, spec.phi, spec.s);
    out += buf;
    for (const auto& p : spec.pairs) {
        std::snprintf(buf, sizeof buf, ";pair=%.17g%+.17gi", p.alpha, p.beta);
        out += buf;
    }
    for (double r : spec.reals) {
        std::snprintf(buf, sizeof buf, ";real=%.17g", r);
        out += buf;
    }
    return out;
}

}  // namespace dmdbench
