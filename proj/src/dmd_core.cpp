#include "dmdbench/dmd_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dmdbench/error.hpp"
#include "dmdbench/sqrtm.hpp"

namespace dmdbench {

MatrixXd SnapshotPairs::trajectory(int i) const {
    if (i < 0 || i >= static_cast<int>(lengths.size())) throw InvalidArgument("trajectory index out of range");
    int offset = 0;
    for (int t = 0; t < i; ++t) offset += lengths[t] - 1;
    const int pairs_in = lengths[i] - 1;
    MatrixXd out(dim(), lengths[i]);
    out.leftCols(pairs_in) = current.middleCols(offset, pairs_in);
    out.col(pairs_in) = next.col(offset + pairs_in - 1);
    return out;
}

SnapshotPairs make_pairs(const std::vector<MatrixXd>& trajectories, const std::optional<MonomialBasis>& lifting) {
    if (trajectories.empty()) throw EmptyData("no trajectories");
    int total = 0;
    const Eigen::Index raw_dim = trajectories.front().rows();
    for (const auto& t : trajectories) {
        if (t.cols() < 2) throw EmptyData("trajectory shorter than 2 snapshots");
        if (t.rows() != raw_dim) throw DimensionMismatch("trajectories differ in dimension");
        total += static_cast<int>(t.cols()) - 1;
    }
    const int d = lifting ? lifting->size() : static_cast<int>(raw_dim);

    SnapshotPairs pairs;
    pairs.current.resize(d, total);
    pairs.next.resize(d, total);
    int col = 0;
    for (const auto& t : trajectories) {
        MatrixXd snaps(d, t.cols());
        for (Eigen::Index k = 0; k < t.cols(); ++k)
            snaps.col(k) = lifting ? lift(*lifting, VectorXd(t.col(k))) : VectorXd(t.col(k));
        const Eigen::Index n = t.cols() - 1;
        pairs.current.middleCols(col, n) = snaps.leftCols(n);
        pairs.next.middleCols(col, n) = snaps.rightCols(n);
        pairs.lengths.push_back(static_cast<int>(t.cols()));
        col += static_cast<int>(n);
    }
    return pairs;
}

SnapshotPairs make_pairs(const TrajectorySet& data, const std::optional<MonomialBasis>& lifting) {
    SnapshotPairs pairs = make_pairs(data.trajectories, lifting);
    pairs.source = data.system_id + "|" + data.observable_id;
    if (lifting) pairs.source += "|lift" + std::to_string(lifting->order);
    return pairs;
}

const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::exact: return "exact";
        case Algorithm::fb: return "fb";
        case Algorithm::tls: return "tls";
        case Algorithm::opt: return "opt";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "exact") return Algorithm::exact;
    if (name == "fb") return Algorithm::fb;
    if (name == "tls") return Algorithm::tls;
    if (name == "opt") return Algorithm::opt;
    throw InvalidArgument("unknown algorithm '" + name + "'");
}

bool is_conjugate_closed(const ComplexList& values, double tol) {
    for (const auto& v : values) {
        const auto hit = std::find_if(values.begin(), values.end(),
                                      [&](const Complex& w) { return std::abs(w - std::conj(v)) <= tol; });
        if (hit == values.end()) return false;
    }
    return true;
}

namespace {

struct TruncatedSvd {
    MatrixXd u;
    VectorXd sigma;
    MatrixXd v;
    int rank = 0;
};

// strict: an explicit rank beyond the numerical rank is an error instead of
// being clamped.
TruncatedSvd truncated_svd(const MatrixXd& x, const DmdOptions& options, bool strict) {
    if (x.cols() == 0 || x.rows() == 0) throw EmptyData("no snapshots");
    Eigen::BDCSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& s = svd.singularValues();
    int numerical = 0;
    if (s.size() > 0 && s(0) > 0.0)
        while (numerical < s.size() && s(numerical) / s(0) > options.truncation) ++numerical;
    if (numerical == 0) throw RankDeficient("no singular value above the truncation threshold");
    int r = numerical;
    if (options.rank) {
        if (*options.rank < 1) throw InvalidArgument("rank must be positive");
        if (*options.rank > numerical) {
            if (strict)
                throw RankDeficient("requested rank " + std::to_string(*options.rank) + " exceeds numerical rank " +
                                    std::to_string(numerical));
        } else {
            r = *options.rank;
        }
    }
    return {svd.matrixU().leftCols(r), s.head(r), svd.matrixV().leftCols(r), r};
}

MatrixXcd complex_pinv(const MatrixXcd& m) { return Eigen::CompleteOrthogonalDecomposition<MatrixXcd>(m).pseudoInverse(); }

MatrixXd pinv(const MatrixXd& m) { return Eigen::CompleteOrthogonalDecomposition<MatrixXd>(m).pseudoInverse(); }

double reciprocal_condition(const MatrixXd& m) {
    Eigen::JacobiSVD<MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0.0;
    return s(s.size() - 1) / s(0);
}

void eigen_split(const MatrixXd& op, ComplexList& values, MatrixXcd& vectors) {
    Eigen::EigenSolver<MatrixXd> es(op, true);
    if (es.info() != Eigen::Success) throw RankDeficient("eigensolver did not converge");
    values.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    vectors = es.eigenvectors();
}

void fit_amplitudes(DmdModel& model, const SnapshotPairs& pairs, AmplitudeFit mode) {
    const int r = model.rank;
    if (mode == AmplitudeFit::first_snapshot) {
        const VectorXcd x1 = pairs.current.col(0).cast<Complex>();
        model.amplitudes = Eigen::CompleteOrthogonalDecomposition<MatrixXcd>(model.modes).solve(x1);
        return;
    }
    const MatrixXd traj = pairs.trajectory(0);
    const Eigen::Index d = traj.rows();
    const Eigen::Index steps = traj.cols();
    MatrixXcd g(d * steps, r);
    VectorXcd rhs(d * steps);
    for (int j = 0; j < r; ++j) {
        Complex power{1.0, 0.0};
        for (Eigen::Index k = 0; k < steps; ++k) {
            g.block(k * d, j, d, 1) = model.modes.col(j) * power;
            power *= model.eigenvalues[j];
        }
    }
    for (Eigen::Index k = 0; k < steps; ++k) rhs.segment(k * d, d) = traj.col(k).cast<Complex>();
    model.amplitudes = Eigen::CompleteOrthogonalDecomposition<MatrixXcd>(g).solve(rhs);
}

// Shared tail for the projected (FB, TLS) variants: eigendecompose an r × r
// operator expressed in basis U and lift eigenvectors back as U·W.
DmdModel projected_model(Algorithm tag, const MatrixXd& basis, const MatrixXd& op, const SnapshotPairs& pairs,
                         const DmdOptions& options) {
    DmdModel model;
    model.algorithm = tag;
    model.rank = static_cast<int>(op.rows());
    model.basis = basis;
    model.reduced_operator = op;
    MatrixXcd w;
    eigen_split(op, model.eigenvalues, w);
    model.modes = basis.cast<Complex>() * w;
    model.kappa_est = condition_number(op);
    model.conjugate_closed = is_conjugate_closed(model.eigenvalues);
    fit_amplitudes(model, pairs, options.amplitudes);
    return model;
}

}  // namespace

DmdModel exact_dmd(const SnapshotPairs& pairs, const DmdOptions& options) {
    if (pairs.count() < 1) throw EmptyData("no snapshot pairs");
    const TruncatedSvd svd = truncated_svd(pairs.current, options, false);
    const VectorXd inv_sigma = svd.sigma.cwiseInverse();
    const MatrixXd projected_next = pairs.next * svd.v * inv_sigma.asDiagonal();  // X' V Σ⁻¹
    const MatrixXd reduced = svd.u.transpose() * projected_next;

    DmdModel model;
    model.algorithm = Algorithm::exact;
    model.rank = svd.rank;
    model.basis = svd.u;
    model.reduced_operator = reduced;
    MatrixXcd w;
    eigen_split(reduced, model.eigenvalues, w);
    model.modes = projected_next.cast<Complex>() * w;
    // Exact modes vanish for zero eigenvalues; fall back to projected modes.
    for (int j = 0; j < model.rank; ++j) {
        if (model.modes.col(j).norm() <= 1e-13 * std::max(1.0, projected_next.norm()))
            model.modes.col(j) = svd.u.cast<Complex>() * w.col(j);
    }
    model.kappa_est = condition_number(reduced);
    model.conjugate_closed = is_conjugate_closed(model.eigenvalues);
    fit_amplitudes(model, pairs, options.amplitudes);
    return model;
}

DmdModel fb_dmd(const SnapshotPairs& pairs, const DmdOptions& options) {
    if (pairs.count() < 1) throw EmptyData("no snapshot pairs");
    const TruncatedSvd svd = truncated_svd(pairs.current, options, true);
    const MatrixXd x = svd.u.transpose() * pairs.current;
    const MatrixXd xp = svd.u.transpose() * pairs.next;

    const MatrixXd forward = xp * pinv(x);
    const MatrixXd backward = x * pinv(xp);
    if (reciprocal_condition(backward) < 1e-12)
        throw SingularBackwardOperator("backward operator is singular at rank " + std::to_string(svd.rank));
    // forward · backward⁻¹ = (backward⁻ᵀ · forwardᵀ)ᵀ
    const MatrixXd product = backward.transpose().partialPivLu().solve(forward.transpose()).transpose();
    const MatrixXd combined = principal_sqrt(product);
    return projected_model(Algorithm::fb, svd.u, combined, pairs, options);
}

DmdModel tls_dmd(const SnapshotPairs& pairs, const DmdOptions& options) {
    if (pairs.count() < 1) throw EmptyData("no snapshot pairs");
    const TruncatedSvd svd = truncated_svd(pairs.current, options, true);
    const int r = svd.rank;
    if (pairs.count() < r) throw IllConditionedBlock("fewer snapshot pairs than the rank");
    MatrixXd stacked(2 * r, pairs.count());
    stacked.topRows(r) = svd.u.transpose() * pairs.current;
    stacked.bottomRows(r) = svd.u.transpose() * pairs.next;

    Eigen::JacobiSVD<MatrixXd> zsvd(stacked, Eigen::ComputeFullU);
    const MatrixXd& uz = zsvd.matrixU();
    const MatrixXd block_a = uz.topLeftCorner(r, r);
    const MatrixXd block_c = uz.bottomLeftCorner(r, r);
    if (reciprocal_condition(block_a) < 1e-12) throw IllConditionedBlock("upper-left block of U_Z is singular");
    const MatrixXd op = block_c * pinv(block_a);
    return projected_model(Algorithm::tls, svd.u, op, pairs, options);
}

namespace {

// Vandermonde in transposed layout: row k, column j holds λ_j^k.
MatrixXcd vandermonde(const ComplexList& lambda, Eigen::Index steps) {
    MatrixXcd t(steps, static_cast<Eigen::Index>(lambda.size()));
    for (std::size_t j = 0; j < lambda.size(); ++j) {
        Complex p{1.0, 0.0};
        for (Eigen::Index k = 0; k < steps; ++k) {
            t(k, static_cast<Eigen::Index>(j)) = p;
            p *= lambda[j];
        }
    }
    return t;
}

struct VarproState {
    MatrixXcd basis;         // steps × r
    MatrixXcd coefficients;  // r × d
    MatrixXcd residual;      // steps × d
    double objective = 0.0;
};

VarproState varpro_eval(const MatrixXcd& data, const ComplexList& lambda) {
    VarproState s;
    s.basis = vandermonde(lambda, data.rows());
    s.coefficients = Eigen::CompleteOrthogonalDecomposition<MatrixXcd>(s.basis).solve(data);
    s.residual = data - s.basis * s.coefficients;
    s.objective = s.residual.squaredNorm();
    return s;
}

// Kaufman approximation of the Jacobian of vec(residual) w.r.t. λ.
MatrixXcd varpro_jacobian(const VarproState& s, const ComplexList& lambda) {
    const Eigen::Index steps = s.basis.rows();
    const Eigen::Index d = s.coefficients.cols();
    const Eigen::Index r = s.basis.cols();
    Eigen::CompleteOrthogonalDecomposition<MatrixXcd> cod(s.basis);
    MatrixXcd jac(steps * d, r);
    for (Eigen::Index j = 0; j < r; ++j) {
        VectorXcd dcol(steps);
        Complex p{1.0, 0.0};
        dcol(0) = 0.0;
        for (Eigen::Index k = 1; k < steps; ++k) {
            dcol(k) = static_cast<double>(k) * p;
            p *= lambda[j];
        }
        MatrixXcd outer = dcol * s.coefficients.row(j);  // steps × d
        outer -= s.basis * cod.solve(outer);            // project out range(T)
        jac.col(j) = -Eigen::Map<VectorXcd>(outer.data(), steps * d);
    }
    return jac;
}

}  // namespace

double projected_residual(const MatrixXd& trajectory, const ComplexList& eigenvalues) {
    const MatrixXcd data = trajectory.transpose().cast<Complex>();
    return varpro_eval(data, eigenvalues).objective;
}

DmdModel opt_dmd(const MatrixXd& trajectory, const OptDmdOptions& options) {
    const int r = options.rank;
    const Eigen::Index steps = trajectory.cols();
    if (r < 1) throw InvalidArgument("rank must be positive");
    if (steps < 2) throw EmptyData("trajectory shorter than 2 snapshots");
    if (r > steps) throw RankExceedsData("rank " + std::to_string(r) + " exceeds " + std::to_string(steps) +
                                         " snapshots");

    ComplexList lambda;
    if (options.init) {
        if (static_cast<int>(options.init->size()) != r) throw InvalidArgument("init size differs from rank");
        lambda = *options.init;
    } else {
        DmdOptions exact_opts;
        exact_opts.rank = r;
        const DmdModel seed = exact_dmd(make_pairs(std::vector<MatrixXd>{trajectory}), exact_opts);
        if (seed.rank < r)
            throw RankExceedsData("exact DMD initialization only supports rank " + std::to_string(seed.rank));
        lambda = seed.eigenvalues;
    }

    const MatrixXcd data = trajectory.transpose().cast<Complex>();
    const double data_norm2 = std::max(data.squaredNorm(), std::numeric_limits<double>::min());

    DmdModel model;
    model.algorithm = Algorithm::opt;
    model.rank = r;
    model.converged = false;

    VarproState state = varpro_eval(data, lambda);
    model.objective_history.push_back(state.objective);
    double damping = options.initial_damping;
    int iter = 0;
    auto stationary = [&](const MatrixXcd& jac) {
        if (state.objective <= 1e-24 * data_norm2) return true;
        const Eigen::Map<const VectorXcd> res(state.residual.data(), state.residual.size());
        const VectorXcd grad = jac.adjoint() * res;
        return grad.cwiseAbs().maxCoeff() <= 1e-10 * data_norm2;
    };

    MatrixXcd jac = varpro_jacobian(state, lambda);
    if (stationary(jac)) model.converged = true;
    while (!model.converged && iter < options.max_iterations) {
        ++iter;
        const Eigen::Map<const VectorXcd> res(state.residual.data(), state.residual.size());
        const VectorXd col_norms = jac.colwise().norm().transpose();
        MatrixXcd lhs(jac.rows() + r, r);
        lhs.topRows(jac.rows()) = jac;
        lhs.bottomRows(r) = (std::sqrt(damping) * col_norms.cwiseMax(1e-12)).cast<Complex>().asDiagonal();
        VectorXcd rhs = VectorXcd::Zero(jac.rows() + r);
        rhs.head(jac.rows()) = -res;
        const VectorXcd step = lhs.colPivHouseholderQr().solve(rhs);

        ComplexList trial = lambda;
        for (int j = 0; j < r; ++j) trial[j] += step(j);
        VarproState next = varpro_eval(data, trial);
        if (std::isfinite(next.objective) && next.objective < state.objective) {
            const double drop = (state.objective - next.objective) / state.objective;
            lambda = std::move(trial);
            state = std::move(next);
            model.objective_history.push_back(state.objective);
            damping /= options.damping_factor;
            jac = varpro_jacobian(state, lambda);
            if (drop < options.tolerance || stationary(jac)) model.converged = true;
        } else {
            damping *= options.damping_factor;
            if (damping > 1e16) model.converged = true;  // no descent direction left
        }
    }
    model.iterations = iter;

    model.eigenvalues = lambda;
    const MatrixXcd scaled_modes = state.coefficients.transpose();  // d × r, Φ·diag(b)
    model.modes.resize(scaled_modes.rows(), r);
    model.amplitudes.resize(r);
    for (int j = 0; j < r; ++j) {
        const double n = scaled_modes.col(j).norm();
        model.amplitudes(j) = n;
        if (n > 0.0) {
            model.modes.col(j) = scaled_modes.col(j) / n;
        } else {
            model.modes.col(j).setZero();
            model.modes(0, j) = 1.0;
        }
    }

    Eigen::BDCSVD<MatrixXd> svd(trajectory, Eigen::ComputeThinU);
    const int basis_rank = std::min<int>(r, static_cast<int>(svd.matrixU().cols()));
    model.basis = svd.matrixU().leftCols(basis_rank);
    VectorXcd lambda_vec(r);
    for (int j = 0; j < r; ++j) lambda_vec(j) = lambda[j];
    const MatrixXcd full = model.modes * lambda_vec.asDiagonal() * complex_pinv(model.modes);
    const MatrixXcd reduced = model.basis.cast<Complex>().adjoint() * full * model.basis.cast<Complex>();
    model.reduced_operator = reduced.real();
    model.kappa_est = condition_number(model.reduced_operator);
    model.conjugate_closed = is_conjugate_closed(model.eigenvalues);
    return model;
}

DmdModel opt_dmd(const SnapshotPairs& pairs, const OptDmdOptions& options) {
    if (pairs.lengths.size() != 1)
        throw InvalidArgument("optimized DMD accepts exactly one trajectory, got " +
                              std::to_string(pairs.lengths.size()));
    return opt_dmd(pairs.trajectory(0), options);
}

DmdModel fit(Algorithm algorithm, const SnapshotPairs& pairs, const DmdOptions& options) {
    switch (algorithm) {
        case Algorithm::exact: return exact_dmd(pairs, options);
        case Algorithm::fb: return fb_dmd(pairs, options);
        case Algorithm::tls: return tls_dmd(pairs, options);
        case Algorithm::opt: {
            const MatrixXd first = pairs.trajectory(0);
            OptDmdOptions opt;
            if (options.rank) {
                opt.rank = *options.rank;
            } else {
                DmdOptions exact_opts = options;
                opt.rank = exact_dmd(make_pairs(std::vector<MatrixXd>{first}), exact_opts).rank;
            }
            return opt_dmd(first, opt);
        }
    }
    throw InvalidArgument("unknown algorithm");
}

Reconstruction reconstruct(const DmdModel& model, int steps) {
    Reconstruction out;
    out.values.resize(model.modes.rows(), std::max(steps, 0));
    VectorXcd coeff = model.amplitudes;
    for (int k = 0; k < steps; ++k) {
        out.values.col(k) = model.modes * coeff;
        for (int j = 0; j < model.rank; ++j) coeff(j) *= model.eigenvalues[j];
    }
    out.imag_residue = steps > 0 && out.values.size() > 0 ? out.values.imag().cwiseAbs().maxCoeff() : 0.0;
    return out;
}

double one_step_error(const DmdModel& model, const SnapshotPairs& pairs) {
    if (model.basis.rows() != pairs.dim()) throw DimensionMismatch("model basis differs from data dimension");
    const MatrixXd predicted = model.basis * (model.reduced_operator * (model.basis.transpose() * pairs.current));
    return (pairs.next - predicted).norm();
}

}  // namespace dmdbench
