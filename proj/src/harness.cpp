#include "dmdbench/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <set>

#include "dmdbench/error.hpp"
#include "dmdbench/io.hpp"
#include "dmdbench/rng.hpp"

namespace dmdbench {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ObservableChoice::tag() const {
    switch (kind) {
        case ObservableKind::linear: return "linear";
        case ObservableKind::eq_y: return "eq-y";
        case ObservableKind::monomial: return "monomial-order-" + std::to_string(order);
    }
    return "unknown";
}

ObservableChoice ObservableChoice::parse(const std::string& tag) {
    if (tag == "linear") return {ObservableKind::linear, 1};
    if (tag == "eq-y") return {ObservableKind::eq_y, 2};
    const std::string prefix = "monomial-order-";
    if (tag.rfind(prefix, 0) == 0) {
        const std::string digits = tag.substr(prefix.size());
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
            const int order = std::stoi(digits);
            if (order >= 1) return {ObservableKind::monomial, order};
        }
    }
    throw SchemaError("observable", "unknown observable '" + tag + "'");
}

std::vector<SystemSpec> ExperimentPreset::grid_points() const {
    std::vector<SystemSpec> points;
    if (!sweep_real.empty()) {
        for (double r : sweep_real) {
            SystemSpec p = system;
            p.reals.back() = r;
            points.push_back(p);
        }
        return points;
    }
    const std::vector<double> ss = sweep_s.empty() ? std::vector<double>{system.s} : sweep_s;
    const std::vector<double> phis = sweep_phi.empty() ? std::vector<double>{system.phi} : sweep_phi;
    const std::vector<double> thetas = sweep_theta.empty() ? std::vector<double>{system.theta} : sweep_theta;
    for (double s : ss)
        for (double phi : phis)
            for (double theta : thetas) {
                SystemSpec p = system;
                p.s = s;
                p.phi = phi;
                p.theta = theta;
                points.push_back(p);
            }
    return points;
}

namespace {

SystemSpec reference_system() {
    SystemSpec s;
    s.pairs = {{0.5 * std::sqrt(3.0) / 2.0, 0.25}};
    s.reals = {0.8};
    return s;
}

ExperimentPreset reference_defaults(const std::string& name) {
    ExperimentPreset p;
    p.name = name;
    p.system = reference_system();
    p.observable = {ObservableKind::linear, 1};
    p.dataset_shapes = {{50, 2}, {10, 10}, {2, 50}};
    p.noise.system_sigma = 0.05;
    p.noise.measurement_sigma = 0.05;
    p.algorithms = {Algorithm::exact};
    return p;
}

const std::vector<double> kSweepTheta = {0.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.52, 1.53, 1.560};
const std::vector<double> kSweepPhi = {0.0, 0.79, std::numbers::pi / 2.0};
const std::vector<double> kSweepS = {0.1, 0.5, 1.0};
const std::vector<double> kSweepReal = {0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

// Uniform in [-1, 1) from a SplitMix64 stream; portable across standard libraries.
double unit_symmetric(std::uint64_t& state) {
    state = splitmix64(state);
    return static_cast<double>(state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

SystemSpec nonresonant_9d_system() {
    const SystemSpec base = reference_system();
    const ComplexList spectrum = base.spectrum();
    const ComplexList lattice = lattice_multipliers(build_basis(spectrum, 2), spectrum);
    std::uint64_t state = 0x9d5eed;
    SystemSpec out;
    for (const Complex& v : lattice) {
        if (std::abs(v.imag()) <= 1e-12) {
            out.reals.push_back(v.real() + 0.009 * unit_symmetric(state));
        } else if (v.imag() > 0.0) {
            const double da = 0.006 * unit_symmetric(state);
            const double db = 0.006 * unit_symmetric(state);
            out.pairs.push_back({v.real() + da, v.imag() + db});
        }
    }
    return out;
}

}  // namespace

std::vector<std::string> builtin_preset_names() {
    return {"paper-cond-sweep",     "paper-cond-sweep-order2",  "paper-eig-sweep",  "paper-eig-sweep-order2",
            "paper-algorithms",     "paper-algorithms-nonnormal", "paper-algorithms-order2",
            "nonresonant-9d",       "system-5d",                "smoke-noiseless",  "smoke-noisy",
            "smoke-order2"};
}

ExperimentPreset builtin_preset(const std::string& name) {
    ExperimentPreset p = reference_defaults(name);
    if (name == "paper-cond-sweep" || name == "paper-cond-sweep-order2") {
        p.sweep_theta = kSweepTheta;
        p.sweep_phi = kSweepPhi;
        p.sweep_s = kSweepS;
        if (name.ends_with("order2")) p.observable = {ObservableKind::monomial, 2};
    } else if (name == "paper-eig-sweep" || name == "paper-eig-sweep-order2") {
        p.sweep_real = kSweepReal;
        if (name.ends_with("order2")) p.observable = {ObservableKind::monomial, 2};
    } else if (name == "paper-algorithms" || name == "paper-algorithms-order2") {
        p.algorithms = {Algorithm::exact, Algorithm::fb, Algorithm::tls, Algorithm::opt};
        if (name.ends_with("order2")) p.observable = {ObservableKind::monomial, 2};
    } else if (name == "paper-algorithms-nonnormal") {
        p.algorithms = {Algorithm::exact, Algorithm::fb, Algorithm::tls, Algorithm::opt};
        p.system.theta = 1.4;
        p.system.s = 0.1;
    } else if (name == "nonresonant-9d") {
        p.system = nonresonant_9d_system();
    } else if (name == "system-5d") {
        p.system.pairs.push_back({0.95 * std::cos(0.2), 0.95 * std::sin(0.2)});
    } else if (name == "smoke-noiseless") {
        p.system.theta = 1.1;
        p.system.s = 0.5;
        p.noise = {};
        p.dataset_shapes = {{10, 10}};
        p.batch_size = 20;
        p.max_batches = 5;
    } else if (name == "smoke-noisy") {
        p.dataset_shapes = {{50, 2}, {2, 50}};
        p.algorithms = {Algorithm::exact, Algorithm::fb};
        p.batch_size = 300;
        p.max_batches = 30;
    } else if (name == "smoke-order2") {
        p.observable = {ObservableKind::monomial, 2};
        p.dataset_shapes = {{10, 10}};
        p.batch_size = 300;
        p.max_batches = 30;
    } else {
        throw SchemaError("base", "unknown builtin preset '" + name + "'");
    }
    return p;
}

namespace {

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string at(const std::string& path, std::size_t index) { return path + "[" + std::to_string(index) + "]"; }

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw SchemaError(path.empty() ? "$" : path, "expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw SchemaError(at(path, key), "unknown key");
}

double number(const json& v, const std::string& path) {
    if (v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
    if (!v.is_number()) throw SchemaError(path, "expected a number");
    return v.get<double>();
}

int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
    return v.get<int>();
}

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) throw SchemaError(path, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], at(path, i)));
    return out;
}

void check_theta(double theta, const std::string& path) {
    if (!(std::abs(std::cos(theta)) > 1e-12)) throw SchemaError(path, "|cos(theta)| must exceed 1e-12");
}

void check_s(double s, const std::string& path) {
    if (!(s > 0.0)) throw SchemaError(path, "s must be positive");
}

SystemSpec parse_system(const json& j, const std::string& path, SystemSpec spec) {
    reject_unknown(j, path, {"theta", "phi", "s", "pairs", "reals"});
    if (j.contains("theta")) spec.theta = number(j["theta"], at(path, "theta"));
    if (j.contains("phi")) spec.phi = number(j["phi"], at(path, "phi"));
    if (j.contains("s")) spec.s = number(j["s"], at(path, "s"));
    if (j.contains("pairs")) {
        const json& pairs = j["pairs"];
        if (!pairs.is_array()) throw SchemaError(at(path, "pairs"), "expected an array of [alpha, beta]");
        spec.pairs.clear();
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const std::string pp = at(at(path, "pairs"), i);
            if (!pairs[i].is_array() || pairs[i].size() != 2) throw SchemaError(pp, "expected [alpha, beta]");
            const double beta = number(pairs[i][1], at(pp, 1));
            if (beta == 0.0) throw SchemaError(at(pp, 1), "beta must be nonzero");
            spec.pairs.push_back({number(pairs[i][0], at(pp, 0)), beta});
        }
    }
    if (j.contains("reals")) {
        const json& reals = j["reals"];
        if (!reals.is_array()) throw SchemaError(at(path, "reals"), "expected an array");
        spec.reals.clear();
        for (std::size_t i = 0; i < reals.size(); ++i) spec.reals.push_back(number(reals[i], at(at(path, "reals"), i)));
    }
    check_theta(spec.theta, at(path, "theta"));
    check_s(spec.s, at(path, "s"));
    if (spec.dim() == 0) throw SchemaError(path, "spectrum is empty");
    if (!spec.uses_qsl_form() && (spec.theta != 0.0 || spec.phi != 0.0 || spec.s != 1.0))
        throw SchemaError(path, "theta/phi/s apply only to one pair plus one real eigenvalue");
    return spec;
}

}  // namespace

ExperimentPreset preset_from_json(const json& config) {
    reject_unknown(config, "",
                   {"base", "name", "system", "sweep", "observable", "lifting_order", "dataset_shapes", "noise",
                    "algorithms", "batch_size", "kl_threshold", "max_batches", "grid", "output_dir"});
    ExperimentPreset p;
    if (config.contains("base")) {
        if (!config["base"].is_string()) throw SchemaError("base", "expected a preset name");
        p = builtin_preset(config["base"].get<std::string>());
    } else {
        p = reference_defaults("custom");
    }
    if (config.contains("name")) {
        if (!config["name"].is_string() || config["name"].get<std::string>().empty())
            throw SchemaError("name", "expected a non-empty string");
        p.name = config["name"].get<std::string>();
    }
    if (config.contains("system")) {
        p.system = parse_system(config["system"], "system", p.system);
        p.sweep_theta.clear();
        p.sweep_phi.clear();
        p.sweep_s.clear();
        p.sweep_real.clear();
    }
    if (config.contains("sweep")) {
        const json& sw = config["sweep"];
        reject_unknown(sw, "sweep", {"theta", "phi", "s", "real_eigenvalue"});
        p.sweep_theta.clear();
        p.sweep_phi.clear();
        p.sweep_s.clear();
        p.sweep_real.clear();
        if (sw.contains("theta")) p.sweep_theta = number_list(sw["theta"], "sweep.theta");
        if (sw.contains("phi")) p.sweep_phi = number_list(sw["phi"], "sweep.phi");
        if (sw.contains("s")) p.sweep_s = number_list(sw["s"], "sweep.s");
        if (sw.contains("real_eigenvalue")) {
            if (!p.sweep_theta.empty() || !p.sweep_phi.empty() || !p.sweep_s.empty())
                throw SchemaError("sweep.real_eigenvalue", "cannot be combined with a (theta, phi, s) sweep");
            if (p.system.reals.empty()) throw SchemaError("sweep.real_eigenvalue", "system has no real eigenvalue");
            p.sweep_real = number_list(sw["real_eigenvalue"], "sweep.real_eigenvalue");
        }
        for (std::size_t i = 0; i < p.sweep_theta.size(); ++i) check_theta(p.sweep_theta[i], at("sweep.theta", i));
        for (std::size_t i = 0; i < p.sweep_s.size(); ++i) check_s(p.sweep_s[i], at("sweep.s", i));
        if ((!p.sweep_theta.empty() || !p.sweep_phi.empty() || !p.sweep_s.empty()) && !p.system.uses_qsl_form())
            throw SchemaError("sweep", "(theta, phi, s) sweeps need one pair plus one real eigenvalue");
    }
    if (config.contains("observable")) {
        if (!config["observable"].is_string()) throw SchemaError("observable", "expected a string");
        p.observable = ObservableChoice::parse(config["observable"].get<std::string>());
    }
    if (config.contains("lifting_order")) p.lifting_order = integer(config["lifting_order"], "lifting_order");
    if (p.lifting_order != 1 && p.lifting_order != 2) throw SchemaError("lifting_order", "must be 1 or 2");
    if (p.observable.kind == ObservableKind::monomial && p.lifting_order != 1)
        throw SchemaError("lifting_order", "monomial observables are already lifted; use 1");
    if (p.observable.kind == ObservableKind::eq_y && p.system.dim() != 3)
        throw SchemaError("observable", "eq-y needs a 3D system");

    if (config.contains("dataset_shapes")) {
        const json& shapes = config["dataset_shapes"];
        if (!shapes.is_array() || shapes.empty()) throw SchemaError("dataset_shapes", "expected a non-empty array");
        p.dataset_shapes.clear();
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            const std::string sp = at("dataset_shapes", i);
            if (!shapes[i].is_array() || shapes[i].size() != 2) throw SchemaError(sp, "expected [N, L]");
            DatasetShape s{integer(shapes[i][0], at(sp, 0)), integer(shapes[i][1], at(sp, 1))};
            if (s.trajectories < 1) throw SchemaError(at(sp, 0), "N must be at least 1");
            if (s.length < 2) throw SchemaError(at(sp, 1), "L must be at least 2");
            p.dataset_shapes.push_back(s);
        }
    }
    if (config.contains("noise")) {
        const json& n = config["noise"];
        reject_unknown(n, "noise", {"system_sigma", "measurement_sigma"});
        if (n.contains("system_sigma")) p.noise.system_sigma = number(n["system_sigma"], "noise.system_sigma");
        if (n.contains("measurement_sigma"))
            p.noise.measurement_sigma = number(n["measurement_sigma"], "noise.measurement_sigma");
        if (!(p.noise.system_sigma >= 0.0)) throw SchemaError("noise.system_sigma", "must be nonnegative");
        if (!(p.noise.measurement_sigma >= 0.0)) throw SchemaError("noise.measurement_sigma", "must be nonnegative");
    }
    if (config.contains("algorithms")) {
        const json& algs = config["algorithms"];
        if (!algs.is_array() || algs.empty()) throw SchemaError("algorithms", "expected a non-empty array");
        p.algorithms.clear();
        for (std::size_t i = 0; i < algs.size(); ++i) {
            if (!algs[i].is_string()) throw SchemaError(at("algorithms", i), "expected a string");
            try {
                p.algorithms.push_back(algorithm_from_string(algs[i].get<std::string>()));
            } catch (const InvalidArgument&) {
                throw SchemaError(at("algorithms", i), "unknown algorithm '" + algs[i].get<std::string>() + "'");
            }
        }
    }
    if (config.contains("batch_size")) p.batch_size = integer(config["batch_size"], "batch_size");
    if (p.batch_size < 1) throw SchemaError("batch_size", "must be positive");
    if (config.contains("kl_threshold")) p.kl_threshold = number(config["kl_threshold"], "kl_threshold");
    if (!(p.kl_threshold > 0.0)) throw SchemaError("kl_threshold", "must be positive");
    if (config.contains("max_batches")) p.max_batches = integer(config["max_batches"], "max_batches");
    if (p.max_batches < 1) throw SchemaError("max_batches", "must be positive");
    if (config.contains("grid")) {
        const json& g = config["grid"];
        reject_unknown(g, "grid", {"re_min", "re_max", "im_min", "im_max", "cells", "sigma"});
        if (g.contains("re_min")) p.grid.re_min = number(g["re_min"], "grid.re_min");
        if (g.contains("re_max")) p.grid.re_max = number(g["re_max"], "grid.re_max");
        if (g.contains("im_min")) p.grid.im_min = number(g["im_min"], "grid.im_min");
        if (g.contains("im_max")) p.grid.im_max = number(g["im_max"], "grid.im_max");
        if (g.contains("cells")) p.grid.cells = integer(g["cells"], "grid.cells");
        if (g.contains("sigma")) p.grid.sigma = number(g["sigma"], "grid.sigma");
        if (!(p.grid.re_max > p.grid.re_min)) throw SchemaError("grid.re_max", "must exceed re_min");
        if (!(p.grid.im_max > p.grid.im_min)) throw SchemaError("grid.im_max", "must exceed im_min");
        if (p.grid.cells < 2) throw SchemaError("grid.cells", "must be at least 2");
        if (!(p.grid.sigma > 0.0)) throw SchemaError("grid.sigma", "must be positive");
    }
    if (config.contains("output_dir")) {
        if (!config["output_dir"].is_string()) throw SchemaError("output_dir", "expected a string");
        p.output_dir = config["output_dir"].get<std::string>();
    }
    return p;
}

json preset_to_json(const ExperimentPreset& p) {
    json j;
    j["name"] = p.name;
    json pairs = json::array();
    for (const auto& pr : p.system.pairs) pairs.push_back({pr.alpha, pr.beta});
    j["system"] = {{"theta", p.system.theta}, {"phi", p.system.phi}, {"s", p.system.s}, {"pairs", pairs},
                   {"reals", p.system.reals}};
    json sweep = json::object();
    if (!p.sweep_theta.empty()) sweep["theta"] = p.sweep_theta;
    if (!p.sweep_phi.empty()) sweep["phi"] = p.sweep_phi;
    if (!p.sweep_s.empty()) sweep["s"] = p.sweep_s;
    if (!p.sweep_real.empty()) sweep["real_eigenvalue"] = p.sweep_real;
    if (!sweep.empty()) j["sweep"] = sweep;
    j["observable"] = p.observable.tag();
    j["lifting_order"] = p.lifting_order;
    json shapes = json::array();
    for (const auto& s : p.dataset_shapes) shapes.push_back({s.trajectories, s.length});
    j["dataset_shapes"] = shapes;
    j["noise"] = {{"system_sigma", p.noise.system_sigma}, {"measurement_sigma", p.noise.measurement_sigma}};
    json algs = json::array();
    for (auto a : p.algorithms) algs.push_back(to_string(a));
    j["algorithms"] = algs;
    j["batch_size"] = p.batch_size;
    if (std::isinf(p.kl_threshold))
        j["kl_threshold"] = "inf";
    else
        j["kl_threshold"] = p.kl_threshold;
    j["max_batches"] = p.max_batches;
    j["grid"] = {{"re_min", p.grid.re_min}, {"re_max", p.grid.re_max}, {"im_min", p.grid.im_min},
                 {"im_max", p.grid.im_max}, {"cells", p.grid.cells},   {"sigma", p.grid.sigma}};
    j["output_dir"] = p.output_dir;
    return j;
}

ExperimentPreset load_config(const std::string& source) {
    const std::string prefix = "builtin:";
    if (source.rfind(prefix, 0) == 0) return builtin_preset(source.substr(prefix.size()));
    if (!fs::exists(source)) {
        for (const auto& name : builtin_preset_names())
            if (name == source) return builtin_preset(name);
        throw SchemaError("$", "config file '" + source + "' does not exist");
    }
    std::ifstream in(source);
    json config;
    try {
        in >> config;
    } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("invalid JSON: ") + e.what());
    }
    return preset_from_json(config);
}

int effective_order(const ExperimentPreset& preset) {
    return preset.observable.kind == ObservableKind::monomial ? preset.observable.order : preset.lifting_order;
}

ComplexList truth_spectrum(const ExperimentPreset& preset, const SystemSpec& point) {
    const ComplexList base = point.spectrum();
    const int order = effective_order(preset);
    if (order == 1) return base;
    return lattice_multipliers(build_basis(base, order), base);
}

std::string CellKey::id() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "g%03d_shape%d_%s", grid_index, shape_index, to_string(algorithm));
    return buf;
}

std::uint64_t trial_seed(std::uint64_t master_seed, const CellKey& cell, long long trial) {
    return derive_seed(master_seed, {static_cast<std::uint64_t>(cell.grid_index),
                                     static_cast<std::uint64_t>(cell.shape_index),
                                     static_cast<std::uint64_t>(cell.algorithm), static_cast<std::uint64_t>(trial)});
}

namespace {

ObservableMap observable_for(const ObservableChoice& choice, int dim) {
    switch (choice.kind) {
        case ObservableKind::linear: return linear_observable(dim);
        case ObservableKind::eq_y: return quadratic_observable();
        case ObservableKind::monomial: return monomial_observable(dim, choice.order);
    }
    throw InvalidArgument("unknown observable");
}

}  // namespace

TrialFunction make_trial_function(const ExperimentPreset& preset, const CellKey& cell, std::uint64_t master_seed) {
    const auto points = preset.grid_points();
    if (cell.grid_index < 0 || cell.grid_index >= static_cast<int>(points.size()))
        throw InvalidArgument("grid index out of range");
    if (cell.shape_index < 0 || cell.shape_index >= static_cast<int>(preset.dataset_shapes.size()))
        throw InvalidArgument("shape index out of range");

    struct Context {
        LinearSystem system;
        ObservableMap map;
        std::optional<MonomialBasis> lifting;
        ComplexList truth;
        NoiseSpec noise;
        DatasetShape shape;
        Algorithm algorithm;
        CellKey cell;
        std::uint64_t master;
    };
    auto ctx = std::make_shared<Context>();
    const SystemSpec& point = points[static_cast<std::size_t>(cell.grid_index)];
    ctx->system = build_system(point);
    ctx->map = observable_for(preset.observable, point.dim());
    if (preset.observable.kind != ObservableKind::monomial && preset.lifting_order > 1)
        ctx->lifting = monomial_lifting(ctx->map.out_dim, preset.lifting_order);
    ctx->truth = truth_spectrum(preset, point);
    ctx->noise = preset.noise;
    ctx->shape = preset.dataset_shapes[static_cast<std::size_t>(cell.shape_index)];
    ctx->algorithm = cell.algorithm;
    ctx->cell = cell;
    ctx->master = master_seed;

    return [ctx](long long trial) -> TrialOutcome {
        NoiseSpec noise = ctx->noise;
        noise.seed = trial_seed(ctx->master, ctx->cell, trial);
        const TrajectorySet data = simulate(ctx->system, ctx->map, noise, ctx->shape.trajectories, ctx->shape.length);
        const SnapshotPairs pairs = make_pairs(data, ctx->lifting);
        DmdModel model;
        if (ctx->algorithm == Algorithm::opt) {
            OptDmdOptions opt;
            opt.rank = static_cast<int>(ctx->truth.size());
            model = opt_dmd(pairs.trajectory(0), opt);
        } else {
            model = fit(ctx->algorithm, pairs);
        }
        return {register_estimates(model.eigenvalues, ctx->truth), model.kappa_est};
    };
}

CellResult run_cell(const ExperimentPreset& preset, const CellKey& cell, std::uint64_t master_seed, int threads) {
    CellResult out;
    out.key = cell;
    out.system = preset.grid_points().at(static_cast<std::size_t>(cell.grid_index));
    out.shape = preset.dataset_shapes.at(static_cast<std::size_t>(cell.shape_index));
    out.kappa_a = build_system(out.system).kappa;
    out.truth = sorted_bins(truth_spectrum(preset, out.system));
    if (cell.algorithm == Algorithm::opt && out.shape.trajectories > 1)
        out.warnings.push_back(cell.id() + ": optimized DMD uses only the first of " +
                               std::to_string(out.shape.trajectories) + " trajectories (length " +
                               std::to_string(out.shape.length) + ")");
    BatchOptions batch;
    batch.batch_size = preset.batch_size;
    batch.kl_threshold = preset.kl_threshold;
    batch.max_batches = preset.max_batches;
    batch.threads = threads;
    batch.grid = preset.grid;
    out.convergence = run_until_converged(make_trial_function(preset, cell, master_seed), out.truth, batch);
    if (!out.convergence.converged)
        out.warnings.push_back(cell.id() + ": KL threshold not reached within " +
                               std::to_string(preset.max_batches) + " batches");
    return out;
}

json RunManifest::to_json() const {
    json j;
    j["preset_id"] = preset_id;
    j["master_seed"] = master_seed;
    j["seed_rule"] = seed_rule;
    j["version"] = version;
    json files_json = json::array();
    for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    j["files"] = files_json;
    j["failed_cells"] = failed_cells;
    j["warnings"] = warnings;
    return j;
}

RunManifest run_preset(const ExperimentPreset& preset_in, std::uint64_t master_seed, const RunOptions& options) {
    ExperimentPreset preset = preset_in;
    if (options.max_batches) {
        if (*options.max_batches < 1) throw SchemaError("max_batches", "must be positive");
        preset.max_batches = *options.max_batches;
    }
    const fs::path root = options.output_root.empty() ? fs::path(preset.output_dir) : options.output_root;
    const fs::path run_dir = root / preset.name;
    fs::create_directories(run_dir / "cells");

    RunManifest manifest;
    manifest.preset_id = preset.name;
    manifest.master_seed = master_seed;
    manifest.seed_rule =
        "splitmix64 chain over (master_seed, grid_index, shape_index, algorithm, trial_index); "
        "per-trajectory substreams keyed by (trial_seed, trajectory_index)";
    manifest.version = kVersion;
    manifest.run_dir = run_dir;

    auto record = [&](const fs::path& rel) {
        const fs::path full = run_dir / rel;
        manifest.files.push_back({rel.generic_string(), sha256_file(full), fs::file_size(full)});
    };

    write_text(run_dir / "config.json", preset_to_json(preset).dump(2) + "\n");
    record("config.json");

    std::vector<BinStatsRow> rows;
    const auto points = preset.grid_points();
    for (int g = 0; g < static_cast<int>(points.size()); ++g) {
        for (int sh = 0; sh < static_cast<int>(preset.dataset_shapes.size()); ++sh) {
            for (Algorithm alg : preset.algorithms) {
                const CellKey key{g, sh, alg};
                const std::string id = key.id();
                CellResult cell;
                try {
                    cell = run_cell(preset, key, master_seed, options.threads);
                } catch (const Error& e) {
                    manifest.failed_cells.push_back(id + ": " + e.what());
                    continue;
                }
                manifest.warnings.insert(manifest.warnings.end(), cell.warnings.begin(), cell.warnings.end());

                const fs::path csv_rel = fs::path("cells") / (id + "_density.csv");
                const fs::path meta_rel = fs::path("cells") / (id + "_density.json");
                write_density_csv(cell.convergence.grid, run_dir / csv_rel);
                json meta = density_metadata(cell.convergence.grid, cell.truth);
                meta["cell"] = id;
                meta["system"] = {{"theta", cell.system.theta}, {"phi", cell.system.phi}, {"s", cell.system.s},
                                  {"description", describe(cell.system)}};
                meta["shape"] = {cell.shape.trajectories, cell.shape.length};
                meta["algorithm"] = to_string(alg);
                meta["observable"] = preset.observable.tag();
                meta["lifting_order"] = preset.lifting_order;
                meta["kappa_A"] = cell.kappa_a;
                meta["batches"] = cell.convergence.batches;
                meta["converged"] = cell.convergence.converged;
                meta["kl_history"] = cell.convergence.kl_history;
                meta["trials"] = cell.convergence.trials;
                meta["discarded"] = cell.convergence.discarded;
                meta["warnings"] = cell.warnings;
                write_text(run_dir / meta_rel, meta.dump(2) + "\n");
                record(csv_rel);
                record(meta_rel);

                for (std::size_t b = 0; b < cell.convergence.stats.size(); ++b)
                    rows.push_back({preset.name + "/" + id, static_cast<int>(b), cell.convergence.stats[b], cell.kappa_a});
            }
        }
    }
    write_binstats_csv(rows, run_dir / "binstats.csv");
    record("binstats.csv");
    write_text(run_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
    return manifest;
}

bool verify_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (const json::parse_error&) {
        return false;
    }
    const fs::path dir = manifest_path.parent_path();
    for (const auto& f : j.at("files")) {
        const fs::path file = dir / f.at("path").get<std::string>();
        if (!fs::exists(file)) return false;
        if (sha256_file(file) != f.at("sha256").get<std::string>()) return false;
    }
    return true;
}

std::vector<CellSummary> summarize(const std::vector<BinStatsRow>& rows) {
    std::vector<CellSummary> out;
    for (const auto& r : rows) {
        if (out.empty() || out.back().cell != r.preset_id) {
            CellSummary s;
            s.cell = r.preset_id;
            s.discard_fraction = r.stats.discard_fraction;
            s.kappa_a = r.kappa_a;
            s.kappa_est_mean = r.stats.kappa_mean;
            out.push_back(s);
        }
        CellSummary& s = out.back();
        s.mean_std = (s.mean_std * s.bins + r.stats.std) / (s.bins + 1);
        s.max_std = std::max(s.max_std, r.stats.std);
        ++s.bins;
    }
    return out;
}

}  // namespace dmdbench
