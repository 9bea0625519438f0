// Command-line front end: simulate, fit, sweep, report, verify.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dmdbench/error.hpp"
#include "dmdbench/harness.hpp"
#include "dmdbench/io.hpp"

namespace fs = std::filesystem;
using namespace dmdbench;

namespace {

fs::path default_output_root() {
    if (const char* env = std::getenv("DMDBENCH_OUT"); env != nullptr && *env != '\0') return env;
    return {};
}

int cmd_simulate(const std::string& config, std::uint64_t seed, int grid_index, int shape_index,
                 const fs::path& out) {
    const ExperimentPreset preset = load_config(config);
    const auto points = preset.grid_points();
    if (grid_index < 0 || grid_index >= static_cast<int>(points.size()))
        throw InvalidArgument("grid index " + std::to_string(grid_index) + " out of range");
    if (shape_index < 0 || shape_index >= static_cast<int>(preset.dataset_shapes.size()))
        throw InvalidArgument("shape index " + std::to_string(shape_index) + " out of range");
    const SystemSpec& point = points[static_cast<std::size_t>(grid_index)];
    const LinearSystem sys = build_system(point);
    ObservableMap map;
    switch (preset.observable.kind) {
        case ObservableKind::linear: map = linear_observable(point.dim()); break;
        case ObservableKind::eq_y: map = quadratic_observable(); break;
        case ObservableKind::monomial: map = monomial_observable(point.dim(), preset.observable.order); break;
    }
    NoiseSpec noise = preset.noise;
    noise.seed = seed;
    const DatasetShape shape = preset.dataset_shapes[static_cast<std::size_t>(shape_index)];
    const TrajectorySet data = simulate(sys, map, noise, shape.trajectories, shape.length);
    write_trajectories_csv(data, out);

    nlohmann::json side = trajectory_provenance(data);
    side["preset"] = preset.name;
    side["grid_index"] = grid_index;
    nlohmann::json truth = nlohmann::json::array();
    for (const Complex& v : sys.spectrum) truth.push_back({v.real(), v.imag()});
    side["spectrum"] = truth;
    side["kappa_A"] = sys.kappa;
    side["version"] = kVersion;
    fs::path sidecar = out;
    sidecar += ".json";
    write_text(sidecar, side.dump(2) + "\n");
    std::cout << out.string() << '\n';
    return 0;
}

int cmd_fit(const fs::path& input, const std::string& algorithm, int rank, int lift, const fs::path& out) {
    const auto trajectories = read_trajectories_csv(input);
    std::optional<MonomialBasis> lifting;
    if (lift > 1) lifting = monomial_lifting(static_cast<int>(trajectories.front().rows()), lift);
    const SnapshotPairs pairs = make_pairs(trajectories, lifting);
    const Algorithm alg = algorithm_from_string(algorithm);
    DmdModel model;
    if (alg == Algorithm::opt) {
        OptDmdOptions opt;
        opt.rank = rank > 0 ? rank : exact_dmd(pairs).rank;
        if (pairs.lengths.size() > 1)
            std::cerr << "warning: optimized DMD uses only the first of " << pairs.lengths.size()
                      << " trajectories\n";
        model = opt_dmd(pairs.trajectory(0), opt);
    } else {
        DmdOptions opts;
        if (rank > 0) opts.rank = rank;
        model = fit(alg, pairs, opts);
    }
    const std::string text = model_to_json(model).dump(2) + "\n";
    if (out.empty())
        std::cout << text;
    else
        write_text(out, text);
    return 0;
}

int cmd_sweep(const std::string& config, std::uint64_t seed, std::optional<int> batches, int threads,
              const fs::path& out) {
    const ExperimentPreset preset = load_config(config);
    RunOptions opts;
    opts.threads = threads;
    opts.max_batches = batches;
    opts.output_root = out.empty() ? default_output_root() : out;
    const RunManifest m = run_preset(preset, seed, opts);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : m.failed_cells) std::cerr << "failed: " << f << '\n';
    std::cout << (m.run_dir / "manifest.json").string() << '\n';
    return m.failed_cells.empty() ? 0 : 3;
}

int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out) {
    std::vector<BinStatsRow> rows;
    for (const auto& in : inputs) {
        const fs::path csv = fs::is_directory(in) ? in / "binstats.csv" : in;
        auto more = read_binstats_csv(csv);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    std::ostringstream os;
    os << "cell,bins,mean_std,max_std,discard_fraction,kappa_A,kappa_est_mean\n";
    for (const auto& s : summarize(rows))
        os << s.cell << ',' << s.bins << ',' << format_double(s.mean_std) << ',' << format_double(s.max_std) << ','
           << format_double(s.discard_fraction) << ',' << format_double(s.kappa_a) << ','
           << format_double(s.kappa_est_mean) << '\n';
    if (out.empty())
        std::cout << os.str();
    else
        write_text(out, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark harness for DMD spectral estimates of noisy linear systems"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    fs::path out;

    auto* sim = app.add_subcommand("simulate", "Simulate one dataset of a preset to a trajectory CSV");
    int grid_index = 0, shape_index = 0;
    sim->add_option("--config", config, "Config JSON path or builtin preset name")->required();
    sim->add_option("--seed", seed, "Noise seed")->required();
    sim->add_option("--grid-index", grid_index, "Grid point of the sweep");
    sim->add_option("--shape-index", shape_index, "Dataset shape index");
    sim->add_option("--out", out, "Output CSV")->required();

    auto* fitc = app.add_subcommand("fit", "Fit a DMD model to a trajectory CSV");
    fs::path input;
    std::string algorithm = "exact";
    int rank = 0, lift = 1;
    fitc->add_option("--input", input, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    fitc->add_option("--algorithm", algorithm, "exact | fb | tls | opt");
    fitc->add_option("--rank", rank, "Truncation rank (0: numerical rank)");
    fitc->add_option("--lift", lift, "Monomial lifting order (1 or 2)")->check(CLI::Range(1, 2));
    fitc->add_option("--out", out, "Model JSON (stdout when omitted)");

    auto* sweep = app.add_subcommand("sweep", "Run every cell of a preset until the density converges");
    std::optional<int> batches;
    int threads = 1;
    sweep->add_option("--config", config, "Config JSON path or builtin preset name")->required();
    sweep->add_option("--seed", seed, "Master seed")->required();
    sweep->add_option("--batches", batches, "Override the batch limit");
    sweep->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out, "Output root (default: $DMDBENCH_OUT or the preset's output_dir)");

    auto* report = app.add_subcommand("report", "Summarize BinStats CSVs per cell");
    std::vector<fs::path> inputs;
    report->add_option("inputs", inputs, "Run directories or BinStats CSVs")->required();
    report->add_option("--out", out, "Summary CSV (stdout when omitted)");

    auto* verify = app.add_subcommand("verify", "Check the hashes recorded in a run manifest");
    fs::path manifest;
    verify->add_option("manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(config, seed, grid_index, shape_index, out);
        if (*fitc) return cmd_fit(input, algorithm, rank, lift, out);
        if (*sweep) return cmd_sweep(config, seed, batches, threads, out);
        if (*report) return cmd_report(inputs, out);
        if (*verify) {
            const bool ok = verify_manifest(manifest);
            std::cout << (ok ? "ok" : "mismatch") << '\n';
            return ok ? 0 : 4;
        }
    } catch (const SchemaError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 0;
}
