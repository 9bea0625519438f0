#pragma once

// Experiment presets, configuration loading, per-cell trial orchestration and
// run manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmdbench/dmd_core.hpp"
#include "dmdbench/io.hpp"
#include "dmdbench/lds_models.hpp"
#include "dmdbench/spectral_eval.hpp"

namespace dmdbench {

enum class ObservableKind { linear, eq_y, monomial };

struct ObservableChoice {
    ObservableKind kind = ObservableKind::linear;
    int order = 1;  // monomial order; 1 for linear, 2 for eq-y

    std::string tag() const;
    static ObservableChoice parse(const std::string& tag);
};

struct DatasetShape {
    int trajectories = 0;
    int length = 0;
    bool operator==(const DatasetShape&) const = default;
};

/// Either a single system, a (theta, phi, s) sweep or a sweep of the last
/// real eigenvalue, resolved into an explicit list of grid points.
struct ExperimentPreset {
    std::string name;
    SystemSpec system;
    std::vector<double> sweep_theta, sweep_phi, sweep_s;
    std::vector<double> sweep_real;
    ObservableChoice observable;
    int lifting_order = 1;
    std::vector<DatasetShape> dataset_shapes;
    NoiseSpec noise;
    std::vector<Algorithm> algorithms;
    int batch_size = 300;
    double kl_threshold = 1e-3;
    int max_batches = 20;
    GridGeometry grid;
    std::string output_dir = "runs";

    /// Grid points in sweep order: s outermost, then phi, then theta.
    std::vector<SystemSpec> grid_points() const;
};

std::vector<std::string> builtin_preset_names();

/// Throws SchemaError for unknown names.
ExperimentPreset builtin_preset(const std::string& name);

/// Fully resolves defaults; rejects unknown keys and invalid values with the
/// JSON path of the offending field. A "base" key names a builtin to start from.
ExperimentPreset preset_from_json(const nlohmann::json& config);
nlohmann::json preset_to_json(const ExperimentPreset& preset);

/// `source` is a path to a JSON config, or "builtin:<name>" / a bare builtin name.
ExperimentPreset load_config(const std::string& source);

/// Truth spectrum the estimates of one grid point are registered against.
ComplexList truth_spectrum(const ExperimentPreset& preset, const SystemSpec& point);

/// Lifting order applied to the data (the order of the truth lattice).
int effective_order(const ExperimentPreset& preset);

struct CellKey {
    int grid_index = 0;
    int shape_index = 0;
    Algorithm algorithm = Algorithm::exact;

    std::string id() const;
};

/// Trial seed = derive_seed(master, {grid, shape, algorithm, trial}).
std::uint64_t trial_seed(std::uint64_t master_seed, const CellKey& cell, long long trial);

/// Closure running one trial of a cell: simulate, lift, fit, register.
TrialFunction make_trial_function(const ExperimentPreset& preset, const CellKey& cell, std::uint64_t master_seed);

struct CellResult {
    CellKey key;
    SystemSpec system;
    DatasetShape shape;
    double kappa_a = 0.0;
    ComplexList truth;
    ConvergenceResult convergence;
    std::vector<std::string> warnings;
};

CellResult run_cell(const ExperimentPreset& preset, const CellKey& cell, std::uint64_t master_seed, int threads);

struct RunOptions {
    int threads = 1;
    std::optional<int> max_batches;
    std::filesystem::path output_root;
};

struct ManifestEntry {
    std::string path;  // relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string preset_id;
    std::uint64_t master_seed = 0;
    std::string seed_rule;
    std::string version;
    std::filesystem::path run_dir;
    std::vector<ManifestEntry> files;
    std::vector<std::string> failed_cells;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

/// Runs every grid point × shape × algorithm cell and writes density CSV and
/// metadata per cell, one BinStats CSV, and manifest.json into
/// output_root/<preset name>.
RunManifest run_preset(const ExperimentPreset& preset, std::uint64_t master_seed, const RunOptions& options);

/// True when every file listed in the manifest exists and hash-matches.
bool verify_manifest(const std::filesystem::path& manifest_path);

/// Aggregated per-cell summary over one or more BinStats CSVs.
struct CellSummary {
    std::string cell;
    int bins = 0;
    double mean_std = 0.0;
    double max_std = 0.0;
    double discard_fraction = 0.0;
    double kappa_a = 0.0;
    double kappa_est_mean = 0.0;
};

std::vector<CellSummary> summarize(const std::vector<BinStatsRow>& rows);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dmdbench
