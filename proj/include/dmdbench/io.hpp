#pragma once

// Flat-file artifacts: trajectory CSV + provenance sidecar, model JSON,
// density CSV + metadata, BinStats CSV, content hashes.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmdbench/dmd_core.hpp"
#include "dmdbench/lds_models.hpp"
#include "dmdbench/spectral_eval.hpp"

namespace dmdbench {

/// Shortest-safe round-trip formatting: 17 significant digits.
std::string format_double(double v);

/// CSV: trial,step,y0..y{d-1}; one row per time step.
void write_trajectories_csv(const TrajectorySet& set, const std::filesystem::path& csv);
nlohmann::json trajectory_provenance(const TrajectorySet& set);

/// Reads the CSV written above, grouping rows by trial id (in first-seen
/// order) and ordering each group by step.
std::vector<MatrixXd> read_trajectories_csv(const std::filesystem::path& csv);

nlohmann::json model_to_json(const DmdModel& model);

/// Density rows (re,im,density) for cells with nonzero mass.
void write_density_csv(const DensityGrid& grid, const std::filesystem::path& csv);
nlohmann::json density_metadata(const DensityGrid& grid, const ComplexList& truth);

struct BinStatsRow {
    std::string preset_id;
    int bin_id = 0;
    BinStats stats;
    double kappa_a = 0.0;
};

inline constexpr const char* kBinStatsHeader =
    "preset_id,bin_id,truth_re,truth_im,mean_re,mean_im,std,discard_fraction,kappa_A,kappa_est_mean";

void write_binstats_csv(const std::vector<BinStatsRow>& rows, const std::filesystem::path& csv);
std::vector<BinStatsRow> read_binstats_csv(const std::filesystem::path& csv);

std::string sha256_file(const std::filesystem::path& file);

void write_text(const std::filesystem::path& file, const std::string& content);

}  // namespace dmdbench
