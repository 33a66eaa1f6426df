#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyapcert/baselines.hpp"
#include "lyapcert/config.hpp"
#include "lyapcert/dynamics.hpp"
#include "lyapcert/net.hpp"
#include "lyapcert/pipeline.hpp"

namespace lyapcert::io {

/// Writes to "<path>.tmp" and renames over path, creating parent directories.
void write_atomic(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// Throws MissingArtifact.
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// "<dir>/<stem>.timing.json"; wall times live here so the numeric artifacts
/// stay bitwise reproducible.
std::filesystem::path timing_path(const std::filesystem::path& artifact);

/// {config_hash, seed, name}; embedded in every artifact.
nlohmann::json provenance(const ExperimentConfig& config);

struct Checkpoint {
    std::string kind = "meta";  // "meta" | "adapted"
    Architecture arch;
    std::vector<double> theta;
    double radius = 0.0;
    bool region_selected = false;
    std::optional<ParamVector> adapted_to;
    std::size_t samples_used = 0;
    std::size_t steps_used = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws MissingArtifact, or ArchMismatch when theta does not fit the
/// stored architecture or the architecture differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture& expected);

nlohmann::json to_json(const ParamVector& params);
nlohmann::json meta_run_json(const MetaRun& run);
std::string loss_curve_csv(const std::vector<double>& curve);
nlohmann::json certification_json(const Certification& cert);
nlohmann::json monte_carlo_json(const MonteCarloReport& report);
nlohmann::json report_json(const BaselineReport& report);

/// Names of the parameters with non-zero variance, e.g. "(l, m, g, b)".
std::string stochastic_label(const ExperimentConfig& config);

/// One row per method, no wall times.
nlohmann::json comparison_json(const ComparisonTable& table, const ExperimentConfig& config);
/// env, stochastic params, then one area column per method in the published
/// table's order; SOS-LF(TS) is rendered as "not implemented".
std::string comparison_csv(const ComparisonTable& table, const ExperimentConfig& config);

/// Nodes of the plane slice through the origin (all other lattice coordinates
/// zero): coordinates, vbar, lie, flags and ROA membership.
std::string validity_csv(const Certification& cert, Plane plane);

std::string trajectories_csv(const std::vector<Trajectory>& runs);

struct SvgLayer {
    const Certification* cert = nullptr;
    std::string label;
    std::string color = "#1f4e9c";
};

struct SvgOptions {
    Plane plane{0, 1};
    bool heatmap = true;            // green/red/core cells of the first layer
    const VectorField* field = nullptr;  // arrow glyphs, 2-D systems only
    std::vector<Trajectory> trajectories;
    double size_px = 560.0;
};

/// Validity heatmap of the first layer's plane slice, the member-cell outline
/// of every layer's ROA, trajectories and vector-field glyphs.
std::string render_svg(const std::vector<SvgLayer>& layers, const SvgOptions& options);

}  // namespace lyapcert::io
