#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/loss.hpp"
#include "lyapcert/meta.hpp"
#include "lyapcert/net.hpp"
#include "lyapcert/roa.hpp"
#include "lyapcert/verify.hpp"

namespace lyapcert {

struct SystemBlock {
    SystemModel model;
    ParamVector nominal;            // theta_0
    std::vector<double> variance;   // diag of Sigma_theta
    ParamVector test;               // theta_test
};

struct DataBlock {
    std::size_t tasks = 10;             // n
    std::size_t batches_per_task = 20;  // m_i
    std::size_t train_size = 32;        // K
    std::size_t test_size = 32;         // J
    std::size_t adapt_samples = 50;     // test-time sample budget
};

struct LossBlock {
    /// Training margins are eps_scale * d unless given absolutely.
    double eps_scale = 0.01;
    std::optional<double> eps_positive;
    std::optional<double> eps_decrease;

    TightenedLossConfig at_radius(double d) const;
};

struct BaselineBlock {
    std::size_t nlf_samples = 20000;
    std::size_t nlf_steps = 5000;
    std::size_t nlf_batch = 256;
    double nlf_step_size = 0.01;
    std::size_t tnlf_samples = 50;
    std::size_t tnlf_steps = 10;
};

struct VerifyBlock {
    double d0 = 1.0;
    std::size_t nodes_per_axis = 101;
    double shrink_factor = 0.8;
    int max_rounds = 5;
    LipschitzOptions lipschitz;
    double core_fraction = 0.1;
};

struct RoaBlock {
    std::size_t samples = 1000;
    double step = 0.01;
    double horizon = 20.0;
    double tolerance = 1e-2;
    std::optional<Plane> plane;
};

struct ExperimentConfig {
    std::string name;
    SystemBlock system;
    Architecture arch;
    DataBlock data;
    LossBlock loss;
    meta::MetaConfig meta;
    BaselineBlock baselines;
    VerifyBlock verify;
    RoaBlock roa;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Stream ids for derive_seed(config.seed, ...).
enum class SeedStream : std::uint64_t {
    Tasks = 1,
    Init,
    TaskData,
    MetaOrder,
    AdaptData,
    TestData,
    NlfData,
    NlfOrder,
    NlfInit,
    NominalData,
    MonteCarlo,
    Soundness,
};
std::uint64_t stream_seed(const ExperimentConfig& config, SeedStream stream, std::uint64_t sub = 0);

/// Strict parse: unknown keys and type errors raise ConfigError with the JSON
/// path of the field ("verify.d0").
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Directory holding the shipped presets: $LYAPCERT_PRESET_DIR, else the
/// source tree's presets/.
std::filesystem::path preset_dir();
std::vector<std::string> preset_names();
ExperimentConfig load_preset(const std::string& name);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string hash_json(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& config);
/// Hash of the blocks every method shares (grid, Lipschitz, ROA settings).
std::string verification_hash(const ExperimentConfig& config);

}  // namespace lyapcert
