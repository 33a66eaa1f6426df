#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lyapcert/config.hpp"
#include "lyapcert/pipeline.hpp"

namespace lyapcert {

enum class Method { QlfTs, NlfTs, TNlf, MetaNlf };

/// "QLF_TS", "NLF_TS", "T_NLF", "META_NLF".
std::string to_string(Method method);
inline constexpr Method kAllMethods[] = {Method::NlfTs, Method::MetaNlf, Method::QlfTs, Method::TNlf};

struct BaselineReport {
    Method method = Method::QlfTs;
    Certification cert;  // grid, map and ROA the area comes from
    double radius = 0.0;
    bool region_selected = true;
    int rounds = 1;

    // Training phase: samples labelled and gradient steps taken before any
    // access to the test system (nominal or meta training).
    std::size_t train_samples_used = 0;
    std::size_t gradient_steps_used = 0;
    // Samples drawn from, and gradient steps taken on, the test system.
    std::size_t test_samples_used = 0;
    std::size_t test_steps_used = 0;
    bool reads_nominal = false;

    std::optional<MonteCarloReport> validation;
    std::optional<std::string> failure;
    std::vector<double> theta;  // neural methods
    double wall_seconds = 0.0;

    const RoaResult& roa() const { return cert.roa; }
    /// Certified and re-validated: c > 0 and every Monte-Carlo rollout converged.
    bool sound() const;
    double area() const { return cert.roa.area; }
};

/// x^T P x with A_cl^T P + P A_cl = -I from the test system's linearization,
/// checked against the true nonlinear Lie derivative at radius d0.
/// Throws NotHurwitz.
BaselineReport qlf_ts(const ExperimentConfig& config);

/// Plain gradient descent on a large test-system dataset inside the region
/// selection loop; never reads theta_0.
BaselineReport nlf_ts(const ExperimentConfig& config);

/// Fully trained on the nominal system, then tnlf_samples / tnlf_steps of
/// fine-tuning on the test system.
BaselineReport t_nlf(const ExperimentConfig& config);

/// Meta-NLF adapted to the test system with data.adapt_samples /
/// meta.test_steps. Reuses `run` when given.
BaselineReport meta_nlf(const ExperimentConfig& config, const MetaRun* run = nullptr);

/// Monte-Carlo soundness gate on the test system; fills report.validation.
void validate_roa(BaselineReport& report, const ExperimentConfig& config, std::uint64_t stream);

struct ComparisonTable {
    std::string system;
    std::string preset;
    ParamVector nominal;
    ParamVector test;
    std::string verification_hash;  // equal for every row by construction
    std::vector<BaselineReport> rows;  // kAllMethods order
};

/// Runs every method; a failing method is recorded in its row and does not
/// abort the others. Every row with c > 0 is re-validated by simulation.
ComparisonTable compare(const ExperimentConfig& config, const MetaRun* run = nullptr);

}  // namespace lyapcert
