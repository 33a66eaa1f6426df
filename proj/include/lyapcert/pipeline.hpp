#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyapcert/config.hpp"
#include "lyapcert/dynamics.hpp"
#include "lyapcert/meta.hpp"
#include "lyapcert/roa.hpp"
#include "lyapcert/verify.hpp"

namespace lyapcert {

/// Grid, constants, validity map and ROA of one candidate on one system.
struct Certification {
    GridSpec grid;
    LipschitzConstants constants;
    ValidityMap map;
    RoaResult roa;
    PositivityCertificate positivity;
};

/// The verification path every method shares: grid of the given radius,
/// Lipschitz estimate, tightened checks and level-set extraction, all from
/// config.verify / config.roa.
Certification certify(const LyapunovCandidate& v, const VectorField& f, double radius,
                      const ExperimentConfig& config);

/// The n training systems theta_i ~ N(theta_0, Sigma) with their loops closed.
struct TaskFamily {
    std::vector<ParamVector> params;
    std::vector<ClosedLoop> loops;
};
TaskFamily training_tasks(const ExperimentConfig& config);

struct GdReport {
    std::vector<double> theta;
    std::vector<double> loss_curve;  // minibatch loss before each step
    std::size_t steps = 0;
};

/// Plain minibatch gradient descent: samples are visited in a shuffled order
/// (reshuffled every pass) in consecutive batches of batch_size.
GdReport gradient_descent(const net::Objective& objective, std::span<const Sample> samples,
                          std::vector<double> theta, std::size_t steps, std::size_t batch_size, double step_size,
                          std::uint64_t seed);

/// Test-time adaptation with an explicit budget ledger.
struct Adaptation {
    std::vector<double> theta;
    std::size_t samples_used = 0;
    std::size_t steps_used = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
};

/// Draws `samples` labelled states from the ball of the given radius and takes
/// `steps` full-batch gradient steps of size config.meta.inner_step.
Adaptation adapt_to_system(const ExperimentConfig& config, std::span<const double> theta, const VectorField& f,
                           double radius, std::size_t samples, std::size_t steps, std::uint64_t seed);

struct RoundLog {
    double radius = 0.0;
    std::size_t green_tasks = 0;  // task-adapted maps that are fully green
    double final_meta_loss = 0.0;
    double worst_green_fraction = 1.0;
};

/// Meta-training inside the valid-region selection loop.
struct MetaRun {
    bool selected = false;  // false: rounds exhausted, fields describe the last round
    double radius = 0.0;
    int rounds = 0;
    std::vector<RoundLog> log;
    meta::MetaTrainReport report;
    TaskFamily tasks;
    double wall_seconds = 0.0;
};

/// At each radius d: datasets from the ball of radius d, meta-train from the
/// seeded initialization, adapt to every training task with the test-time
/// budget and check its map; shrink d until every map is fully green.
MetaRun run_meta_training(const ExperimentConfig& config);

}  // namespace lyapcert
