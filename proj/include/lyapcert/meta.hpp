#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/net.hpp"

namespace lyapcert::meta {

enum class Mode { FirstOrder, SecondOrder };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

struct MetaConfig {
    double inner_step = 0.01;     // alpha
    double meta_step = 0.005;     // alpha tilde
    std::size_t tasks_per_step = 4;  // P
    std::size_t meta_steps = 2000;   // script K
    std::size_t test_steps = 10;     // k at test time
    Mode mode = Mode::SecondOrder;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetaTrainReport {
    std::vector<double> theta;       // theta_mnlf
    std::vector<double> loss_curve;  // mean post-adaptation test loss per meta-step
    Mode mode = Mode::SecondOrder;
    double wall_seconds = 0.0;
};

/// theta - alpha * grad L(theta, train).
std::vector<double> adapt_step(const net::Objective& objective, std::span<const double> theta,
                               std::span<const Sample> train, double alpha);

/// L(theta - alpha grad L(theta, train), test): post-adaptation loss.
double meta_objective(const net::Objective& objective, std::span<const double> theta,
                      std::span<const Sample> train, std::span<const Sample> test, double alpha);

/// Gradient of meta_objective. FirstOrder drops the inner Jacobian and returns
/// g_te(theta'); SecondOrder returns g_te(theta') - alpha * H_tr(theta) g_te(theta').
std::vector<double> meta_gradient(const net::Objective& objective, std::span<const double> theta,
                                  std::span<const Sample> train, std::span<const Sample> test, double alpha,
                                  Mode mode);

/// MAML over a family of tasks: each meta-step draws tasks_per_step task
/// indices with replacement, one mini-batch per drawn task, and moves theta
/// against the mean meta-gradient. Throws NonFiniteLoss naming the step.
MetaTrainReport meta_train(const net::Objective& objective, std::span<const TaskDataset> tasks,
                           std::vector<double> theta0, const MetaConfig& cfg);

/// k full-batch gradient steps from theta on the adaptation set.
std::vector<double> test_time_adapt(const net::Objective& objective, std::span<const double> theta,
                                    std::span<const Sample> train, double alpha, std::size_t steps);

}  // namespace lyapcert::meta
