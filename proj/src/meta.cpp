#include "lyapcert/meta.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert::meta {

std::string to_string(Mode mode) {
    return mode == Mode::FirstOrder ? "first_order" : "second_order";
}

Mode mode_from_string(const std::string& name) {
    if (name == "first_order") {
        return Mode::FirstOrder;
    }
    if (name == "second_order") {
        return Mode::SecondOrder;
    }
    throw ConfigError("mode must be first_order or second_order, got '" + name + "'");
}

void MetaConfig::validate() const {
    if (!(inner_step >= 0.0) || !(meta_step >= 0.0)) {
        throw ConfigError("meta step sizes must be non-negative");
    }
    if (tasks_per_step == 0 || meta_steps == 0) {
        throw ConfigError("tasks_per_step and meta_steps must be >= 1");
    }
}

std::vector<double> adapt_step(const net::Objective& objective, std::span<const double> theta,
                               std::span<const Sample> train, double alpha) {
    std::vector<double> out(theta.begin(), theta.end());
    if (alpha == 0.0) {
        return out;
    }
    const std::vector<double> g = objective.gradient(theta, train);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= alpha * g[i];
    }
    return out;
}

double meta_objective(const net::Objective& objective, std::span<const double> theta,
                      std::span<const Sample> train, std::span<const Sample> test, double alpha) {
    const std::vector<double> adapted = adapt_step(objective, theta, train, alpha);
    return objective.value(adapted, test);
}

std::vector<double> meta_gradient(const net::Objective& objective, std::span<const double> theta,
                                  std::span<const Sample> train, std::span<const Sample> test, double alpha,
                                  Mode mode) {
    const std::vector<double> adapted = adapt_step(objective, theta, train, alpha);
    std::vector<double> g_test = objective.gradient(adapted, test);
    if (mode == Mode::FirstOrder || alpha == 0.0) {
        return g_test;
    }
    // d theta'/d theta = I - alpha H_tr, symmetric, so the chain rule needs H_tr g.
    const std::vector<double> hg = net::hvp(objective, theta, train, g_test);
    for (std::size_t i = 0; i < g_test.size(); ++i) {
        g_test[i] -= alpha * hg[i];
    }
    return g_test;
}

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

}  // namespace

MetaTrainReport meta_train(const net::Objective& objective, std::span<const TaskDataset> tasks,
                           std::vector<double> theta0, const MetaConfig& cfg) {
    cfg.validate();
    if (tasks.empty()) {
        throw EmptyBatch("meta_train needs at least one task");
    }
    for (const auto& t : tasks) {
        if (t.batches.empty()) {
            throw EmptyBatch("every task needs at least one mini-batch");
        }
    }
    if (theta0.size() != objective.param_count()) {
        throw ArchMismatch("initial parameters do not match the objective");
    }

    const auto start = std::chrono::steady_clock::now();
    MetaTrainReport report;
    report.mode = cfg.mode;
    report.loss_curve.reserve(cfg.meta_steps);
    std::vector<double> theta = std::move(theta0);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_task(0, tasks.size() - 1);
    const std::size_t p = cfg.tasks_per_step;
    std::vector<std::pair<std::size_t, std::size_t>> picks(p);
    std::vector<std::vector<double>> grads(p);
    std::vector<double> losses(p);

    for (std::size_t step = 0; step < cfg.meta_steps; ++step) {
        for (auto& [task, batch] : picks) {
            task = pick_task(rng);
            std::uniform_int_distribution<std::size_t> pick_batch(0, tasks[task].batches.size() - 1);
            batch = pick_batch(rng);
        }
        parallel_chunks(p, [&](std::size_t k) {
            const MiniBatch& mb = tasks[picks[k].first].batches[picks[k].second];
            const std::vector<double> adapted = adapt_step(objective, theta, mb.train, cfg.inner_step);
            losses[k] = objective.value(adapted, mb.test);
            grads[k] = meta_gradient(objective, theta, mb.train, mb.test, cfg.inner_step, cfg.mode);
        });

        double mean_loss = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
            mean_loss += losses[k];
        }
        mean_loss /= static_cast<double>(p);
        if (!std::isfinite(mean_loss)) {
            throw NonFiniteLoss("meta-training loss became non-finite at step " + std::to_string(step));
        }
        report.loss_curve.push_back(mean_loss);

        const double scale = cfg.meta_step / static_cast<double>(p);
        for (std::size_t k = 0; k < p; ++k) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                theta[i] -= scale * grads[k][i];
            }
        }
        if (!all_finite(theta)) {
            throw NonFiniteLoss("meta-parameters became non-finite at step " + std::to_string(step));
        }
    }

    report.theta = std::move(theta);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::vector<double> test_time_adapt(const net::Objective& objective, std::span<const double> theta,
                                    std::span<const Sample> train, double alpha, std::size_t steps) {
    std::vector<double> current(theta.begin(), theta.end());
    for (std::size_t k = 0; k < steps; ++k) {
        current = adapt_step(objective, current, train, alpha);
    }
    return current;
}

}  // namespace lyapcert::meta
