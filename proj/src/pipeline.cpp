#include "lyapcert/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "lyapcert/errors.hpp"

namespace lyapcert {

Certification certify(const LyapunovCandidate& v, const VectorField& f, double radius,
                      const ExperimentConfig& config) {
    Certification out;
    out.grid = build_grid(radius, config.verify.nodes_per_axis, f.dim());
    const NodeFields fields = evaluate_nodes(v, f, out.grid);
    out.constants = estimate_lipschitz(fields, v, out.grid, config.verify.lipschitz);
    out.map = check_validity(fields, out.grid, out.constants, {config.verify.core_fraction});
    out.positivity = certify_positive_definite(out.map, out.grid);
    LevelSetOptions level;
    level.plane = config.roa.plane;
    out.roa = largest_level_set(out.map, out.grid, level);
    return out;
}

TaskFamily training_tasks(const ExperimentConfig& config) {
    TaskFamily family;
    family.params = sample_tasks(config.system.nominal, config.system.variance, config.data.tasks,
                                 stream_seed(config, SeedStream::Tasks));
    family.loops.reserve(family.params.size());
    for (const auto& p : family.params) {
        family.loops.push_back(close_loop(config.system.model, p));
    }
    return family;
}

GdReport gradient_descent(const net::Objective& objective, std::span<const Sample> samples,
                          std::vector<double> theta, std::size_t steps, std::size_t batch_size, double step_size,
                          std::uint64_t seed) {
    if (samples.empty()) {
        throw EmptyBatch("gradient descent needs samples");
    }
    batch_size = std::min(batch_size, samples.size());
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    std::vector<Sample> batch(batch_size);

    GdReport report;
    report.loss_curve.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        if (cursor + batch_size > order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        for (std::size_t b = 0; b < batch_size; ++b) {
            batch[b] = samples[order[cursor + b]];
        }
        cursor += batch_size;
        const double loss = objective.value(theta, batch);
        if (!std::isfinite(loss)) {
            throw NonFiniteLoss("training loss became non-finite at step " + std::to_string(step));
        }
        report.loss_curve.push_back(loss);
        const std::vector<double> g = objective.gradient(theta, batch);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            theta[i] -= step_size * g[i];
        }
    }
    report.steps = steps;
    report.theta = std::move(theta);
    return report;
}

Adaptation adapt_to_system(const ExperimentConfig& config, std::span<const double> theta, const VectorField& f,
                           double radius, std::size_t samples, std::size_t steps, std::uint64_t seed) {
    const net::LyapunovObjective objective(config.arch, config.loss.at_radius(radius));
    const std::vector<Sample> data = sample_ball(f, radius, samples, seed);
    Adaptation out;
    out.samples_used = data.size();
    out.steps_used = steps;
    out.loss_before = objective.value(theta, data);
    out.theta = meta::test_time_adapt(objective, theta, data, config.meta.inner_step, steps);
    out.loss_after = objective.value(out.theta, data);
    return out;
}

MetaRun run_meta_training(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    MetaRun run;
    run.tasks = training_tasks(config);
    const std::vector<double> theta0 = net::init_params(config.arch, stream_seed(config, SeedStream::Init));

    auto round = [&](double d, int) {
        const net::LyapunovObjective objective(config.arch, config.loss.at_radius(d));
        std::vector<TaskDataset> datasets;
        datasets.reserve(run.tasks.loops.size());
        for (std::size_t i = 0; i < run.tasks.loops.size(); ++i) {
            datasets.push_back(build_dataset(run.tasks.loops[i].field, d, config.data.train_size, config.data.test_size,
                                             config.data.batches_per_task,
                                             stream_seed(config, SeedStream::TaskData, i)));
        }
        run.report = meta::meta_train(objective, datasets, theta0, config.meta);

        RoundLog entry;
        entry.radius = d;
        entry.final_meta_loss = run.report.loss_curve.empty() ? 0.0 : run.report.loss_curve.back();
        for (std::size_t i = 0; i < run.tasks.loops.size(); ++i) {
            const Adaptation adapted =
                adapt_to_system(config, run.report.theta, run.tasks.loops[i].field, d, config.data.adapt_samples,
                                config.meta.test_steps, stream_seed(config, SeedStream::AdaptData, i));
            const Certification cert = certify(LyapunovCandidate::neural(adapted.theta, config.arch),
                                               run.tasks.loops[i].field, d, config);
            if (cert.map.fully_green()) {
                ++entry.green_tasks;
            }
            const double frac =
                static_cast<double>(cert.map.green_count()) / static_cast<double>(cert.map.nodes.size());
            entry.worst_green_fraction = std::min(entry.worst_green_fraction, frac);
        }
        run.log.push_back(entry);
        run.radius = d;
        return entry.green_tasks == run.tasks.loops.size();
    };

    try {
        const RegionSelection sel =
            select_valid_region(config.verify.d0, config.verify.shrink_factor, config.verify.max_rounds, round);
        run.selected = true;
        run.rounds = sel.rounds;
        run.radius = sel.radius;
    } catch (const RegionSelectionFailure& e) {
        run.selected = false;
        run.rounds = e.rounds();
    }
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

}  // namespace lyapcert
