// lyapcert: meta-trained neural Lyapunov functions, grid certification and
// ROA comparison from the command line.
//
// Exit codes: 0 success, 2 config or artifact error, 3 verification failure
// (red map after the last shrink round), 4 numeric failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lyapcert/baselines.hpp"
#include "lyapcert/config.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"
#include "lyapcert/parallel.hpp"
#include "lyapcert/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lyapcert;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kVerificationFailure = 3;
constexpr int kNumericFailure = 4;

struct Common {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
};

ExperimentConfig resolve(const Common& c) {
    if (c.config_path.empty() == c.preset.empty()) {
        throw ConfigError("exactly one of --config and --preset is required");
    }
    ExperimentConfig config = c.preset.empty() ? load_config(c.config_path) : load_preset(c.preset);
    json j = to_json(config);
    if (c.seed) {
        j["seed"] = *c.seed;
    }
    if (!c.out.empty()) {
        j["output_dir"] = c.out;
    }
    if (!c.mode.empty()) {
        j["meta"]["mode"] = c.mode;
    }
    // Re-parse so overrides go through the same validation and derived seeds.
    return config_from_json(j);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_timing(const fs::path& artifact, double seconds) {
    io::write_json(io::timing_path(artifact), {{"wall_seconds", seconds}, {"workers", worker_count()}});
}

json with_provenance(const ExperimentConfig& config, json body) {
    body["provenance"] = io::provenance(config);
    return body;
}

fs::path out_dir(const ExperimentConfig& config) { return fs::path(config.output_dir); }

Plane plot_plane(const ExperimentConfig& config) { return config.roa.plane.value_or(Plane{0, 1}); }

int cmd_train_meta(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const MetaRun run = run_meta_training(config);
    const fs::path dir = out_dir(config);

    io::Checkpoint ckpt;
    ckpt.kind = "meta";
    ckpt.arch = config.arch;
    ckpt.theta = run.report.theta;
    ckpt.radius = run.radius;
    ckpt.region_selected = run.selected;
    ckpt.samples_used = config.data.tasks * config.data.batches_per_task * (config.data.train_size + config.data.test_size);
    ckpt.steps_used = config.meta.meta_steps;
    ckpt.config_hash = config_hash(config);
    ckpt.seed = config.seed;
    io::save_checkpoint(dir / "meta_checkpoint.json", ckpt);
    io::write_json(dir / "meta_report.json", with_provenance(config, io::meta_run_json(run)));
    io::write_atomic(dir / "meta_loss.csv", "# config_hash=" + config_hash(config) + " seed=" +
                                                std::to_string(config.seed) + "\n" +
                                                io::loss_curve_csv(run.report.loss_curve));
    write_timing(dir / "meta_report.json", seconds_since(t0));

    std::printf("meta-NLF radius %.4g after %d round(s), region %s\n", run.radius, run.rounds,
                run.selected ? "selected" : "NOT selected");
    return run.selected ? kOk : kVerificationFailure;
}

int cmd_adapt(const ExperimentConfig& config, const std::string& checkpoint, std::optional<std::size_t> steps,
              std::optional<std::size_t> samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = out_dir(config);
    const fs::path src = checkpoint.empty() ? dir / "meta_checkpoint.json" : fs::path(checkpoint);
    const io::Checkpoint meta_ckpt = io::load_checkpoint(src, config.arch);
    const std::size_t k = steps.value_or(config.meta.test_steps);
    const std::size_t n = samples.value_or(config.data.adapt_samples);

    const ClosedLoop test = close_loop(config.system.model, config.system.test);
    io::Checkpoint out = meta_ckpt;
    out.kind = "adapted";
    out.adapted_to = config.system.test;
    if (k == 0) {
        out.samples_used = 0;
        out.steps_used = 0;
    } else {
        const Adaptation a = adapt_to_system(config, meta_ckpt.theta, test.field, meta_ckpt.radius, n, k,
                                             stream_seed(config, SeedStream::TestData));
        out.theta = a.theta;
        out.samples_used = a.samples_used;
        out.steps_used = a.steps_used;
    }
    out.config_hash = config_hash(config);
    out.seed = config.seed;
    io::save_checkpoint(dir / "adapted_checkpoint.json", out);
    write_timing(dir / "adapted_checkpoint.json", seconds_since(t0));
    std::printf("adapted with %zu samples / %zu steps\n", out.samples_used, out.steps_used);
    return kOk;
}

struct Loaded {
    io::Checkpoint ckpt;
    ClosedLoop loop;
    Certification cert;
};

Loaded load_and_certify(const ExperimentConfig& config, const std::string& checkpoint,
                        std::optional<double> radius) {
    const fs::path dir = out_dir(config);
    const fs::path src = checkpoint.empty() ? dir / "adapted_checkpoint.json" : fs::path(checkpoint);
    Loaded l{io::load_checkpoint(src, config.arch), close_loop(config.system.model, config.system.test), {}};
    const double d = radius.value_or(l.ckpt.radius > 0.0 ? l.ckpt.radius : config.verify.d0);
    l.cert = certify(LyapunovCandidate::neural(l.ckpt.theta, config.arch), l.loop.field, d, config);
    return l;
}

int cmd_verify(const ExperimentConfig& config, const std::string& checkpoint, std::optional<double> radius) {
    const auto t0 = std::chrono::steady_clock::now();
    const Loaded l = load_and_certify(config, checkpoint, radius);
    const fs::path dir = out_dir(config);
    io::write_json(dir / "verify.json", with_provenance(config, io::certification_json(l.cert)));
    const Plane plane = plot_plane(config);
    io::write_atomic(dir / "validity.csv", "# config_hash=" + config_hash(config) + " seed=" +
                                               std::to_string(config.seed) + "\n" +
                                               io::validity_csv(l.cert, plane));
    io::SvgOptions opt;
    opt.plane = plane;
    opt.field = &l.loop.field;
    io::write_atomic(dir / "validity.svg", io::render_svg({{&l.cert, "adapted", "#1f4e9c"}}, opt));
    write_timing(dir / "verify.json", seconds_since(t0));
    const bool green = l.cert.map.fully_green();
    std::printf("radius %.4g: %zu/%zu nodes green, map %s, positivity %s\n", l.cert.grid.radius,
                l.cert.map.green_count(), l.cert.map.nodes.size(), green ? "fully green" : "has red nodes",
                l.cert.positivity.certified ? "certified" : "not certified");
    return green ? kOk : kVerificationFailure;
}

MonteCarloOptions mc_options(const ExperimentConfig& config, std::uint64_t stream) {
    MonteCarloOptions mc;
    mc.samples = config.roa.samples;
    mc.step = config.roa.step;
    mc.horizon = config.roa.horizon;
    mc.tolerance = config.roa.tolerance;
    mc.seed = stream_seed(config, SeedStream::MonteCarlo, stream);
    return mc;
}

int cmd_roa(const ExperimentConfig& config, const std::string& checkpoint, std::optional<double> radius) {
    const auto t0 = std::chrono::steady_clock::now();
    const Loaded l = load_and_certify(config, checkpoint, radius);
    const MonteCarloReport mc = monte_carlo_convergence(l.loop.field, l.cert.roa, l.cert.grid, mc_options(config, 100));
    const fs::path dir = out_dir(config);
    json body = io::certification_json(l.cert);
    body["validation"] = io::monte_carlo_json(mc);
    io::write_json(dir / "roa.json", with_provenance(config, body));
    io::SvgOptions opt;
    opt.plane = plot_plane(config);
    opt.heatmap = false;
    opt.field = &l.loop.field;
    io::write_atomic(dir / "roa.svg", io::render_svg({{&l.cert, "adapted", "#1f4e9c"}}, opt));
    write_timing(dir / "roa.json", seconds_since(t0));
    std::printf("c = %.6g, area %.6g, Monte-Carlo %zu/%zu converged\n", l.cert.roa.c, l.cert.roa.area, mc.converged,
                mc.samples);
    return kOk;
}

int cmd_simulate(const ExperimentConfig& config, const std::string& checkpoint, std::size_t count,
                 const std::vector<double>& x0) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = out_dir(config);
    const ClosedLoop loop = close_loop(config.system.model, config.system.test);
    std::vector<std::vector<double>> starts;
    std::optional<Loaded> l;
    if (!x0.empty()) {
        if (x0.size() != loop.field.dim()) {
            throw ConfigError("--x0 needs " + std::to_string(loop.field.dim()) + " values");
        }
        starts.push_back(x0);
        // The ROA overlay is optional here; draw it when a checkpoint exists.
        if (!checkpoint.empty() || fs::exists(out_dir(config) / "adapted_checkpoint.json")) {
            l = load_and_certify(config, checkpoint, std::nullopt);
        }
    } else {
        // Starts drawn from the certified ROA, as in the Monte-Carlo check.
        l = load_and_certify(config, checkpoint, std::nullopt);
        MonteCarloOptions mc = mc_options(config, 200);
        mc.samples = count;
        const MonteCarloReport rep = monte_carlo_convergence(loop.field, l->cert.roa, l->cert.grid, mc);
        if (rep.vacuous) {
            throw ConfigError("the certified ROA is empty; pass --x0 to simulate from a given state");
        }
        std::mt19937_64 rng(stream_seed(config, SeedStream::MonteCarlo, 201));
        std::uniform_int_distribution<std::size_t> pick(0, l->cert.roa.members.size() - 1);
        for (std::size_t s = 0; s < count; ++s) {
            const auto node = l->cert.grid.node(l->cert.roa.members[pick(rng)]);
            starts.emplace_back(node.begin(), node.end());
        }
    }
    std::vector<Trajectory> runs;
    json finals = json::array();
    std::size_t converged = 0;
    for (const auto& s : starts) {
        runs.push_back(simulate(loop.field, s, config.roa.step, config.roa.horizon));
        double norm = 0.0;
        for (double v : runs.back().states.back()) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        const bool ok = !runs.back().diverged && norm < config.roa.tolerance;
        converged += ok ? 1 : 0;
        finals.push_back({{"start", s}, {"final_norm", norm}, {"converged", ok}});
    }
    io::write_json(dir / "simulate.json", with_provenance(config, {{"runs", finals}, {"converged", converged}}));
    io::write_atomic(dir / "trajectories.csv", io::trajectories_csv(runs));
    if (l) {
        io::SvgOptions opt;
        opt.plane = plot_plane(config);
        opt.heatmap = false;
        opt.trajectories = runs;
        io::write_atomic(dir / "simulate.svg", io::render_svg({{&l->cert, "adapted", "#1f4e9c"}}, opt));
    }
    write_timing(dir / "simulate.json", seconds_since(t0));
    std::printf("%zu/%zu trajectories reached ||x|| < %.3g\n", converged, runs.size(), config.roa.tolerance);
    return kOk;
}

int cmd_compare(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const ComparisonTable table = compare(config);
    const fs::path dir = out_dir(config);
    io::write_json(dir / "compare.json", io::comparison_json(table, config));
    io::write_atomic(dir / "compare.csv", io::comparison_csv(table, config));

    std::vector<io::SvgLayer> layers;
    static const char* colors[] = {"#1b7837", "#1f4e9c", "#b2182b", "#e08214"};
    json timing = {{"wall_seconds", seconds_since(t0)}};
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const BaselineReport& r = table.rows[i];
        timing["methods"][to_string(r.method)] = r.wall_seconds;
        if (!r.failure) {
            layers.push_back({&r.cert, to_string(r.method), colors[i % 4]});
        }
    }
    if (!layers.empty()) {
        io::SvgOptions opt;
        opt.plane = plot_plane(config);
        opt.heatmap = false;
        io::write_atomic(dir / "compare.svg", io::render_svg(layers, opt));
    }
    io::write_json(io::timing_path(dir / "compare.json"), timing);

    std::printf("%-9s %10s %8s %9s %6s\n", "method", "area", "c", "radius", "sound");
    for (const BaselineReport& r : table.rows) {
        if (r.failure) {
            std::printf("%-9s failed: %s\n", to_string(r.method).c_str(), r.failure->c_str());
            continue;
        }
        std::printf("%-9s %10.4f %8.4g %9.4g %6s\n", to_string(r.method).c_str(), r.area(), r.roa().c, r.radius,
                    r.sound() ? "yes" : "no");
    }
    return kOk;
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "experiment config (JSON)");
    sub->add_option("--preset", c.preset, "shipped preset name");
    sub->add_option("--seed", c.seed, "override the master seed");
    sub->add_option("--out", c.out, "override the output directory");
    sub->add_option("--mode", c.mode, "meta-gradient mode")->check(CLI::IsMember({"first_order", "second_order"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-trained neural Lyapunov functions with grid certification"};
    app.require_subcommand(1);
    Common common;
    std::string checkpoint;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> samples;
    std::optional<double> radius;
    std::size_t count = 20;
    std::vector<double> x0;
    bool list_presets = false;

    auto* train = app.add_subcommand("train-meta", "meta-train inside the valid-region loop");
    auto* adapt = app.add_subcommand("adapt", "adapt a meta checkpoint to the test system");
    auto* verify = app.add_subcommand("verify", "grid-certify a checkpoint on the test system");
    auto* roa = app.add_subcommand("roa", "largest certified level set plus Monte-Carlo check");
    auto* sim = app.add_subcommand("simulate", "RK4 rollouts of the test system");
    auto* cmp = app.add_subcommand("compare", "run every method and tabulate ROA areas");
    auto* presets = app.add_subcommand("presets", "list shipped presets");
    presets->add_flag("--list", list_presets);
    for (auto* sub : {train, adapt, verify, roa, sim, cmp}) {
        add_common(sub, common);
    }
    adapt->add_option("--checkpoint", checkpoint, "meta checkpoint (default <out>/meta_checkpoint.json)");
    adapt->add_option("--steps", steps, "adaptation steps k");
    adapt->add_option("--samples", samples, "test-system samples");
    for (auto* sub : {verify, roa, sim}) {
        sub->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/adapted_checkpoint.json)");
    }
    for (auto* sub : {verify, roa}) {
        sub->add_option("--radius", radius, "verification radius (default: the checkpoint's)");
    }
    sim->add_option("--count", count, "rollouts drawn from the certified ROA")->check(CLI::PositiveNumber);
    sim->add_option("--x0", x0, "explicit start state")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (presets->parsed()) {
            for (const auto& name : preset_names()) {
                std::printf("%s\n", name.c_str());
            }
            return kOk;
        }
        const ExperimentConfig config = resolve(common);
        if (train->parsed()) {
            return cmd_train_meta(config);
        }
        if (adapt->parsed()) {
            return cmd_adapt(config, checkpoint, steps, samples);
        }
        if (verify->parsed()) {
            return cmd_verify(config, checkpoint, radius);
        }
        if (roa->parsed()) {
            return cmd_roa(config, checkpoint, radius);
        }
        if (sim->parsed()) {
            return cmd_simulate(config, checkpoint, count, x0);
        }
        return cmd_compare(config);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfigError;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumericFailure;
    } catch (const RegionSelectionFailure& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kVerificationFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfigError;
    }
}
