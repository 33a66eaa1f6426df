#include "lyapcert/baselines.hpp"

#include <chrono>

#include "lyapcert/control.hpp"
#include "lyapcert/errors.hpp"

namespace lyapcert {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct NlfTraining {
    std::vector<double> theta;
    double radius = 0.0;
    bool selected = false;
    int rounds = 0;
    std::size_t samples = 0;
    std::size_t steps = 0;
};

// Gradient-descent NLF training on one system inside the shrinking loop; the
// map is checked on the same system the data came from.
NlfTraining train_single_system(const ExperimentConfig& config, const VectorField& f, std::uint64_t data_seed,
                                std::uint64_t init_seed, std::uint64_t order_seed) {
    NlfTraining out;
    const std::vector<double> theta0 = net::init_params(config.arch, init_seed);
    auto round = [&](double d, int) {
        const net::LyapunovObjective objective(config.arch, config.loss.at_radius(d));
        const std::vector<Sample> data = sample_ball(f, d, config.baselines.nlf_samples, data_seed);
        const GdReport gd = gradient_descent(objective, data, theta0, config.baselines.nlf_steps,
                                             config.baselines.nlf_batch, config.baselines.nlf_step_size, order_seed);
        out.theta = gd.theta;
        out.radius = d;
        out.samples = data.size();
        out.steps = gd.steps;
        const Certification cert = certify(LyapunovCandidate::neural(out.theta, config.arch), f, d, config);
        return cert.map.fully_green();
    };
    try {
        const RegionSelection sel =
            select_valid_region(config.verify.d0, config.verify.shrink_factor, config.verify.max_rounds, round);
        out.selected = true;
        out.rounds = sel.rounds;
    } catch (const RegionSelectionFailure& e) {
        out.selected = false;
        out.rounds = e.rounds();
    }
    return out;
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::QlfTs:
            return "QLF_TS";
        case Method::NlfTs:
            return "NLF_TS";
        case Method::TNlf:
            return "T_NLF";
        case Method::MetaNlf:
            return "META_NLF";
    }
    return "";
}

bool BaselineReport::sound() const {
    return !failure && !cert.roa.empty() && validation && validation->fraction == 1.0;
}

BaselineReport qlf_ts(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    BaselineReport report;
    report.method = Method::QlfTs;
    const ClosedLoop loop = close_loop(config.system.model, config.system.test);
    const std::vector<double> origin(loop.field.dim(), 0.0);
    const Matrix a = control::linearize(loop.field, origin);
    if (!control::is_hurwitz(a)) {
        throw NotHurwitz("closed-loop linearization of the test system is not Hurwitz");
    }
    const Matrix p = control::solve_lyapunov(a, Matrix::identity(a.rows()));
    report.radius = config.verify.d0;
    report.cert = certify(LyapunovCandidate::quadratic(p), loop.field, report.radius, config);
    report.wall_seconds = seconds_since(start);
    return report;
}

BaselineReport nlf_ts(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    BaselineReport report;
    report.method = Method::NlfTs;
    const ClosedLoop loop = close_loop(config.system.model, config.system.test);
    const NlfTraining trained =
        train_single_system(config, loop.field, stream_seed(config, SeedStream::NlfData),
                            stream_seed(config, SeedStream::NlfInit), stream_seed(config, SeedStream::NlfOrder));
    report.theta = trained.theta;
    report.radius = trained.radius;
    report.region_selected = trained.selected;
    report.rounds = trained.rounds;
    report.test_samples_used = trained.samples;
    report.test_steps_used = trained.steps;
    report.cert = certify(LyapunovCandidate::neural(report.theta, config.arch), loop.field, report.radius, config);
    report.wall_seconds = seconds_since(start);
    return report;
}

BaselineReport t_nlf(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    BaselineReport report;
    report.method = Method::TNlf;
    report.reads_nominal = true;
    const ClosedLoop nominal = close_loop(config.system.model, config.system.nominal);
    const NlfTraining trained = train_single_system(
        config, nominal.field, stream_seed(config, SeedStream::NominalData), stream_seed(config, SeedStream::NlfInit, 1),
        stream_seed(config, SeedStream::NlfOrder, 1));
    report.train_samples_used = trained.samples;
    report.gradient_steps_used = trained.steps;
    report.radius = trained.radius;
    report.region_selected = trained.selected;
    report.rounds = trained.rounds;

    const ClosedLoop test = close_loop(config.system.model, config.system.test);
    const Adaptation adapted =
        adapt_to_system(config, trained.theta, test.field, report.radius, config.baselines.tnlf_samples,
                        config.baselines.tnlf_steps, stream_seed(config, SeedStream::TestData, 1));
    report.theta = adapted.theta;
    report.test_samples_used = adapted.samples_used;
    report.test_steps_used = adapted.steps_used;
    report.cert = certify(LyapunovCandidate::neural(report.theta, config.arch), test.field, report.radius, config);
    report.wall_seconds = seconds_since(start);
    return report;
}

BaselineReport meta_nlf(const ExperimentConfig& config, const MetaRun* run) {
    const auto start = std::chrono::steady_clock::now();
    BaselineReport report;
    report.method = Method::MetaNlf;
    report.reads_nominal = true;
    MetaRun local;
    if (run == nullptr) {
        local = run_meta_training(config);
        run = &local;
    }
    report.radius = run->radius;
    report.region_selected = run->selected;
    report.rounds = run->rounds;
    report.train_samples_used =
        config.data.tasks * config.data.batches_per_task * (config.data.train_size + config.data.test_size);
    report.gradient_steps_used = config.meta.meta_steps;

    const ClosedLoop test = close_loop(config.system.model, config.system.test);
    const Adaptation adapted = adapt_to_system(config, run->report.theta, test.field, report.radius,
                                               config.data.adapt_samples, config.meta.test_steps,
                                               stream_seed(config, SeedStream::TestData));
    report.theta = adapted.theta;
    report.test_samples_used = adapted.samples_used;
    report.test_steps_used = adapted.steps_used;
    report.cert = certify(LyapunovCandidate::neural(report.theta, config.arch), test.field, report.radius, config);
    report.wall_seconds = seconds_since(start) + (run == &local ? 0.0 : run->wall_seconds);
    return report;
}

void validate_roa(BaselineReport& report, const ExperimentConfig& config, std::uint64_t stream) {
    const ClosedLoop test = close_loop(config.system.model, config.system.test);
    MonteCarloOptions mc;
    mc.samples = config.roa.samples;
    mc.step = config.roa.step;
    mc.horizon = config.roa.horizon;
    mc.tolerance = config.roa.tolerance;
    mc.seed = stream_seed(config, SeedStream::MonteCarlo, stream);
    report.validation = monte_carlo_convergence(test.field, report.cert.roa, report.cert.grid, mc);
}

ComparisonTable compare(const ExperimentConfig& config, const MetaRun* run) {
    ComparisonTable table;
    table.system = to_string(config.system.model.id);
    table.preset = config.name;
    table.nominal = config.system.nominal;
    table.test = config.system.test;
    table.verification_hash = verification_hash(config);
    for (Method method : kAllMethods) {
        BaselineReport report;
        report.method = method;
        try {
            switch (method) {
                case Method::QlfTs:
                    report = qlf_ts(config);
                    break;
                case Method::NlfTs:
                    report = nlf_ts(config);
                    break;
                case Method::TNlf:
                    report = t_nlf(config);
                    break;
                case Method::MetaNlf:
                    report = meta_nlf(config, run);
                    break;
            }
            validate_roa(report, config, static_cast<std::uint64_t>(method));
        } catch (const Error& e) {
            report.failure = e.what();
        }
        table.rows.push_back(std::move(report));
    }
    return table;
}

}  // namespace lyapcert
