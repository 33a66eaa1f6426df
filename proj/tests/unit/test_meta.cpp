#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <random>

#include "oracles.hpp"
#include "lyapcert/dynamics.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/meta.hpp"

using namespace lyapcert;
using Catch::Matchers::WithinAbs;

TEST_CASE("closed-form MAML on the scalar quadratic", "[meta]") {
    // l = (theta - a)^2, theta = 1, a = 0, alpha = 0.25:
    // theta' = (1 - 2 alpha) theta, meta loss (1 - 2 alpha)^2 theta^2,
    // second order 2 (1 - 2 alpha)^2 theta, first order 2 (1 - 2 alpha) theta.
    const oracle::ScalarQuadratic q(0.0);
    const std::vector<double> theta{1.0};
    const double alpha = 0.25;
    CHECK_THAT(meta::adapt_step(q, theta, {}, alpha)[0], WithinAbs(0.5, 1e-9));
    CHECK_THAT(meta::meta_objective(q, theta, {}, {}, alpha), WithinAbs(0.25, 1e-9));
    CHECK_THAT(meta::meta_gradient(q, theta, {}, {}, alpha, meta::Mode::SecondOrder)[0], WithinAbs(0.5, 1e-9));
    CHECK_THAT(meta::meta_gradient(q, theta, {}, {}, alpha, meta::Mode::FirstOrder)[0], WithinAbs(1.0, 1e-9));
}

TEST_CASE("second-order meta-gradient matches differences of the meta objective", "[meta]") {
    std::mt19937_64 rng(61);
    const TightenedLossConfig cfg{0.05, 0.02};
    Architecture arch{2, {6, 5}};
    const net::LyapunovObjective obj(arch, cfg);
    const double alpha = 0.01;
    int checked = 0;
    for (int trial = 0; trial < 300 && checked < 15; ++trial) {
        const auto theta = net::init_params(arch, 1300 + trial);
        const auto train = oracle::random_batch(2, 8, rng);
        const auto test = oracle::random_batch(2, 8, rng);
        const auto adapted = meta::adapt_step(obj, theta, train, alpha);
        if (!oracle::away_from_kinks(theta, arch, train, cfg, 1e-2) ||
            !oracle::away_from_kinks(adapted, arch, test, cfg, 1e-2)) {
            continue;
        }
        ++checked;
        const auto exact = meta::meta_gradient(obj, theta, train, test, alpha, meta::Mode::SecondOrder);
        const auto fd = oracle::central_gradient(
            [&](std::span<const double> t) { return meta::meta_objective(obj, t, train, test, alpha); }, theta, 1e-6);
        CHECK(oracle::relative_error(exact, fd) < 1e-3);
    }
    CHECK(checked == 15);
}

TEST_CASE("alpha = 0 reduces the meta-gradient to the plain gradient", "[meta]") {
    std::mt19937_64 rng(71);
    Architecture arch{2, {5}};
    const net::LyapunovObjective obj(arch, {0.05, 0.02});
    const auto theta = net::init_params(arch, 3);
    const auto train = oracle::random_batch(2, 6, rng);
    const auto test = oracle::random_batch(2, 6, rng);
    const auto plain = obj.gradient(theta, test);
    CHECK(meta::meta_gradient(obj, theta, train, test, 0.0, meta::Mode::FirstOrder) == plain);
    CHECK(oracle::relative_error(meta::meta_gradient(obj, theta, train, test, 0.0, meta::Mode::SecondOrder), plain) <
          1e-12);
}

TEST_CASE("meta-training is seeded and independent of the worker count", "[meta]") {
    Architecture arch{2, {6}};
    const net::LyapunovObjective obj(arch, {0.02, 0.02});
    const VectorField f = VectorField::linear(Matrix{{-1.0, 1.0}, {-1.0, -1.0}});
    std::vector<TaskDataset> tasks;
    for (int i = 0; i < 3; ++i) {
        tasks.push_back(build_dataset(f, 1.0, 8, 8, 4, 10 + i));
    }
    meta::MetaConfig cfg;
    cfg.meta_steps = 30;
    cfg.tasks_per_step = 3;
    cfg.seed = 17;
    const auto theta0 = net::init_params(arch, 2);

    setenv("LYAPCERT_THREADS", "1", 1);
    const auto one = meta::meta_train(obj, tasks, theta0, cfg);
    setenv("LYAPCERT_THREADS", "3", 1);
    const auto three = meta::meta_train(obj, tasks, theta0, cfg);
    unsetenv("LYAPCERT_THREADS");
    CHECK(one.theta == three.theta);
    CHECK(one.loss_curve == three.loss_curve);
    CHECK(one.loss_curve.size() == 30);

    CHECK(meta::test_time_adapt(obj, one.theta, tasks[0].batches[0].train, 0.01, 0) == one.theta);
}

TEST_CASE("meta config validation and mode names", "[meta]") {
    meta::MetaConfig cfg;
    cfg.tasks_per_step = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(meta::mode_from_string("first_order") == meta::Mode::FirstOrder);
    CHECK(meta::to_string(meta::Mode::SecondOrder) == "second_order");
    CHECK_THROWS_AS(meta::mode_from_string("third_order"), ConfigError);
}
