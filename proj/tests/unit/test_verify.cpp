#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/verify.hpp"

using namespace lyapcert;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double l1(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::abs(a[i] - b[i]);
    }
    return s;
}

struct Setup {
    GridSpec grid;
    NodeFields fields;
    LipschitzConstants constants;
    ValidityMap map;
};

Setup run(const LyapunovCandidate& v, const VectorField& f, double d, std::size_t n, double core = 0.1) {
    Setup s;
    s.grid = build_grid(d, n, f.dim());
    s.fields = evaluate_nodes(v, f, s.grid);
    s.constants = estimate_lipschitz(s.fields, v, s.grid, {});
    s.map = check_validity(s.fields, s.grid, s.constants, {core});
    return s;
}

}  // namespace

TEST_CASE("grid keeps the lattice points whose cell meets the ball", "[verify]") {
    // n = 3, d = 1, h = 1: every cell of the 3x3 lattice touches the unit disk.
    const GridSpec g3 = build_grid(1.0, 3, 2);
    CHECK(g3.node_count() == 9);
    CHECK(g3.spacing == 1.0);
    CHECK(g3.tau == 1.0);
    // n = 5, d = 1, h = 0.5: the four corner cells [0.75, 1.25]^2 miss the disk.
    const GridSpec g5 = build_grid(1.0, 5, 2);
    CHECK(g5.node_count() == 21);
    const auto o = g5.node(g5.origin);
    CHECK(o[0] == 0.0);
    CHECK(o[1] == 0.0);
    CHECK_THAT(g5.cell_volume(), WithinAbs(0.25, 1e-15));

    CHECK_THROWS_AS(build_grid(1.0, 4, 2), ConfigError);
    CHECK_THROWS_AS(build_grid(0.0, 5, 2), ConfigError);
    CHECK_THROWS_AS(build_grid(1.0, 1001, 3), ConfigError);
}

TEST_CASE("every point of the ball is within tau of its node", "[verify]") {
    for (std::size_t dim : {2u, 3u}) {
        const GridSpec g = build_grid(1.7, 11, dim);
        std::mt19937_64 rng(dim);
        for (int k = 0; k < 5000; ++k) {
            const auto x = uniform_ball_point(dim, 1.7, rng);
            const std::int64_t node = g.nearest(x);
            REQUIRE(node >= 0);
            CHECK(l1(x, g.node(static_cast<std::size_t>(node))) <= g.tau + 1e-12);
        }
    }
}

TEST_CASE("boundary nodes are exactly those missing a face neighbour", "[verify]") {
    const GridSpec g = build_grid(2.0, 21, 2);
    std::size_t boundary = 0;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        bool missing = false;
        for (std::size_t axis = 0; axis < 2; ++axis) {
            for (int dir : {-1, 1}) {
                const std::int64_t j = g.neighbor(i, axis, dir);
                if (j < 0) {
                    missing = true;
                } else {
                    CHECK(g.neighbor(static_cast<std::size_t>(j), axis, -dir) == static_cast<std::int64_t>(i));
                }
            }
        }
        CHECK(static_cast<bool>(g.boundary[i]) == missing);
        boundary += missing ? 1 : 0;
    }
    CHECK_FALSE(g.boundary[g.origin]);
    CHECK(boundary > 0);
}

TEST_CASE("quadratic V on a linear contraction is green outside the core", "[verify]") {
    const VectorField f = VectorField::linear(Matrix{{-1.0, 0.0}, {0.0, -1.0}});
    const auto v = LyapunovCandidate::quadratic(Matrix::identity(2));
    const Setup s = run(v, f, 1.0, 101, 0.3);

    // K_V = 1.2 max ||2u||_inf over the grid nodes.
    double max_inf = 0.0;
    for (std::size_t i = 0; i < s.grid.node_count(); ++i) {
        const auto u = s.grid.node(i);
        max_inf = std::max({max_inf, 2.0 * std::abs(u[0]), 2.0 * std::abs(u[1])});
    }
    CHECK_THAT(s.constants.k_v, WithinRel(1.2 * max_inf, 1e-12));
    CHECK_THAT(s.map.eps_positive, WithinRel(s.constants.k_v * s.grid.tau, 1e-12));

    CHECK(s.map.fully_green());
    std::size_t red_core = 0;
    for (std::size_t i = 0; i < s.grid.node_count(); ++i) {
        const NodeRecord& r = s.map.nodes[i];
        if (!r.green() && i != s.grid.origin) {
            CHECK(r.core);
            ++red_core;
        }
    }
    // The tightened margins cannot hold arbitrarily close to the origin.
    CHECK(red_core > 0);
    CHECK(certify_positive_definite(s.map, s.grid).certified);

    const SoundnessReport snd = positivity_soundness(v, s.map, s.grid, 10000, 3);
    CHECK(snd.violations == 0);
    CHECK(snd.checked + snd.skipped == 10000);
}

TEST_CASE("a coarse grid turns the same candidate red", "[verify]") {
    const VectorField f = VectorField::linear(Matrix{{-1.0, 0.0}, {0.0, -1.0}});
    const Setup s = run(LyapunovCandidate::quadratic(Matrix::identity(2)), f, 1.0, 5, 0.1);
    CHECK_FALSE(s.map.fully_green());
}

TEST_CASE("an affine candidate is not positive definite", "[verify]") {
    const VectorField f = VectorField::linear(Matrix{{-1.0, 0.0}, {0.0, -1.0}});
    const auto v = LyapunovCandidate::affine({1.0, 0.0}, 0.0);
    const Setup s = run(v, f, 1.0, 21);
    const PositivityCertificate pc = certify_positive_definite(s.map, s.grid);
    CHECK_FALSE(pc.certified);
    REQUIRE(pc.witness.has_value());
    CHECK(v.value(s.grid.node(*pc.witness)) <= s.map.eps_positive);
}

TEST_CASE("neural candidate gradient matches the network", "[verify]") {
    Architecture arch{2, {6}};
    const auto theta = net::init_params(arch, 4);
    const auto v = LyapunovCandidate::neural(theta, arch);
    const std::vector<double> x{0.3, -0.7};
    std::vector<double> g(2);
    v.gradient(x, g);
    CHECK(g == net::input_gradient(theta, arch, x));
    CHECK(v.value(x) == net::forward(theta, arch, x));
    // Analytic bound is an l_inf bound on the gradient everywhere.
    CHECK(std::max(std::abs(g[0]), std::abs(g[1])) <= v.analytic_bound(1.0));
}

TEST_CASE("region selection shrinks geometrically", "[verify]") {
    int calls = 0;
    const RegionSelection sel = select_valid_region(2.0, 0.8, 5, [&](double d, int round) {
        ++calls;
        CHECK(round == calls);
        return round == 3;
    });
    CHECK(sel.rounds == 3);
    CHECK_THAT(sel.radius, WithinRel(2.0 * 0.64, 1e-14));
    CHECK_THROWS_AS(select_valid_region(2.0, 0.8, 4, [](double, int) { return false; }), RegionSelectionFailure);
}

TEST_CASE("non-finite dynamics are reported", "[verify]") {
    const VectorField f(2, [](std::span<const double> x, std::span<double> dx) {
        dx[0] = 1.0 / x[0];
        dx[1] = 0.0;
    });
    const GridSpec g = build_grid(1.0, 5, 2);
    CHECK_THROWS_AS(evaluate_nodes(LyapunovCandidate::quadratic(Matrix::identity(2)), f, g), NonFiniteDynamics);
}
