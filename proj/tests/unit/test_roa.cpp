#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "lyapcert/errors.hpp"
#include "lyapcert/roa.hpp"
#include "lyapcert/verify.hpp"

using namespace lyapcert;
using Catch::Matchers::WithinAbs;

namespace {

struct Setup {
    GridSpec grid;
    ValidityMap map;
};

Setup certify(const Matrix& p, const VectorField& f, double d, std::size_t n, double core) {
    const auto v = LyapunovCandidate::quadratic(p);
    Setup s;
    s.grid = build_grid(d, n, f.dim());
    const NodeFields fields = evaluate_nodes(v, f, s.grid);
    s.map = check_validity(fields, s.grid, estimate_lipschitz(fields, v, s.grid, {}), {core});
    return s;
}

const VectorField kContraction2 = VectorField::linear(Matrix{{-1.0, 0.0}, {0.0, -1.0}});

}  // namespace

TEST_CASE("disk sublevel set of |x|^2 has area pi c", "[roa]") {
    const Setup s = certify(Matrix::identity(2), kContraction2, 1.0, 201, 0.3);
    const RoaResult r = largest_level_set(s.map, s.grid);
    REQUIRE_FALSE(r.empty());
    CHECK(r.c > 0.0);
    CHECK(r.c < 1.0);
    CHECK_THAT(r.blocking_level - r.c, WithinAbs(s.map.eps_positive, 1e-12));
    // Cells of nodes with |u|^2 <= c cover the disk of radius sqrt(c) up to one
    // ring of cells of width ~h along its perimeter.
    const double h = s.grid.spacing;
    const double radius = std::sqrt(r.c);
    CHECK(std::abs(r.area - std::numbers::pi * r.c) <= 2.0 * std::numbers::pi * radius * h * 1.5);
    CHECK(r.area == r.members.size() * s.grid.cell_volume());
    for (std::size_t m : r.members) {
        CHECK(s.map.nodes[m].vbar <= r.c);
    }
}

TEST_CASE("sublevel components are nested in the level", "[roa]") {
    const Matrix p{{1.0, 0.3}, {0.3, 2.0}};
    const Setup s = certify(p, kContraction2, 1.0, 81, 0.3);
    std::vector<std::size_t> prev;
    for (double c : {0.02, 0.05, 0.1, 0.2, 0.4}) {
        const auto now = sublevel_component(s.map, s.grid, c);
        CHECK(std::includes(now.begin(), now.end(), prev.begin(), prev.end()));
        CHECK(now.size() >= prev.size());
        prev = now;
    }
}

TEST_CASE("a red node outside the core caps the level", "[roa]") {
    // x' = -x + x^3 loses decrease at |x| = 1 in each axis.
    const VectorField f(2, [](std::span<const double> x, std::span<double> dx) {
        dx[0] = -x[0] + x[0] * x[0] * x[0];
        dx[1] = -x[1] + x[1] * x[1] * x[1];
    });
    const Setup s = certify(Matrix::identity(2), f, 1.2, 401, 0.3);
    const RoaResult r = largest_level_set(s.map, s.grid);
    REQUIRE_FALSE(r.empty());
    CHECK(r.c < 1.0);
    for (std::size_t m : r.members) {
        CHECK((s.map.nodes[m].green() || s.map.nodes[m].core || m == s.grid.origin));
    }
}

TEST_CASE("projection to a plane", "[roa]") {
    const VectorField f3 = VectorField::linear(Matrix{{-1.0, 0.0, 0.0}, {0.0, -1.0, 0.0}, {0.0, 0.0, -1.0}});
    const Setup s = certify(Matrix::identity(3), f3, 1.0, 61, 0.6);
    LevelSetOptions opts;
    opts.plane = Plane{0, 2};
    const RoaResult r = largest_level_set(s.map, s.grid, opts);
    REQUIRE_FALSE(r.empty());
    const auto shadow = project_plane(r, s.grid, {0, 2});
    CHECK_THAT(r.area, WithinAbs(shadow.size() * s.grid.spacing * s.grid.spacing, 1e-12));
    CHECK(shadow.size() < r.members.size());
    CHECK_THROWS_AS(project_plane(r, s.grid, {1, 1}), BadAxes);
    CHECK_THROWS_AS(project_plane(r, s.grid, {0, 3}), BadAxes);
}

TEST_CASE("Monte-Carlo validation", "[roa]") {
    const Setup s = certify(Matrix::identity(2), kContraction2, 1.0, 101, 0.3);
    const RoaResult r = largest_level_set(s.map, s.grid);
    REQUIRE_FALSE(r.empty());
    MonteCarloOptions opts;
    opts.samples = 200;
    opts.horizon = 10.0;
    opts.seed = 9;

    const MonteCarloReport ok = monte_carlo_convergence(kContraction2, r, s.grid, opts);
    CHECK(ok.fraction == 1.0);
    CHECK(ok.converged == 200);
    CHECK_FALSE(ok.vacuous);

    const VectorField unstable = VectorField::linear(Matrix{{0.5, 0.0}, {0.0, -1.0}});
    const MonteCarloReport bad = monte_carlo_convergence(unstable, r, s.grid, opts);
    CHECK(bad.fraction < 1.0);
    CHECK_FALSE(bad.counterexamples.empty());

    const MonteCarloReport empty = monte_carlo_convergence(kContraction2, RoaResult{}, s.grid, opts);
    CHECK(empty.vacuous);
    CHECK(empty.fraction == 1.0);

    setenv("LYAPCERT_THREADS", "1", 1);
    const MonteCarloReport one = monte_carlo_convergence(unstable, r, s.grid, opts);
    setenv("LYAPCERT_THREADS", "4", 1);
    const MonteCarloReport four = monte_carlo_convergence(unstable, r, s.grid, opts);
    unsetenv("LYAPCERT_THREADS");
    CHECK(one.converged == four.converged);
    REQUIRE(one.counterexamples.size() == four.counterexamples.size());
    for (std::size_t i = 0; i < one.counterexamples.size(); ++i) {
        CHECK(one.counterexamples[i].start == four.counterexamples[i].start);
    }
}
