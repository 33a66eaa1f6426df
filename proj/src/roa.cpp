#include "lyapcert/roa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <random>
#include <set>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

namespace {

bool stops_level_set(const ValidityMap& map, const GridSpec& grid, std::size_t i) {
    const NodeRecord& r = map.nodes[i];
    return grid.boundary[i] != 0 || (!r.core && !r.green());
}

void check_same_grid(const ValidityMap& map, const GridSpec& grid) {
    if (map.nodes.size() != grid.node_count()) {
        throw DimensionMismatch("validity map does not belong to this grid");
    }
}

}  // namespace

std::vector<std::size_t> sublevel_component(const ValidityMap& map, const GridSpec& grid, double c) {
    check_same_grid(map, grid);
    std::vector<std::size_t> members;
    if (stops_level_set(map, grid, grid.origin)) {
        return members;
    }
    std::vector<std::uint8_t> seen(grid.node_count(), 0);
    std::deque<std::size_t> queue{grid.origin};
    seen[grid.origin] = 1;
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        members.push_back(i);
        for (std::size_t a = 0; a < grid.dim; ++a) {
            for (int dir : {-1, +1}) {
                const std::int64_t j = grid.neighbor(i, a, dir);
                if (j < 0) {
                    continue;
                }
                const auto ju = static_cast<std::size_t>(j);
                if (seen[ju] || stops_level_set(map, grid, ju) || map.nodes[ju].vbar > c) {
                    continue;
                }
                seen[ju] = 1;
                queue.push_back(ju);
            }
        }
    }
    std::sort(members.begin(), members.end());
    return members;
}

RoaResult largest_level_set(const ValidityMap& map, const GridSpec& grid, const LevelSetOptions& options) {
    check_same_grid(map, grid);
    RoaResult result;
    result.plane = options.plane;
    result.resolution = map.eps_positive;

    // Minimax flood: the cheapest path (by its highest level) from the origin
    // to any stopping node.
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
    std::vector<double> best(grid.node_count(), std::numeric_limits<double>::infinity());
    std::vector<std::uint8_t> done(grid.node_count(), 0);
    best[grid.origin] = 0.0;
    frontier.emplace(0.0, grid.origin);
    double blocking = std::numeric_limits<double>::infinity();
    double reached_max = 0.0;
    while (!frontier.empty()) {
        const auto [level, i] = frontier.top();
        frontier.pop();
        if (done[i]) {
            continue;
        }
        done[i] = 1;
        if (stops_level_set(map, grid, i)) {
            blocking = level;
            break;
        }
        reached_max = std::max(reached_max, level);
        for (std::size_t a = 0; a < grid.dim; ++a) {
            for (int dir : {-1, +1}) {
                const std::int64_t j = grid.neighbor(i, a, dir);
                if (j < 0) {
                    continue;
                }
                const auto ju = static_cast<std::size_t>(j);
                const double next = std::max(level, map.nodes[ju].vbar);
                if (!done[ju] && next < best[ju]) {
                    best[ju] = next;
                    frontier.emplace(next, ju);
                }
            }
        }
    }
    result.blocking_level = std::isfinite(blocking) ? blocking : reached_max;

    const double c = std::isfinite(blocking) ? blocking - result.resolution : reached_max;
    // Outside the red core V decreases, so trajectories starting below c stay
    // below c and reach the level of the highest red core cell.
    double core_top = 0.0;
    for (const NodeRecord& r : map.nodes) {
        if (r.core && !r.green()) {
            core_top = std::max(core_top, r.vbar);
        }
    }
    if (!(c > 0.0) || !(c > core_top + map.eps_positive)) {
        return result;
    }
    result.c = c;
    result.members = sublevel_component(map, grid, c);
    result.area = roa_area(result, grid);
    return result;
}

std::vector<std::pair<std::int32_t, std::int32_t>> project_plane(const RoaResult& result, const GridSpec& grid,
                                                                 Plane axes) {
    if (axes[0] == axes[1] || axes[0] >= grid.dim || axes[1] >= grid.dim) {
        throw BadAxes("projection axes must be two distinct state indices below " + std::to_string(grid.dim));
    }
    std::set<std::pair<std::int32_t, std::int32_t>> shadow;
    for (std::size_t i : result.members) {
        const std::int32_t* k = grid.lattice.data() + i * grid.dim;
        shadow.emplace(k[axes[0]], k[axes[1]]);
    }
    return {shadow.begin(), shadow.end()};
}

double roa_area(const RoaResult& result, const GridSpec& grid) {
    if (result.members.empty()) {
        return 0.0;
    }
    if (grid.dim > 2 && result.plane) {
        return static_cast<double>(project_plane(result, grid, *result.plane).size()) * grid.spacing * grid.spacing;
    }
    return static_cast<double>(result.members.size()) * grid.cell_volume();
}

MonteCarloReport monte_carlo_convergence(const VectorField& f, const RoaResult& result, const GridSpec& grid,
                                         const MonteCarloOptions& options) {
    if (options.samples == 0) {
        throw ConfigError("Monte-Carlo validation needs at least one sample");
    }
    MonteCarloReport report;
    if (result.members.empty()) {
        report.vacuous = true;
        return report;
    }
    const std::size_t n = options.samples;
    const std::size_t dim = grid.dim;
    std::vector<std::vector<double>> starts(n);
    std::vector<double> final_norm(n);
    std::vector<std::uint8_t> diverged(n);
    parallel_chunks(n, [&](std::size_t s) {
        std::mt19937_64 rng(derive_seed(options.seed, s));
        std::uniform_int_distribution<std::size_t> pick(0, result.members.size() - 1);
        std::uniform_real_distribution<double> offset(-0.5 * grid.spacing, 0.5 * grid.spacing);
        const auto node = grid.node(result.members[pick(rng)]);
        std::vector<double> x0(dim);
        for (std::size_t a = 0; a < dim; ++a) {
            x0[a] = node[a] + offset(rng);
        }
        bool div = false;
        const std::vector<double> xt = integrate(f, x0, options.step, options.horizon, &div);
        double norm = 0.0;
        for (double v : xt) {
            norm += v * v;
        }
        final_norm[s] = std::sqrt(norm);
        diverged[s] = div ? 1 : 0;
        starts[s] = std::move(x0);
    });
    report.samples = n;
    for (std::size_t s = 0; s < n; ++s) {
        if (!diverged[s] && final_norm[s] < options.tolerance) {
            ++report.converged;
        } else {
            report.counterexamples.push_back({starts[s], final_norm[s], diverged[s] != 0});
        }
    }
    report.fraction = static_cast<double>(report.converged) / static_cast<double>(n);
    return report;
}

}  // namespace lyapcert
