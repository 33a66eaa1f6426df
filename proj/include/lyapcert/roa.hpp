#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lyapcert/vector_field.hpp"
#include "lyapcert/verify.hpp"

namespace lyapcert {

using Plane = std::array<std::size_t, 2>;

/// Certified region of attraction: the origin's face-connected component of
/// the grid sublevel set {V(u) - V(0) <= c}.
struct RoaResult {
    double c = 0.0;
    double blocking_level = 0.0;  // lowest level at which the flood from the origin meets a bad node
    double resolution = 0.0;      // level margin given up for the grid, K_V tau
    std::vector<std::size_t> members;  // sorted node indices, empty when nothing is certified
    double area = 0.0;
    std::optional<Plane> plane;

    bool empty() const { return members.empty(); }
};

struct LevelSetOptions {
    std::optional<Plane> plane;  // projection used for the area of dim > 2 results
};

/// Nodes that stop the sublevel set are non-core red nodes and the outer node
/// layer of D. The origin is flooded by rising level; the first stopping node
/// reached fixes blocking_level and c = blocking_level - eps_positive, so every
/// cell holding a point with V - V(0) <= c belongs to a node below the block. The
/// result is empty (c = 0, area 0) unless c > 0 and every red core node sits
/// below c - eps_positive.
RoaResult largest_level_set(const ValidityMap& map, const GridSpec& grid, const LevelSetOptions& options = {});

/// Members of the origin's component of {V(u) - V(0) <= c}, avoiding the
/// stopping nodes; exposed for the nesting property.
std::vector<std::size_t> sublevel_component(const ValidityMap& map, const GridSpec& grid, double c);

/// |members| * h^dim, or the projected shadow cell count * h^2 when dim > 2
/// and the result carries a plane.
double roa_area(const RoaResult& result, const GridSpec& grid);

/// Distinct (lattice_i, lattice_j) index pairs covered by member cells. Throws
/// BadAxes unless i != j and both are below the grid dimension.
std::vector<std::pair<std::int32_t, std::int32_t>> project_plane(const RoaResult& result, const GridSpec& grid,
                                                                 Plane axes);

struct MonteCarloOptions {
    std::size_t samples = 1000;
    double step = 0.01;
    double horizon = 20.0;
    double tolerance = 1e-2;
    std::uint64_t seed = 0;
};

struct Counterexample {
    std::vector<double> start;
    double final_norm = 0.0;
    bool diverged = false;
};

struct MonteCarloReport {
    double fraction = 1.0;
    bool vacuous = false;  // empty ROA; fraction is 1 by convention
    std::size_t samples = 0;
    std::size_t converged = 0;
    std::vector<Counterexample> counterexamples;
};

/// Starts drawn uniformly from the union of member cells, integrated with RK4;
/// a run converges when ||x(horizon)||_2 < tolerance. Sample i uses a seed
/// derived from (seed, i), so the result is independent of the thread count.
MonteCarloReport monte_carlo_convergence(const VectorField& f, const RoaResult& result, const GridSpec& grid,
                                         const MonteCarloOptions& options);

}  // namespace lyapcert
