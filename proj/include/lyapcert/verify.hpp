#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyapcert/matrix.hpp"
#include "lyapcert/net.hpp"
#include "lyapcert/vector_field.hpp"

namespace lyapcert {

/// Uniform lattice over [-d, d]^dim restricted to the ball ||x||_2 <= d.
///
/// A lattice point is kept when its cell (the l_inf box of half-width h/2
/// around it) meets the ball, so every x in the ball lies in the cell of a kept
/// node and ||x - [x]||_1 <= tau = dim * h / 2.
struct GridSpec {
    double radius = 0.0;
    std::size_t dim = 0;
    std::size_t nodes_per_axis = 0;
    double spacing = 0.0;  // h
    double tau = 0.0;

    std::vector<double> coords;               // node_count x dim, row-major
    std::vector<std::int32_t> lattice;        // node_count x dim lattice indices in [0, n)
    std::vector<std::int32_t> node_of_point;  // lattice point -> node, -1 when excluded
    std::vector<std::uint8_t> boundary;       // node lacks at least one face neighbour
    std::size_t origin = 0;

    std::size_t node_count() const { return dim == 0 ? 0 : coords.size() / dim; }
    std::span<const double> node(std::size_t i) const { return {coords.data() + i * dim, dim}; }

    /// Face neighbour of node i along axis in direction +1/-1, or -1.
    std::int64_t neighbor(std::size_t i, std::size_t axis, int direction) const;

    /// Node whose cell contains x (rounding to the lattice), or -1 if that
    /// lattice point is not part of the grid.
    std::int64_t nearest(std::span<const double> x) const;

    /// Volume of one cell, h^dim.
    double cell_volume() const;
};

/// Largest lattice (nodes_per_axis^dim) build_grid accepts.
inline constexpr std::size_t kMaxLatticePoints = 20'000'000;

/// Throws ConfigError unless nodes_per_axis is odd and >= 3, radius > 0 and the
/// lattice fits kMaxLatticePoints.
GridSpec build_grid(double radius, std::size_t nodes_per_axis, std::size_t dim);

/// A scalar candidate V(x) with its exact input gradient.
class LyapunovCandidate {
public:
    using ValueFn = std::function<double(std::span<const double>)>;
    using GradFn = std::function<void(std::span<const double>, std::span<double>)>;
    /// Upper bound on sup ||grad V||_inf over the box [-r, r]^dim.
    using BoundFn = std::function<double(double r)>;

    LyapunovCandidate(std::size_t dim, ValueFn value, GradFn grad, BoundFn bound, std::string kind);

    static LyapunovCandidate neural(std::vector<double> theta, Architecture arch);
    /// V(x) = x^T P x.
    static LyapunovCandidate quadratic(Matrix p);
    /// V(x) = w^T x + offset.
    static LyapunovCandidate affine(std::vector<double> w, double offset);

    std::size_t dim() const { return dim_; }
    const std::string& kind() const { return kind_; }
    double value(std::span<const double> x) const { return value_(x); }
    void gradient(std::span<const double> x, std::span<double> g) const { grad_(x, g); }
    double analytic_bound(double r) const { return bound_(r); }

private:
    std::size_t dim_;
    ValueFn value_;
    GradFn grad_;
    BoundFn bound_;
    std::string kind_;
};

/// V, grad V, f and the Lie derivative grad V^T f at every grid node.
struct NodeFields {
    std::size_t dim = 0;
    double value_at_origin = 0.0;  // V(0), subtracted as the bias
    std::vector<double> value;     // raw V(u)
    std::vector<double> gradient;  // node_count x dim
    std::vector<double> field;     // node_count x dim
    std::vector<double> lie;
};

/// Throws NonFiniteDynamics if f or V is non-finite at a node.
NodeFields evaluate_nodes(const LyapunovCandidate& v, const VectorField& f, const GridSpec& grid);

enum class LipschitzMode { Empirical, Analytic };

std::string to_string(LipschitzMode mode);
LipschitzMode lipschitz_mode_from_string(const std::string& name);

struct LipschitzOptions {
    LipschitzMode mode = LipschitzMode::Empirical;
    double safety = 1.2;
};

/// All constants are with respect to the l1 norm on states.
struct LipschitzConstants {
    double k_v = 0.0;
    double k_grad_v = 0.0;
    double k_f = 0.0;
    double k_vdot = 0.0;
    LipschitzMode mode = LipschitzMode::Empirical;
};

/// Empirical: K_V = safety * max_u ||grad V(u)||_inf, the others are safety
/// times the largest face-neighbour difference quotient of grad V, f and the
/// Lie derivative. Analytic: K_V is replaced by the candidate's norm bound
/// over the grid's bounding box (scaled by safety as well).
LipschitzConstants estimate_lipschitz(const NodeFields& fields, const LyapunovCandidate& v, const GridSpec& grid,
                                      const LipschitzOptions& options);
LipschitzConstants estimate_lipschitz(const LyapunovCandidate& v, const VectorField& f, const GridSpec& grid,
                                      const LipschitzOptions& options);

struct NodeRecord {
    double vbar = 0.0;  // V(u) - V(0)
    double lie = 0.0;
    bool positivity_ok = false;
    bool decrease_ok = false;
    bool core = false;  // inside the exempt core ball around the origin

    bool green() const { return positivity_ok && decrease_ok; }
};

struct ValidityMap {
    std::vector<NodeRecord> nodes;  // grid node order
    double eps_positive = 0.0;      // K_V tau
    double eps_decrease = 0.0;      // K_Vdot tau
    double core_radius = 0.0;

    std::size_t green_count() const;
    /// Every node other than the origin and the core is green.
    bool fully_green() const;
};

struct ValidityOptions {
    /// Nodes with ||u||_2 <= core_fraction * d are reported but not required to
    /// pass: no Lie derivative vanishing at the origin can beat the tightened
    /// margin arbitrarily close to it.
    double core_fraction = 0.1;
};

/// Tightened checks V(u) - V(0) > K_V tau and grad V(u)^T f(u) < -K_Vdot tau
/// at every node; the origin is exempt from both.
ValidityMap check_validity(const NodeFields& fields, const GridSpec& grid, const LipschitzConstants& constants,
                           const ValidityOptions& options = {});

struct PositivityCertificate {
    bool certified = false;
    std::optional<std::size_t> witness;  // first failing node
};

/// True iff every node outside the origin and core passes the positivity check.
PositivityCertificate certify_positive_definite(const ValidityMap& map, const GridSpec& grid);

struct SoundnessReport {
    std::size_t checked = 0;
    std::size_t skipped = 0;  // landed in the cell of the origin or a core node
    std::size_t violations = 0;
    std::vector<double> first_violation;
};

/// Draws points uniformly from the ball and counts those with V(x) - V(0) <= 0
/// outside the exempt cells.
SoundnessReport positivity_soundness(const LyapunovCandidate& v, const ValidityMap& map, const GridSpec& grid,
                                     std::size_t samples, std::uint64_t seed);

struct RegionSelection {
    double radius = 0.0;
    int rounds = 0;  // rounds used, 1-based
};

/// Shrinking loop: calls round(d, round_index) which must return true when
/// every task map on the ball of radius d is fully green; otherwise
/// d <- shrink_factor * d. Throws RegionSelectionFailure after max_rounds.
RegionSelection select_valid_region(double d0, double shrink_factor, int max_rounds,
                                    const std::function<bool(double radius, int round)>& round);

}  // namespace lyapcert
