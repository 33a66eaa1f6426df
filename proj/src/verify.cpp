#include "lyapcert/verify.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

namespace {

constexpr std::size_t kNodesPerChunk = 512;

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace

std::int64_t GridSpec::neighbor(std::size_t i, std::size_t axis, int direction) const {
    const std::int32_t* k = lattice.data() + i * dim;
    const std::int32_t moved = k[axis] + direction;
    if (moved < 0 || moved >= static_cast<std::int32_t>(nodes_per_axis)) {
        return -1;
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dim; ++a) {
        flat = flat * nodes_per_axis + static_cast<std::size_t>(a == axis ? moved : k[a]);
    }
    return node_of_point[flat];
}

std::int64_t GridSpec::nearest(std::span<const double> x) const {
    if (x.size() != dim) {
        throw DimensionMismatch("grid lookup dimension");
    }
    const auto mid = static_cast<double>((nodes_per_axis - 1) / 2);
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dim; ++a) {
        const double k = std::round(x[a] / spacing + mid);
        if (!(k >= 0.0) || k > static_cast<double>(nodes_per_axis - 1)) {
            return -1;
        }
        flat = flat * nodes_per_axis + static_cast<std::size_t>(k);
    }
    return node_of_point[flat];
}

double GridSpec::cell_volume() const {
    return std::pow(spacing, static_cast<double>(dim));
}

GridSpec build_grid(double radius, std::size_t nodes_per_axis, std::size_t dim) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw ConfigError("grid radius must be positive and finite");
    }
    if (nodes_per_axis < 3 || nodes_per_axis % 2 == 0) {
        throw ConfigError("nodes_per_axis must be odd and >= 3");
    }
    if (dim == 0) {
        throw ConfigError("grid dimension must be >= 1");
    }
    double lattice_size = 1.0;
    for (std::size_t a = 0; a < dim; ++a) {
        lattice_size *= static_cast<double>(nodes_per_axis);
    }
    if (lattice_size > static_cast<double>(kMaxLatticePoints)) {
        throw ConfigError("grid of " + std::to_string(nodes_per_axis) + "^" + std::to_string(dim) +
                          " lattice points is too large");
    }

    GridSpec g;
    g.radius = radius;
    g.dim = dim;
    g.nodes_per_axis = nodes_per_axis;
    g.spacing = 2.0 * radius / static_cast<double>(nodes_per_axis - 1);
    g.tau = static_cast<double>(dim) * g.spacing / 2.0;
    g.node_of_point.assign(static_cast<std::size_t>(lattice_size), -1);

    const auto mid = static_cast<std::int32_t>((nodes_per_axis - 1) / 2);
    const double half = g.spacing / 2.0;
    const double r2 = radius * radius * (1.0 + 1e-12);
    std::vector<std::int32_t> k(dim, 0);
    std::vector<double> x(dim);
    for (std::size_t flat = 0; flat < g.node_of_point.size(); ++flat) {
        // Squared distance from the ball centre to the nearest point of the cell.
        double gap2 = 0.0;
        for (std::size_t a = 0; a < dim; ++a) {
            x[a] = static_cast<double>(k[a] - mid) * g.spacing;
            const double gap = std::max(0.0, std::abs(x[a]) - half);
            gap2 += gap * gap;
        }
        if (gap2 <= r2) {
            const auto id = static_cast<std::int32_t>(g.coords.size() / dim);
            g.node_of_point[flat] = id;
            g.coords.insert(g.coords.end(), x.begin(), x.end());
            g.lattice.insert(g.lattice.end(), k.begin(), k.end());
            if (std::all_of(k.begin(), k.end(), [mid](std::int32_t v) { return v == mid; })) {
                g.origin = static_cast<std::size_t>(id);
            }
        }
        for (std::size_t a = dim; a-- > 0;) {
            if (++k[a] < static_cast<std::int32_t>(nodes_per_axis)) {
                break;
            }
            k[a] = 0;
        }
    }

    const std::size_t count = g.node_count();
    g.boundary.assign(count, 0);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t a = 0; a < dim && !g.boundary[i]; ++a) {
            if (g.neighbor(i, a, +1) < 0 || g.neighbor(i, a, -1) < 0) {
                g.boundary[i] = 1;
            }
        }
    }
    return g;
}

LyapunovCandidate::LyapunovCandidate(std::size_t dim, ValueFn value, GradFn grad, BoundFn bound,
                                     std::string kind)
    : dim_(dim), value_(std::move(value)), grad_(std::move(grad)), bound_(std::move(bound)), kind_(std::move(kind)) {}

LyapunovCandidate LyapunovCandidate::neural(std::vector<double> theta, Architecture arch) {
    arch.validate();
    if (theta.size() != arch.param_count()) {
        throw ArchMismatch("parameter vector does not match the architecture");
    }
    auto shared_theta = std::make_shared<const std::vector<double>>(std::move(theta));
    auto shared_arch = std::make_shared<const Architecture>(std::move(arch));
    const std::size_t dim = shared_arch->input_dim;
    const double bound = net::analytic_lipschitz(*shared_theta, *shared_arch);
    return LyapunovCandidate(
        dim,
        [shared_theta, shared_arch](std::span<const double> x) { return net::forward(*shared_theta, *shared_arch, x); },
        [shared_theta, shared_arch](std::span<const double> x, std::span<double> g) {
            const std::vector<double> grad = net::input_gradient(*shared_theta, *shared_arch, x);
            std::copy(grad.begin(), grad.end(), g.begin());
        },
        [bound](double) { return bound; }, "neural");
}

LyapunovCandidate LyapunovCandidate::quadratic(Matrix p) {
    if (p.rows() != p.cols()) {
        throw DimensionMismatch("quadratic form needs a square matrix");
    }
    auto shared = std::make_shared<const Matrix>(std::move(p));
    const std::size_t n = shared->rows();
    double row_sum_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += std::abs((*shared)(i, j) + (*shared)(j, i));
        }
        row_sum_max = std::max(row_sum_max, row);
    }
    return LyapunovCandidate(
        n,
        [shared, n](std::span<const double> x) {
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    v += x[i] * (*shared)(i, j) * x[j];
                }
            }
            return v;
        },
        [shared, n](std::span<const double> x, std::span<double> g) {
            for (std::size_t i = 0; i < n; ++i) {
                double gi = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    gi += ((*shared)(i, j) + (*shared)(j, i)) * x[j];
                }
                g[i] = gi;
            }
        },
        // grad = (P + P^T) x, so ||grad||_inf <= ||P + P^T||_inf * r on the box.
        [row_sum_max](double r) { return row_sum_max * r; }, "quadratic");
}

LyapunovCandidate LyapunovCandidate::affine(std::vector<double> w, double offset) {
    auto shared = std::make_shared<const std::vector<double>>(std::move(w));
    double w_inf = 0.0;
    for (double wi : *shared) {
        w_inf = std::max(w_inf, std::abs(wi));
    }
    return LyapunovCandidate(
        shared->size(),
        [shared, offset](std::span<const double> x) {
            double v = offset;
            for (std::size_t i = 0; i < x.size(); ++i) {
                v += (*shared)[i] * x[i];
            }
            return v;
        },
        [shared](std::span<const double>, std::span<double> g) { std::copy(shared->begin(), shared->end(), g.begin()); },
        [w_inf](double) { return w_inf; }, "affine");
}

NodeFields evaluate_nodes(const LyapunovCandidate& v, const VectorField& f, const GridSpec& grid) {
    if (v.dim() != grid.dim || f.dim() != grid.dim) {
        throw DimensionMismatch("candidate, vector field and grid dimensions differ");
    }
    const std::size_t n = grid.node_count();
    const std::size_t dim = grid.dim;
    NodeFields out;
    out.dim = dim;
    out.value.resize(n);
    out.gradient.resize(n * dim);
    out.field.resize(n * dim);
    out.lie.resize(n);
    const std::size_t chunks = (n + kNodesPerChunk - 1) / kNodesPerChunk;
    parallel_chunks(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * kNodesPerChunk);
        for (std::size_t i = c * kNodesPerChunk; i < end; ++i) {
            const auto x = grid.node(i);
            std::span<double> g(out.gradient.data() + i * dim, dim);
            std::span<double> fx(out.field.data() + i * dim, dim);
            out.value[i] = v.value(x);
            v.gradient(x, g);
            f.eval(x, fx);
            double lie = 0.0;
            for (std::size_t a = 0; a < dim; ++a) {
                lie += g[a] * fx[a];
            }
            if (!std::isfinite(lie) || !std::isfinite(out.value[i])) {
                throw NonFiniteDynamics("non-finite value or Lie derivative at grid node " + std::to_string(i));
            }
            out.lie[i] = lie;
        }
    });
    out.value_at_origin = out.value[grid.origin];
    return out;
}

std::string to_string(LipschitzMode mode) {
    return mode == LipschitzMode::Empirical ? "empirical" : "analytic";
}

LipschitzMode lipschitz_mode_from_string(const std::string& name) {
    if (name == "empirical") {
        return LipschitzMode::Empirical;
    }
    if (name == "analytic") {
        return LipschitzMode::Analytic;
    }
    throw ConfigError("lipschitz mode must be empirical or analytic, got '" + name + "'");
}

LipschitzConstants estimate_lipschitz(const NodeFields& fields, const LyapunovCandidate& v, const GridSpec& grid,
                                      const LipschitzOptions& options) {
    if (grid.node_count() == 0) {
        throw EmptyBatch("Lipschitz estimate on an empty grid");
    }
    if (!(options.safety >= 1.0)) {
        throw ConfigError("Lipschitz safety factor must be >= 1");
    }
    const std::size_t dim = grid.dim;
    const double h = grid.spacing;
    double grad_inf = 0.0;
    double grad_q = 0.0;
    double f_q = 0.0;
    double lie_q = 0.0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const double* gi = fields.gradient.data() + i * dim;
        const double* fi = fields.field.data() + i * dim;
        for (std::size_t a = 0; a < dim; ++a) {
            grad_inf = std::max(grad_inf, std::abs(gi[a]));
        }
        for (std::size_t a = 0; a < dim; ++a) {
            const std::int64_t j = grid.neighbor(i, a, +1);
            if (j < 0) {
                continue;
            }
            const double* gj = fields.gradient.data() + static_cast<std::size_t>(j) * dim;
            const double* fj = fields.field.data() + static_cast<std::size_t>(j) * dim;
            double dg = 0.0;
            double df = 0.0;
            for (std::size_t b = 0; b < dim; ++b) {
                dg = std::max(dg, std::abs(gi[b] - gj[b]));
                df += std::abs(fi[b] - fj[b]);
            }
            grad_q = std::max(grad_q, dg / h);
            f_q = std::max(f_q, df / h);
            lie_q = std::max(lie_q, std::abs(fields.lie[i] - fields.lie[static_cast<std::size_t>(j)]) / h);
        }
    }
    LipschitzConstants k;
    k.mode = options.mode;
    k.k_v = options.safety * grad_inf;
    k.k_grad_v = options.safety * grad_q;
    k.k_f = options.safety * f_q;
    k.k_vdot = options.safety * lie_q;
    if (options.mode == LipschitzMode::Analytic) {
        k.k_v = options.safety * v.analytic_bound(grid.radius + grid.spacing / 2.0);
    }
    return k;
}

LipschitzConstants estimate_lipschitz(const LyapunovCandidate& v, const VectorField& f, const GridSpec& grid,
                                      const LipschitzOptions& options) {
    return estimate_lipschitz(evaluate_nodes(v, f, grid), v, grid, options);
}

std::size_t ValidityMap::green_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const NodeRecord& r) { return r.green(); }));
}

bool ValidityMap::fully_green() const {
    return std::all_of(nodes.begin(), nodes.end(), [](const NodeRecord& r) { return r.core || r.green(); });
}

ValidityMap check_validity(const NodeFields& fields, const GridSpec& grid, const LipschitzConstants& constants,
                           const ValidityOptions& options) {
    if (!std::isfinite(constants.k_v) || !std::isfinite(constants.k_vdot)) {
        throw NonFiniteDynamics("Lipschitz constants must be finite");
    }
    if (fields.value.size() != grid.node_count()) {
        throw DimensionMismatch("node fields do not belong to this grid");
    }
    ValidityMap map;
    map.eps_positive = constants.k_v * grid.tau;
    map.eps_decrease = constants.k_vdot * grid.tau;
    map.core_radius = options.core_fraction * grid.radius;
    map.nodes.resize(grid.node_count());
    const double v0 = fields.value_at_origin;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        NodeRecord& r = map.nodes[i];
        r.vbar = fields.value[i] - v0;
        r.lie = fields.lie[i];
        if (i == grid.origin) {
            r.positivity_ok = true;
            r.decrease_ok = true;
            r.core = true;
            continue;
        }
        r.positivity_ok = r.vbar > map.eps_positive;
        r.decrease_ok = r.lie < -map.eps_decrease;
        r.core = norm2(grid.node(i)) <= map.core_radius;
    }
    return map;
}

PositivityCertificate certify_positive_definite(const ValidityMap& map, const GridSpec& grid) {
    if (map.nodes.size() != grid.node_count()) {
        throw DimensionMismatch("validity map does not belong to this grid");
    }
    PositivityCertificate cert;
    for (std::size_t i = 0; i < map.nodes.size(); ++i) {
        const NodeRecord& r = map.nodes[i];
        if (i == grid.origin || r.core) {
            continue;
        }
        if (!r.positivity_ok) {
            cert.witness = i;
            return cert;
        }
    }
    cert.certified = true;
    return cert;
}

SoundnessReport positivity_soundness(const LyapunovCandidate& v, const ValidityMap& map, const GridSpec& grid,
                                     std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<double> origin(grid.dim, 0.0);
    const double v0 = v.value(origin);
    SoundnessReport report;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::vector<double> x = uniform_ball_point(grid.dim, grid.radius, rng);
        const std::int64_t node = grid.nearest(x);
        if (node < 0 || map.nodes[static_cast<std::size_t>(node)].core) {
            ++report.skipped;
            continue;
        }
        ++report.checked;
        if (!(v.value(x) - v0 > 0.0)) {
            if (report.violations == 0) {
                report.first_violation = x;
            }
            ++report.violations;
        }
    }
    return report;
}

RegionSelection select_valid_region(double d0, double shrink_factor, int max_rounds,
                                    const std::function<bool(double radius, int round)>& round) {
    if (!(shrink_factor > 0.0 && shrink_factor < 1.0)) {
        throw ConfigError("shrink_factor must lie in (0, 1)");
    }
    if (max_rounds < 1 || !(d0 > 0.0)) {
        throw ConfigError("region selection needs d0 > 0 and max_rounds >= 1");
    }
    double d = d0;
    for (int r = 1; r <= max_rounds; ++r) {
        if (round(d, r)) {
            return {d, r};
        }
        if (r < max_rounds) {
            d *= shrink_factor;
        }
    }
    throw RegionSelectionFailure(max_rounds, d);
}

}  // namespace lyapcert
