#include "lyapcert/net.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "lyapcert/errors.hpp"

namespace lyapcert {

void Architecture::validate() const {
    if (input_dim == 0 || hidden.empty()) {
        throw ArchMismatch("architecture needs input_dim >= 1 and at least one hidden layer");
    }
    if (std::any_of(hidden.begin(), hidden.end(), [](std::size_t w) { return w == 0; })) {
        throw ArchMismatch("hidden widths must be >= 1");
    }
}

std::size_t Architecture::fan_in(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden[layer - 1];
}

std::size_t Architecture::fan_out(std::size_t layer) const {
    return layer < hidden.size() ? hidden[layer] : 1;
}

std::size_t Architecture::param_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        total += (fan_in(l) + 1) * fan_out(l);
    }
    return total;
}

namespace {

std::size_t layer_offset(const Architecture& arch, std::size_t layer) {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layer; ++l) {
        offset += (arch.fan_in(l) + 1) * arch.fan_out(l);
    }
    return offset;
}

}  // namespace

std::size_t Architecture::weight_index(std::size_t layer, std::size_t row, std::size_t col) const {
    return layer_offset(*this, layer) + row * fan_in(layer) + col;
}

std::size_t Architecture::bias_index(std::size_t layer, std::size_t row) const {
    return layer_offset(*this, layer) + fan_in(layer) * fan_out(layer) + row;
}

ParamSlot unpack_index(const Architecture& arch, std::size_t flat) {
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const std::size_t block = (in + 1) * out;
        if (flat < block) {
            if (flat < in * out) {
                return {l, flat / in, flat % in};
            }
            return {l, flat - in * out, in};
        }
        flat -= block;
    }
    throw ArchMismatch("flat index " + std::to_string(flat) + " out of range");
}

namespace net {
namespace {

void check_theta(std::span<const double> theta, const Architecture& arch) {
    if (theta.size() != arch.param_count()) {
        throw ArchMismatch("parameter vector has " + std::to_string(theta.size()) + " entries, architecture needs " +
                           std::to_string(arch.param_count()));
    }
}

void check_input(std::span<const double> x, const Architecture& arch) {
    if (x.size() != arch.input_dim) {
        throw DimensionMismatch("network input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(arch.input_dim));
    }
}

// Activations and forward tangents of one sample, reused across samples.
struct Workspace {
    explicit Workspace(const Architecture& arch) {
        const std::size_t hidden = arch.hidden.size();
        act.resize(hidden + 1);
        tan.resize(hidden + 1);
        ztan.resize(hidden);
        act[0].resize(arch.input_dim);
        tan[0].resize(arch.input_dim);
        std::size_t widest = arch.input_dim;
        for (std::size_t l = 0; l < hidden; ++l) {
            act[l + 1].resize(arch.hidden[l]);
            tan[l + 1].resize(arch.hidden[l]);
            ztan[l].resize(arch.hidden[l]);
            widest = std::max(widest, arch.hidden[l]);
        }
        abar.resize(widest);
        tbar.resize(widest);
        abar_prev.resize(widest);
        tbar_prev.resize(widest);
        zbar.resize(widest);
        ztbar.resize(widest);
    }

    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> tan;
    std::vector<std::vector<double>> ztan;
    std::vector<double> abar, tbar, abar_prev, tbar_prev, zbar, ztbar;
};

// Forward pass carrying the tangent along y. Returns (V, grad V . y).
ValueLie forward_tangent(std::span<const double> theta, const Architecture& arch, std::span<const double> x,
                         std::span<const double> y, Workspace& ws) {
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    if (y.empty()) {
        std::fill(ws.tan[0].begin(), ws.tan[0].end(), 0.0);
    } else {
        std::copy(y.begin(), y.end(), ws.tan[0].begin());
    }
    const std::size_t hidden = arch.hidden.size();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < hidden; ++l) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const double* w = theta.data() + offset;
        const double* b = w + in * out;
        const auto& a_in = ws.act[l];
        const auto& t_in = ws.tan[l];
        auto& a_out = ws.act[l + 1];
        auto& t_out = ws.tan[l + 1];
        auto& zt = ws.ztan[l];
        for (std::size_t r = 0; r < out; ++r) {
            const double* wr = w + r * in;
            double z = b[r];
            double dz = 0.0;
            for (std::size_t c = 0; c < in; ++c) {
                z += wr[c] * a_in[c];
                dz += wr[c] * t_in[c];
            }
            const double a = std::tanh(z);
            a_out[r] = a;
            zt[r] = dz;
            t_out[r] = (1.0 - a * a) * dz;
        }
        offset += (in + 1) * out;
    }
    const std::size_t in = arch.fan_in(hidden);
    const double* w = theta.data() + offset;
    double v = w[in];
    double lie = 0.0;
    for (std::size_t c = 0; c < in; ++c) {
        v += w[c] * ws.act[hidden][c];
        lie += w[c] * ws.tan[hidden][c];
    }
    return {v, lie};
}

// grad += c_value * dV/dtheta + c_lie * d(lie)/dtheta, reverse mode over the
// forward-tangent pass stored in ws.
void backward_tangent(std::span<const double> theta, const Architecture& arch, Workspace& ws, double c_value,
                      double c_lie, std::span<double> grad) {
    const std::size_t hidden = arch.hidden.size();
    std::size_t offset = arch.param_count() - (arch.fan_in(hidden) + 1);
    {
        const std::size_t in = arch.fan_in(hidden);
        const double* w = theta.data() + offset;
        double* g = grad.data() + offset;
        for (std::size_t c = 0; c < in; ++c) {
            g[c] += c_value * ws.act[hidden][c] + c_lie * ws.tan[hidden][c];
            ws.abar[c] = c_value * w[c];
            ws.tbar[c] = c_lie * w[c];
        }
        g[in] += c_value;
    }
    for (std::size_t l = hidden; l-- > 0;) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        offset -= (in + 1) * out;
        const double* w = theta.data() + offset;
        double* g = grad.data() + offset;
        const auto& a = ws.act[l + 1];
        const auto& zt = ws.ztan[l];
        for (std::size_t r = 0; r < out; ++r) {
            const double s = 1.0 - a[r] * a[r];
            const double sbar = ws.tbar[r] * zt[r];
            ws.ztbar[r] = ws.tbar[r] * s;
            ws.zbar[r] = (ws.abar[r] - 2.0 * a[r] * sbar) * s;
        }
        const auto& a_in = ws.act[l];
        const auto& t_in = ws.tan[l];
        for (std::size_t r = 0; r < out; ++r) {
            double* gr = g + r * in;
            const double zb = ws.zbar[r];
            const double ztb = ws.ztbar[r];
            for (std::size_t c = 0; c < in; ++c) {
                gr[c] += zb * a_in[c] + ztb * t_in[c];
            }
            g[in * out + r] += zb;
        }
        if (l == 0) {
            break;
        }
        for (std::size_t c = 0; c < in; ++c) {
            double ab = 0.0;
            double tb = 0.0;
            for (std::size_t r = 0; r < out; ++r) {
                ab += w[r * in + c] * ws.zbar[r];
                tb += w[r * in + c] * ws.ztbar[r];
            }
            ws.abar_prev[c] = ab;
            ws.tbar_prev[c] = tb;
        }
        std::swap(ws.abar, ws.abar_prev);
        std::swap(ws.tbar, ws.tbar_prev);
    }
}

}  // namespace

std::vector<double> init_params(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    std::vector<double> theta(arch.param_count());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const double bound = std::sqrt(1.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < (in + 1) * out; ++k) {
            theta[offset + k] = dist(rng);
        }
        offset += (in + 1) * out;
    }
    return theta;
}

double forward(std::span<const double> theta, const Architecture& arch, std::span<const double> x) {
    check_theta(theta, arch);
    check_input(x, arch);
    thread_local std::optional<Workspace> cached;
    thread_local Architecture cached_arch;
    if (!cached || !(cached_arch == arch)) {
        cached.emplace(arch);
        cached_arch = arch;
    }
    return forward_tangent(theta, arch, x, {}, *cached).value;
}

ValueLie value_and_lie(std::span<const double> theta, const Architecture& arch, std::span<const double> x,
                       std::span<const double> y) {
    check_theta(theta, arch);
    check_input(x, arch);
    check_input(y, arch);
    Workspace ws(arch);
    return forward_tangent(theta, arch, x, y, ws);
}

std::vector<double> input_gradient(std::span<const double> theta, const Architecture& arch,
                                   std::span<const double> x) {
    check_theta(theta, arch);
    check_input(x, arch);
    const std::size_t hidden = arch.hidden.size();
    // Plain reverse pass: keep activations only.
    std::vector<std::vector<double>> act(hidden + 1);
    act[0].assign(x.begin(), x.end());
    std::size_t offset = 0;
    std::vector<std::size_t> offsets(arch.layer_count());
    for (std::size_t l = 0; l < hidden; ++l) {
        offsets[l] = offset;
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const double* w = theta.data() + offset;
        const double* b = w + in * out;
        act[l + 1].resize(out);
        for (std::size_t r = 0; r < out; ++r) {
            double z = b[r];
            for (std::size_t c = 0; c < in; ++c) {
                z += w[r * in + c] * act[l][c];
            }
            act[l + 1][r] = std::tanh(z);
        }
        offset += (in + 1) * out;
    }
    std::vector<double> bar(theta.begin() + static_cast<std::ptrdiff_t>(offset),
                            theta.begin() + static_cast<std::ptrdiff_t>(offset + arch.fan_in(hidden)));
    for (std::size_t l = hidden; l-- > 0;) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const double* w = theta.data() + offsets[l];
        std::vector<double> prev(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const double a = act[l + 1][r];
            const double zb = bar[r] * (1.0 - a * a);
            for (std::size_t c = 0; c < in; ++c) {
                prev[c] += w[r * in + c] * zb;
            }
        }
        bar = std::move(prev);
    }
    return bar;
}

namespace {

// Hinge activity per sample; frozen at theta when differencing gradients so a
// sample crossing its kink inside the probe does not inject an O(1/eps) spike.
struct HingePattern {
    std::vector<std::uint8_t> value_active;
    std::vector<std::uint8_t> lie_active;
};

std::vector<double> gradient_impl(std::span<const double> theta, const Architecture& arch,
                                  std::span<const Sample> batch, const TightenedLossConfig& cfg,
                                  const HingePattern* frozen, HingePattern* observed) {
    check_theta(theta, arch);
    if (batch.empty()) {
        throw EmptyBatch("loss_gradient on an empty batch");
    }
    std::vector<double> grad(theta.size(), 0.0);
    Workspace ws(arch);
    if (observed != nullptr) {
        observed->value_active.assign(batch.size(), 0);
        observed->lie_active.assign(batch.size(), 0);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Sample& s = batch[k];
        check_input(s.x, arch);
        const ValueLie vl = forward_tangent(theta, arch, s.x, s.y, ws);
        bool value_on = cfg.eps_positive - vl.value > 0.0;
        bool lie_on = cfg.eps_decrease + vl.lie > 0.0;
        if (frozen != nullptr) {
            value_on = frozen->value_active[k] != 0;
            lie_on = frozen->lie_active[k] != 0;
        }
        if (observed != nullptr) {
            observed->value_active[k] = value_on ? 1 : 0;
            observed->lie_active[k] = lie_on ? 1 : 0;
        }
        const double c_value = value_on ? -inv : 0.0;
        const double c_lie = lie_on ? inv : 0.0;
        if (c_value != 0.0 || c_lie != 0.0) {
            backward_tangent(theta, arch, ws, c_value, c_lie, grad);
        }
    }
    // V(0)^2 is identical for every sample, so its batch mean is itself.
    const std::vector<double> origin(arch.input_dim, 0.0);
    const ValueLie at_origin = forward_tangent(theta, arch, origin, {}, ws);
    if (at_origin.value != 0.0) {
        backward_tangent(theta, arch, ws, 2.0 * at_origin.value, 0.0, grad);
    }
    return grad;
}

double probe_step(std::span<const double> v) {
    double norm = 0.0;
    for (double vi : v) {
        norm += vi * vi;
    }
    norm = std::sqrt(norm);
    if (!std::isfinite(norm)) {
        throw NonFiniteLoss("hvp direction is not finite");
    }
    return 1e-4 / std::max(1.0, norm);
}

}  // namespace

std::vector<double> loss_gradient(std::span<const double> theta, const Architecture& arch,
                                  std::span<const Sample> batch, const TightenedLossConfig& cfg) {
    return gradient_impl(theta, arch, batch, cfg, nullptr, nullptr);
}

double analytic_lipschitz(std::span<const double> theta, const Architecture& arch) {
    check_theta(theta, arch);
    double bound = 1.0;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const std::size_t in = arch.fan_in(l);
        const std::size_t out = arch.fan_out(l);
        const double* w = theta.data() + offset;
        double factor = 0.0;
        if (l == 0) {
            // l1 -> l_inf operator norm: largest entry.
            for (std::size_t k = 0; k < in * out; ++k) {
                factor = std::max(factor, std::abs(w[k]));
            }
            if (l + 1 == arch.layer_count()) {
                factor = 0.0;
                for (std::size_t k = 0; k < in; ++k) {
                    factor = std::max(factor, std::abs(w[k]));
                }
            }
        } else {
            // l_inf -> l_inf: largest row sum (the output row gives ||w||_1).
            for (std::size_t r = 0; r < out; ++r) {
                double row = 0.0;
                for (std::size_t c = 0; c < in; ++c) {
                    row += std::abs(w[r * in + c]);
                }
                factor = std::max(factor, row);
            }
        }
        bound *= factor;
        offset += (in + 1) * out;
    }
    return bound;
}

LyapunovObjective::LyapunovObjective(Architecture arch, TightenedLossConfig cfg)
    : arch_(std::move(arch)), cfg_(cfg) {
    arch_.validate();
    cfg_.validate();
}

double LyapunovObjective::value(std::span<const double> theta, std::span<const Sample> batch) const {
    return empirical_loss(theta, arch_, batch, cfg_);
}

std::vector<double> LyapunovObjective::gradient(std::span<const double> theta, std::span<const Sample> batch) const {
    return loss_gradient(theta, arch_, batch, cfg_);
}

std::vector<double> Objective::hessian_vector(std::span<const double> theta, std::span<const Sample> batch,
                                              std::span<const double> v) const {
    if (v.size() != theta.size()) {
        throw DimensionMismatch("hvp direction must match theta");
    }
    const double eps = probe_step(v);
    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] += eps * v[i];
        minus[i] -= eps * v[i];
    }
    std::vector<double> gp = gradient(plus, batch);
    const std::vector<double> gm = gradient(minus, batch);
    for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] = (gp[i] - gm[i]) / (2.0 * eps);
    }
    return gp;
}

std::vector<double> LyapunovObjective::hessian_vector(std::span<const double> theta, std::span<const Sample> batch,
                                                      std::span<const double> v) const {
    if (v.size() != theta.size()) {
        throw DimensionMismatch("hvp direction must match theta");
    }
    HingePattern pattern;
    gradient_impl(theta, arch_, batch, cfg_, nullptr, &pattern);
    const double eps = probe_step(v);
    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] += eps * v[i];
        minus[i] -= eps * v[i];
    }
    std::vector<double> gp = gradient_impl(plus, arch_, batch, cfg_, &pattern, nullptr);
    const std::vector<double> gm = gradient_impl(minus, arch_, batch, cfg_, &pattern, nullptr);
    for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] = (gp[i] - gm[i]) / (2.0 * eps);
    }
    return gp;
}

std::vector<double> hvp(const Objective& objective, std::span<const double> theta, std::span<const Sample> batch,
                        std::span<const double> v) {
    return objective.hessian_vector(theta, batch, v);
}

}  // namespace net
}  // namespace lyapcert
