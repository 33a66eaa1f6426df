#include "lyapcert/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lyapcert/control.hpp"
#include "lyapcert/errors.hpp"

namespace lyapcert {

std::string to_string(SystemId id) {
    switch (id) {
        case SystemId::InvertedPendulum:
            return "inverted_pendulum";
        case SystemId::Microgrid:
            return "microgrid";
        case SystemId::CaltechFan:
            return "caltech_fan";
    }
    return "unknown";
}

SystemId system_from_string(const std::string& name) {
    if (name == "inverted_pendulum") {
        return SystemId::InvertedPendulum;
    }
    if (name == "microgrid") {
        return SystemId::Microgrid;
    }
    if (name == "caltech_fan") {
        return SystemId::CaltechFan;
    }
    throw ConfigError("unknown system id '" + name + "'");
}

void validate(const ParamVector& params) {
    const std::size_t n = params.values.size();
    switch (params.system) {
        case SystemId::InvertedPendulum:
            if (n != 4) {
                throw DimensionMismatch("pendulum expects (l, m, g, b)");
            }
            break;
        case SystemId::CaltechFan:
            if (n != 5) {
                throw DimensionMismatch("fan expects (m, J, r, g, d)");
            }
            break;
        case SystemId::Microgrid:
            if (n < 2) {
                throw DimensionMismatch("microgrid expects at least two droop coefficients");
            }
            break;
    }
    for (double v : params.values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DegenerateRange("physical parameters must be finite and strictly positive");
        }
    }
}

std::size_t state_dim(const ParamVector& params) {
    switch (params.system) {
        case SystemId::InvertedPendulum:
            return 2;
        case SystemId::Microgrid:
            return params.values.size();
        case SystemId::CaltechFan:
            return 6;
    }
    return 0;
}

std::size_t input_dim(SystemId id) {
    switch (id) {
        case SystemId::InvertedPendulum:
            return 1;
        case SystemId::Microgrid:
            return 0;
        case SystemId::CaltechFan:
            return 2;
    }
    return 0;
}

MicrogridNetwork MicrogridNetwork::ring(std::size_t n) {
    MicrogridNetwork net;
    net.inertia.assign(n, 1.0);
    net.voltage.assign(n, 1.0);
    net.feedback.assign(n, 0.0);
    net.conductance.assign(n, 0.1);
    net.admittance = Matrix(n, n);
    net.angle = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        if (i != j) {
            net.admittance(i, j) = 1.0;
            net.admittance(j, i) = 1.0;
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (k != i) {
                net.angle(i, k) = std::numbers::pi / 2.0 - 0.1;
            }
        }
    }
    return net;
}

namespace {

double microgrid_power(const MicrogridNetwork& net, std::size_t i, std::span<const double> delta) {
    double p = net.voltage[i] * net.voltage[i] * net.conductance[i];
    for (std::size_t k = 0; k < net.size(); ++k) {
        if (k == i || net.admittance(i, k) == 0.0) {
            continue;
        }
        p += net.voltage[i] * net.voltage[k] * net.admittance(i, k) *
             std::cos(delta[i] - delta[k] - net.angle(i, k));
    }
    return p;
}

const MicrogridNetwork& network_for(const SystemModel& model, std::size_t n, MicrogridNetwork& storage) {
    if (model.network) {
        if (model.network->size() != n) {
            throw DimensionMismatch("microgrid network size does not match droop tuple");
        }
        return *model.network;
    }
    storage = MicrogridNetwork::ring(n);
    return storage;
}

void microgrid_rhs(const MicrogridNetwork& net, std::span<const double> setpoint_power,
                   std::span<const double> droop, std::span<const double> x, std::span<double> dx) {
    const std::size_t n = net.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = microgrid_power(net, i, x) - setpoint_power[i];
        dx[i] = (-droop[i] * x[i] - dp + net.feedback[i] * x[i]) / net.inertia[i];
    }
}

void pendulum_rhs(std::span<const double> p, std::span<const double> x, double u, std::span<double> dx) {
    const double l = p[0];
    const double m = p[1];
    const double g = p[2];
    const double b = p[3];
    dx[0] = x[1];
    dx[1] = (m * g * l * std::sin(x[0]) - b * x[1] + u) / (m * l * l);
}

void fan_rhs(std::span<const double> p, std::span<const double> x, double u1, double u2, std::span<double> dx) {
    const double m = p[0];
    const double inertia = p[1];
    const double r = p[2];
    const double g = p[3];
    const double d = p[4];
    const double s = std::sin(x[4]);
    const double c = std::cos(x[4]);
    dx[0] = x[1];
    dx[1] = (-m * g * s - d * x[1] + u1 * c - u2 * s) / m;
    dx[2] = x[3];
    dx[3] = (m * g * (c - 1.0) - d * x[3] + u1 * s + u2 * c) / m;
    dx[4] = x[5];
    dx[5] = r * u1 / inertia;
}

}  // namespace

void open_loop_rhs(const SystemModel& model, const ParamVector& params, std::span<const double> x,
                   std::span<const double> u, std::span<double> dx) {
    if (x.size() != state_dim(params) || dx.size() != x.size() || u.size() != input_dim(params.system)) {
        throw DimensionMismatch("open-loop state/input dimension");
    }
    switch (params.system) {
        case SystemId::InvertedPendulum:
            pendulum_rhs(params.values, x, u[0], dx);
            return;
        case SystemId::CaltechFan:
            fan_rhs(params.values, x, u[0], u[1], dx);
            return;
        case SystemId::Microgrid: {
            MicrogridNetwork storage;
            const auto& net = network_for(model, params.values.size(), storage);
            std::vector<double> setpoint(net.size());
            const std::vector<double> zero(net.size(), 0.0);
            for (std::size_t i = 0; i < net.size(); ++i) {
                setpoint[i] = microgrid_power(net, i, zero);
            }
            microgrid_rhs(net, setpoint, params.values, x, dx);
            return;
        }
    }
}

namespace {

Matrix input_jacobian(const SystemModel& model, const ParamVector& params) {
    const std::size_t n = state_dim(params);
    const std::size_t m = input_dim(params.system);
    const double h = 1e-5;
    Matrix b(n, m);
    const std::vector<double> x(n, 0.0);
    std::vector<double> up(m, 0.0);
    std::vector<double> um(m, 0.0);
    std::vector<double> fp(n);
    std::vector<double> fm(n);
    for (std::size_t j = 0; j < m; ++j) {
        up[j] = h;
        um[j] = -h;
        open_loop_rhs(model, params, x, up, fp);
        open_loop_rhs(model, params, x, um, fm);
        for (std::size_t i = 0; i < n; ++i) {
            b(i, j) = (fp[i] - fm[i]) / (2.0 * h);
        }
        up[j] = 0.0;
        um[j] = 0.0;
    }
    return b;
}

Matrix synthesize_gain(const SystemModel& model, const ParamVector& params) {
    const std::size_t n = state_dim(params);
    const std::size_t m = input_dim(params.system);
    const auto& ctrl = model.controller;
    switch (ctrl.kind) {
        case ControllerSpec::Kind::Open:
            return Matrix(m, n);
        case ControllerSpec::Kind::FixedGain:
            if (!ctrl.fixed_gain || ctrl.fixed_gain->rows() != m || ctrl.fixed_gain->cols() != n) {
                throw DimensionMismatch("fixed gain must be m x n");
            }
            return *ctrl.fixed_gain;
        case ControllerSpec::Kind::Lqr:
            break;
    }
    const std::vector<double> zero_u(m, 0.0);
    const VectorField open(n, [&model, &params, zero_u](std::span<const double> x, std::span<double> dx) {
        open_loop_rhs(model, params, x, zero_u, dx);
    });
    const std::vector<double> origin(n, 0.0);
    const Matrix a = control::linearize(open, origin);
    const Matrix b = input_jacobian(model, params);
    const Matrix qc = ctrl.state_cost.value_or(Matrix::identity(n));
    const Matrix rc = ctrl.input_cost.value_or(Matrix::identity(m));
    Matrix k0 = ctrl.initial_gain ? *ctrl.initial_gain : control::bass_stabilizing_gain(a, b);
    if (ctrl.initial_gain && !control::is_hurwitz(a - b * k0)) {
        // A shipped K0 tuned for the nominal system may not stabilize a far task.
        k0 = control::bass_stabilizing_gain(a, b);
    }
    return control::kleinman_lqr(a, b, qc, rc, k0, 200, 1e-10).gain;
}

}  // namespace

ClosedLoop close_loop(const SystemModel& model, const ParamVector& params) {
    validate(params);
    if (model.id != params.system) {
        throw DimensionMismatch("parameter tuple belongs to " + to_string(params.system) + ", model is " +
                                to_string(model.id));
    }
    const std::size_t n = state_dim(params);
    ClosedLoop loop;
    loop.params = params;

    if (params.system == SystemId::Microgrid) {
        MicrogridNetwork storage;
        MicrogridNetwork net = network_for(model, params.values.size(), storage);
        std::vector<double> setpoint(n);
        const std::vector<double> zero(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            setpoint[i] = microgrid_power(net, i, zero);
        }
        loop.gain = Matrix(0, n);
        loop.field = VectorField(
            n, [net = std::move(net), setpoint = std::move(setpoint), droop = params.values](
                   std::span<const double> x, std::span<double> dx) { microgrid_rhs(net, setpoint, droop, x, dx); });
        return loop;
    }

    loop.gain = synthesize_gain(model, params);
    const std::size_t m = input_dim(params.system);
    loop.field = VectorField(n, [id = params.system, p = params.values, k = loop.gain, m](std::span<const double> x,
                                                                                         std::span<double> dx) {
        double u[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                acc -= k(i, j) * x[j];
            }
            u[i] = acc;
        }
        if (id == SystemId::InvertedPendulum) {
            pendulum_rhs(p, x, u[0], dx);
        } else {
            fan_rhs(p, x, u[0], u[1], dx);
        }
    });
    return loop;
}

std::vector<double> eval_dynamics(const SystemModel& model, const ParamVector& params, std::span<const double> x) {
    if (x.size() != state_dim(params)) {
        throw DimensionMismatch("state has dimension " + std::to_string(x.size()) + ", " + to_string(params.system) +
                                " expects " + std::to_string(state_dim(params)));
    }
    return close_loop(model, params).field(x);
}

std::vector<ParamVector> sample_tasks(const ParamVector& nominal, std::span<const double> variance,
                                      std::size_t count, std::uint64_t seed) {
    if (variance.size() != nominal.values.size()) {
        throw DimensionMismatch("variance diagonal must match the parameter tuple");
    }
    for (double v : variance) {
        if (!(v >= 0.0)) {
            throw DegenerateRange("variance entries must be >= 0");
        }
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<ParamVector> tasks;
    tasks.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        ParamVector task = nominal;
        for (std::size_t c = 0; c < variance.size(); ++c) {
            if (variance[c] == 0.0) {
                continue;
            }
            const double sd = std::sqrt(variance[c]);
            int attempts = 0;
            double draw = 0.0;
            do {
                if (++attempts > 1000) {
                    throw DegenerateRange("could not draw a positive value for component " + std::to_string(c));
                }
                draw = nominal.values[c] + sd * normal(rng);
            } while (!(draw > 0.0));
            task.values[c] = draw;
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

std::size_t TaskDataset::sample_count() const {
    std::size_t total = 0;
    for (const auto& b : batches) {
        total += b.train.size() + b.test.size();
    }
    return total;
}

std::vector<double> uniform_ball_point(std::size_t dim, double radius, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> x(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& xi : x) {
            xi = normal(rng);
            norm += xi * xi;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    const double r = radius * std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
    for (auto& xi : x) {
        xi = xi / norm * r;
    }
    return x;
}

namespace {

Sample draw_sample(const VectorField& f, double radius, std::mt19937_64& rng) {
    Sample s;
    s.x = uniform_ball_point(f.dim(), radius, rng);
    s.y = f(s.x);
    return s;
}

}  // namespace

std::vector<Sample> sample_ball(const VectorField& f, double radius, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(draw_sample(f, radius, rng));
    }
    return out;
}

TaskDataset build_dataset(const VectorField& f, double radius, std::size_t train_size, std::size_t test_size,
                          std::size_t batches, std::uint64_t seed) {
    if (train_size == 0 || test_size == 0 || batches == 0) {
        throw DimensionMismatch("build_dataset needs K, J, m >= 1");
    }
    std::mt19937_64 rng(seed);
    TaskDataset data;
    data.batches.resize(batches);
    for (auto& b : data.batches) {
        b.train.reserve(train_size);
        b.test.reserve(test_size);
        for (std::size_t i = 0; i < train_size; ++i) {
            b.train.push_back(draw_sample(f, radius, rng));
        }
        for (std::size_t i = 0; i < test_size; ++i) {
            b.test.push_back(draw_sample(f, radius, rng));
        }
    }
    return data;
}

namespace {

constexpr double kDivergenceNorm = 1e6;

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return std::sqrt(s);
}

struct Rk4 {
    explicit Rk4(std::size_t n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}

    void step(const VectorField& f, std::vector<double>& x, double h) {
        const std::size_t n = x.size();
        f.eval(x, k1);
        for (std::size_t i = 0; i < n; ++i) {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f.eval(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f.eval(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) {
            tmp[i] = x[i] + h * k3[i];
        }
        f.eval(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    std::vector<double> k1, k2, k3, k4, tmp;
};

std::size_t step_count(double step, double horizon) {
    if (!(step > 0.0) || !(horizon >= step)) {
        throw DimensionMismatch("simulation needs h > 0 and T >= h");
    }
    return static_cast<std::size_t>(std::llround(horizon / step));
}

}  // namespace

Trajectory simulate(const VectorField& f, std::span<const double> x0, double step, double horizon) {
    const std::size_t steps = step_count(step, horizon);
    Trajectory traj;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    std::vector<double> x(x0.begin(), x0.end());
    Rk4 rk(x.size());
    traj.times.push_back(0.0);
    traj.states.push_back(x);
    for (std::size_t s = 1; s <= steps; ++s) {
        rk.step(f, x, step);
        traj.times.push_back(static_cast<double>(s) * step);
        traj.states.push_back(x);
        const double nx = norm2(x);
        if (!(nx <= kDivergenceNorm)) {
            traj.diverged = true;
            break;
        }
    }
    return traj;
}

std::vector<double> integrate(const VectorField& f, std::span<const double> x0, double step, double horizon,
                              bool* diverged) {
    const std::size_t steps = step_count(step, horizon);
    std::vector<double> x(x0.begin(), x0.end());
    Rk4 rk(x.size());
    bool blew_up = false;
    for (std::size_t s = 1; s <= steps; ++s) {
        rk.step(f, x, step);
        if (!(norm2(x) <= kDivergenceNorm)) {
            blew_up = true;
            break;
        }
    }
    if (diverged) {
        *diverged = blew_up;
    }
    return x;
}

}  // namespace lyapcert
