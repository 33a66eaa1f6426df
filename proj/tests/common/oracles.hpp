#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/meta.hpp"
#include "lyapcert/net.hpp"

namespace oracle {

using lyapcert::Architecture;
using lyapcert::Sample;
using lyapcert::TightenedLossConfig;

/// Central differences of a scalar function, step h per coordinate.
inline std::vector<double> central_gradient(const std::function<double(std::span<const double>)>& fn,
                                            std::span<const double> at, double h) {
    std::vector<double> x(at.begin(), at.end());
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = fn(x);
        x[i] = keep - h;
        const double fm = fn(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max(1e-3 * max|b|, |b_i|, tiny): elementwise relative
/// error with a floor so entries that are zero by symmetry do not dominate.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double scale = 0.0;
    for (double v : b) {
        scale = std::max(scale, std::abs(v));
    }
    const double floor = std::max(1e-3 * scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(floor, std::abs(b[i])));
    }
    return worst;
}

/// Every hinge argument of the loss at theta is at least `gap` away from zero,
/// so a central difference with step << gap / Lipschitz never crosses a kink.
inline bool away_from_kinks(std::span<const double> theta, const Architecture& arch, std::span<const Sample> batch,
                            const TightenedLossConfig& cfg, double gap) {
    for (const auto& s : batch) {
        const auto vl = lyapcert::net::value_and_lie(theta, arch, s.x, s.y);
        if (std::abs(cfg.eps_positive - vl.value) < gap || std::abs(cfg.eps_decrease + vl.lie) < gap) {
            return false;
        }
    }
    return true;
}

/// Random batch with a random linear field y = M x.
inline std::vector<Sample> random_batch(std::size_t dim, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> m(dim * dim);
    for (double& v : m) {
        v = g(rng);
    }
    std::vector<Sample> batch(n);
    for (auto& s : batch) {
        s.x.resize(dim);
        s.y.assign(dim, 0.0);
        for (double& v : s.x) {
            v = g(rng);
        }
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                s.y[i] += m[i * dim + j] * s.x[j];
            }
        }
    }
    return batch;
}

/// Scalar surrogate l(theta) = (theta - a)^2, independent of the batch.
class ScalarQuadratic final : public lyapcert::net::Objective {
public:
    explicit ScalarQuadratic(double a) : a_(a) {}
    std::size_t param_count() const override { return 1; }
    double value(std::span<const double> theta, std::span<const Sample>) const override {
        return (theta[0] - a_) * (theta[0] - a_);
    }
    std::vector<double> gradient(std::span<const double> theta, std::span<const Sample>) const override {
        return {2.0 * (theta[0] - a_)};
    }

private:
    double a_;
};

/// l(theta) = 1/2 theta^T M theta with symmetric M, so H v = M v.
class QuadraticForm final : public lyapcert::net::Objective {
public:
    QuadraticForm(std::vector<double> m, std::size_t n) : m_(std::move(m)), n_(n) {}
    std::size_t param_count() const override { return n_; }
    double value(std::span<const double> theta, std::span<const Sample>) const override {
        double v = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                v += 0.5 * theta[i] * m_[i * n_ + j] * theta[j];
            }
        }
        return v;
    }
    std::vector<double> gradient(std::span<const double> theta, std::span<const Sample>) const override {
        std::vector<double> g(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                g[i] += m_[i * n_ + j] * theta[j];
            }
        }
        return g;
    }
    const std::vector<double>& matrix() const { return m_; }

private:
    std::vector<double> m_;
    std::size_t n_;
};

}  // namespace oracle
