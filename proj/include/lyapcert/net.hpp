#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lyapcert/dynamics.hpp"
#include "lyapcert/loss.hpp"

namespace lyapcert {

/// Fully-connected tanh network with a linear scalar output:
/// input_dim -> hidden[0] -> ... -> hidden.back() -> 1.
struct Architecture {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden{16, 16};

    void validate() const;
    std::size_t layer_count() const { return hidden.size() + 1; }
    std::size_t fan_in(std::size_t layer) const;
    std::size_t fan_out(std::size_t layer) const;
    std::size_t param_count() const;

    /// Flat offset of W_layer(row, col). Layers are stored in order, each as a
    /// row-major weight block followed by its bias vector.
    std::size_t weight_index(std::size_t layer, std::size_t row, std::size_t col) const;
    std::size_t bias_index(std::size_t layer, std::size_t row) const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Position of a flat parameter inside the network; col == fan_in marks a bias.
struct ParamSlot {
    std::size_t layer;
    std::size_t row;
    std::size_t col;
};

ParamSlot unpack_index(const Architecture& arch, std::size_t flat);

namespace net {

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for every weight and bias.
std::vector<double> init_params(const Architecture& arch, std::uint64_t seed);

double forward(std::span<const double> theta, const Architecture& arch, std::span<const double> x);

/// Exact grad_x V(x).
std::vector<double> input_gradient(std::span<const double> theta, const Architecture& arch,
                                   std::span<const double> x);

/// Value and Lie derivative grad V(x)^T y in one forward-tangent pass.
struct ValueLie {
    double value;
    double lie;
};
ValueLie value_and_lie(std::span<const double> theta, const Architecture& arch, std::span<const double> x,
                       std::span<const double> y);

/// Gradient w.r.t. theta of the batch-mean tightened loss. Differentiates the
/// Lie term grad_x V^T y through theta (mixed second derivatives). Hinges with
/// argument exactly 0 contribute nothing.
std::vector<double> loss_gradient(std::span<const double> theta, const Architecture& arch,
                                  std::span<const Sample> batch, const TightenedLossConfig& cfg);

/// Upper bound on the l1 -> |.| Lipschitz constant of V from weight norms:
/// max|W_0| * prod ||W_l||_inf * ||w_out||_1 (tanh is 1-Lipschitz).
double analytic_lipschitz(std::span<const double> theta, const Architecture& arch);

/// A differentiable batch objective; the meta-learning code works against this
/// so the Lyapunov loss and closed-form test surrogates share one path.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t param_count() const = 0;
    virtual double value(std::span<const double> theta, std::span<const Sample> batch) const = 0;
    virtual std::vector<double> gradient(std::span<const double> theta, std::span<const Sample> batch) const = 0;
    /// H v by central differences of the gradient, eps = 1e-4 / max(1, ||v||_2).
    virtual std::vector<double> hessian_vector(std::span<const double> theta, std::span<const Sample> batch,
                                               std::span<const double> v) const;
};

class LyapunovObjective final : public Objective {
public:
    LyapunovObjective(Architecture arch, TightenedLossConfig cfg);

    std::size_t param_count() const override { return arch_.param_count(); }
    double value(std::span<const double> theta, std::span<const Sample> batch) const override;
    std::vector<double> gradient(std::span<const double> theta, std::span<const Sample> batch) const override;
    /// Differences the gradient with every hinge held in its state at theta,
    /// i.e. the Hessian of the loss away from kinks.
    std::vector<double> hessian_vector(std::span<const double> theta, std::span<const Sample> batch,
                                       std::span<const double> v) const override;

    const Architecture& arch() const { return arch_; }
    const TightenedLossConfig& loss_config() const { return cfg_; }

private:
    Architecture arch_;
    TightenedLossConfig cfg_;
};

/// H v of the objective (dispatches to Objective::hessian_vector).
std::vector<double> hvp(const Objective& objective, std::span<const double> theta, std::span<const Sample> batch,
                        std::span<const double> v);

}  // namespace net
}  // namespace lyapcert
