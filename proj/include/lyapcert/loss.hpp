#pragma once

#include <span>
#include <vector>

#include "lyapcert/dynamics.hpp"

namespace lyapcert {

struct Architecture;

/// Margins of the tightened Lyapunov conditions V(x) > eps_positive and
/// grad V(x)^T f(x) < -eps_decrease. Both must be strictly positive.
struct TightenedLossConfig {
    double eps_positive = 0.01;
    double eps_decrease = 0.01;

    void validate() const;
};

/// max(0, eps1 - V(x)) + max(0, eps2 + lie) + V(0)^2 where lie = grad V(x)^T y.
double pointwise_loss(double value, double lie, double value_at_origin, const TightenedLossConfig& cfg);

/// Mean of pointwise_loss over the batch, summed in batch order.
/// Throws EmptyBatch.
double empirical_loss(std::span<const double> theta, const Architecture& arch, std::span<const Sample> batch,
                      const TightenedLossConfig& cfg);

}  // namespace lyapcert
