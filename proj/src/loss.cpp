#include "lyapcert/loss.hpp"

#include <algorithm>
#include <cmath>

#include "lyapcert/errors.hpp"
#include "lyapcert/net.hpp"

namespace lyapcert {

void TightenedLossConfig::validate() const {
    if (!(eps_positive > 0.0) || !(eps_decrease > 0.0)) {
        throw ConfigError("loss margins eps_positive and eps_decrease must be > 0");
    }
}

double pointwise_loss(double value, double lie, double value_at_origin, const TightenedLossConfig& cfg) {
    return std::max(0.0, cfg.eps_positive - value) + std::max(0.0, cfg.eps_decrease + lie) +
           value_at_origin * value_at_origin;
}

double empirical_loss(std::span<const double> theta, const Architecture& arch, std::span<const Sample> batch,
                      const TightenedLossConfig& cfg) {
    if (batch.empty()) {
        throw EmptyBatch("empirical loss of an empty sample set");
    }
    const std::vector<double> origin(arch.input_dim, 0.0);
    const double v0 = net::forward(theta, arch, origin);
    double total = 0.0;
    for (const Sample& s : batch) {
        const auto [v, lie] = net::value_and_lie(theta, arch, s.x, s.y);
        total += pointwise_loss(v, lie, v0, cfg);
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace lyapcert
