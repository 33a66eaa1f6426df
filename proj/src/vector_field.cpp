#include "lyapcert/vector_field.hpp"

#include <string>

#include "lyapcert/errors.hpp"

namespace lyapcert {

VectorField VectorField::linear(Matrix m) {
    if (!m.square()) {
        throw DimensionMismatch("linear vector field needs a square matrix");
    }
    const std::size_t n = m.rows();
    return VectorField(n, [m = std::move(m)](std::span<const double> x, std::span<double> dx) {
        const std::size_t n = m.rows();
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += m(i, j) * x[j];
            }
            dx[i] = acc;
        }
    });
}

void VectorField::eval(std::span<const double> x, std::span<double> dx) const {
    if (x.size() != dim_ || dx.size() != dim_) {
        throw DimensionMismatch("state has dimension " + std::to_string(x.size()) + ", system expects " +
                                std::to_string(dim_));
    }
    fn_(x, dx);
}

std::vector<double> VectorField::operator()(std::span<const double> x) const {
    std::vector<double> dx(dim_);
    eval(x, dx);
    return dx;
}

}  // namespace lyapcert
