#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lyapcert/matrix.hpp"

namespace lyapcert {

/// Autonomous vector field x' = f(x) on R^n. Type-erased so that the benchmark
/// closed loops and ad-hoc test systems share one evaluation path.
class VectorField {
public:
    using Fn = std::function<void(std::span<const double> x, std::span<double> dx)>;

    VectorField() = default;
    VectorField(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

    /// x' = M x.
    static VectorField linear(Matrix m);

    std::size_t dim() const { return dim_; }

    /// Throws DimensionMismatch if either span has the wrong length.
    void eval(std::span<const double> x, std::span<double> dx) const;
    std::vector<double> operator()(std::span<const double> x) const;

private:
    std::size_t dim_ = 0;
    Fn fn_;
};

}  // namespace lyapcert
