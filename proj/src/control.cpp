#include "lyapcert/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "lyapcert/errors.hpp"

namespace lyapcert::control {

Matrix solve_linear(Matrix m, Matrix rhs) {
    const std::size_t n = m.rows();
    if (!m.square() || rhs.rows() != n) {
        throw DimensionMismatch("solve_linear expects square M and matching rhs");
    }
    const std::size_t nrhs = rhs.cols();
    const double scale = std::max(m.max_abs(), 1e-300);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(m(r, col)) > std::abs(m(pivot, col))) {
                pivot = r;
            }
        }
        if (std::abs(m(pivot, col)) <= 1e-13 * scale) {
            throw SingularSystem("zero pivot in column " + std::to_string(col));
        }
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(m(pivot, j), m(col, j));
            }
            for (std::size_t j = 0; j < nrhs; ++j) {
                std::swap(rhs(pivot, j), rhs(col, j));
            }
        }
        const double inv = 1.0 / m(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = m(r, col) * inv;
            if (factor == 0.0) {
                continue;
            }
            m(r, col) = 0.0;
            for (std::size_t j = col + 1; j < n; ++j) {
                m(r, j) -= factor * m(col, j);
            }
            for (std::size_t j = 0; j < nrhs; ++j) {
                rhs(r, j) -= factor * rhs(col, j);
            }
        }
    }

    Matrix x(n, nrhs);
    for (std::size_t j = 0; j < nrhs; ++j) {
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = rhs(ii, j);
            for (std::size_t k = ii + 1; k < n; ++k) {
                acc -= m(ii, k) * x(k, j);
            }
            x(ii, j) = acc / m(ii, ii);
        }
    }
    return x;
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    const std::size_t n = a.rows();
    if (!a.square() || q.rows() != n || q.cols() != n) {
        throw DimensionMismatch("solve_lyapunov expects n x n A and Q");
    }
    if (n > 16) {
        throw DimensionMismatch("solve_lyapunov supports n <= 16");
    }
    // Row-major vec: unknown P_ij sits at index i*n + j.
    // (A^T P)_ij = sum_k A_ki P_kj,  (P A)_ij = sum_k P_ik A_kj.
    const std::size_t nn = n * n;
    Matrix kron(nn, nn);
    Matrix rhs(nn, 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t row = i * n + j;
            for (std::size_t k = 0; k < n; ++k) {
                kron(row, k * n + j) += a(k, i);
                kron(row, i * n + k) += a(k, j);
            }
            rhs(row, 0) = -q(i, j);
        }
    }
    const Matrix vec_p = solve_linear(std::move(kron), std::move(rhs));
    Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p(i, j) = 0.5 * (vec_p(i * n + j, 0) + vec_p(j * n + i, 0));
        }
    }
    return p;
}

bool cholesky_positive(const Matrix& sym) {
    const std::size_t n = sym.rows();
    if (!sym.square()) {
        return false;
    }
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = sym(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            diag -= l(j, k) * l(j, k);
        }
        if (!(diag > 0.0)) {
            return false;
        }
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = sym(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                acc -= l(i, k) * l(j, k);
            }
            l(i, j) = acc / l(j, j);
        }
    }
    return true;
}

bool is_hurwitz(const Matrix& a) {
    try {
        const Matrix p = solve_lyapunov(a, Matrix::identity(a.rows()));
        return p.all_finite() && cholesky_positive(p);
    } catch (const SingularSystem&) {
        return false;
    }
}

LqrResult kleinman_lqr(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                       const Matrix& k0, int max_iter, double tol) {
    const std::size_t n = a.rows();
    const std::size_t m = b.cols();
    if (!a.square() || b.rows() != n || qc.rows() != n || qc.cols() != n || rc.rows() != m ||
        rc.cols() != m || k0.rows() != m || k0.cols() != n) {
        throw DimensionMismatch("kleinman_lqr operand shapes");
    }
    if (!cholesky_positive(rc)) {
        throw NotStabilizing("Rc is not positive definite");
    }
    if (!is_hurwitz(a - b * k0)) {
        throw NotStabilizing("initial gain does not stabilize A - B K0");
    }

    const Matrix bt = b.transpose();
    LqrResult result{k0, Matrix(n, n), 0};
    for (int it = 1; it <= max_iter; ++it) {
        const Matrix& k = result.gain;
        const Matrix closed = a - b * k;
        const Matrix cost = qc + k.transpose() * rc * k;
        Matrix p = solve_lyapunov(closed, cost);
        Matrix next = solve_linear(rc, bt * p);
        const double step = max_abs_diff(next, k);
        result.gain = std::move(next);
        result.cost = std::move(p);
        result.iterations = it;
        if (step < tol * std::max(1.0, result.gain.max_abs())) {
            return result;
        }
    }
    throw NoConvergence("Kleinman iteration did not converge in " + std::to_string(max_iter) + " steps");
}

Matrix bass_stabilizing_gain(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.rows();
    double row_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += std::abs(a(i, j));
        }
        row_norm = std::max(row_norm, s);
    }
    // Any beta above the spectral abscissa of A works; the bound row_norm + 1
    // always does but gives needlessly large, badly conditioned gains, so try
    // beta = 1, 2, 4, ... first and keep the first that stabilizes.
    const double bound = row_norm + 1.0;
    for (double beta = 1.0;; beta *= 2.0) {
        const bool last = beta >= bound;
        if (last) {
            beta = bound;
        }
        // solve_lyapunov(M, Q) solves M^T X + X M = -Q; M = -(A + beta I)^T
        // gives (A + beta I) X + X (A + beta I)^T = Q.
        const Matrix shifted = a + Matrix::identity(n) * beta;
        try {
            const Matrix x = solve_lyapunov(shifted.transpose() * -1.0, b * b.transpose() * 2.0);
            if (cholesky_positive(x)) {
                // K = B^T X^-1 = (X^-1 B)^T since X is symmetric.
                Matrix k = solve_linear(x, b).transpose();
                if (last || is_hurwitz(a - b * k)) {
                    return k;
                }
            }
        } catch (const SingularSystem&) {
            if (last) {
                throw;
            }
        }
        if (last) {
            throw NotStabilizing("pair (A, B) is not controllable");
        }
    }
}

Matrix linearize(const VectorField& f, std::span<const double> x_star, double h) {
    const std::size_t n = f.dim();
    if (x_star.size() != n) {
        throw DimensionMismatch("linearization point dimension");
    }
    Matrix jac(n, n);
    std::vector<double> xp(x_star.begin(), x_star.end());
    std::vector<double> xm(x_star.begin(), x_star.end());
    std::vector<double> fp(n);
    std::vector<double> fm(n);
    for (std::size_t j = 0; j < n; ++j) {
        xp[j] = x_star[j] + h;
        xm[j] = x_star[j] - h;
        f.eval(xp, fp);
        f.eval(xm, fm);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(fp[i]) || !std::isfinite(fm[i])) {
                throw NonFiniteDynamics("non-finite value while linearizing along axis " + std::to_string(j));
            }
            jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[j] = x_star[j];
        xm[j] = x_star[j];
    }
    return jac;
}

double riccati_residual(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                        const Matrix& p) {
    const Matrix rinv_bt_p = solve_linear(rc, b.transpose() * p);
    const Matrix res = a.transpose() * p + p * a - p * b * rinv_bt_p + qc;
    return res.max_abs();
}

}  // namespace lyapcert::control
