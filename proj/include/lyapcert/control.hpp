#pragma once

#include <span>

#include "lyapcert/matrix.hpp"
#include "lyapcert/vector_field.hpp"

namespace lyapcert::control {

/// Solves M X = rhs by Gaussian elimination with partial pivoting.
/// Throws SingularSystem when a pivot vanishes relative to the matrix scale.
Matrix solve_linear(Matrix m, Matrix rhs);

/// Solves the continuous Lyapunov equation A^T P + P A = -Q for symmetric P.
///
/// The equation is vectorized into the n^2 x n^2 system
/// (I (x) A^T + A^T (x) I) vec(P) = -vec(Q) and solved directly; O(n^6) is fine
/// for n <= 16. Throws SingularSystem when A has eigenvalues with
/// lambda_i + lambda_j = 0.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// True iff every pivot of the Cholesky factorization of the symmetric
/// matrix is strictly positive.
bool cholesky_positive(const Matrix& sym);

/// Eigenvalue-free Hurwitz test: solve A^T P + P A = -I and check P > 0.
bool is_hurwitz(const Matrix& a);

struct LqrResult {
    Matrix gain;       // K, with u = -K x
    Matrix cost;       // P of the last policy evaluation
    int iterations = 0;
};

/// Kleinman policy iteration for the continuous-time LQR problem.
///
/// Starting from a stabilizing K0 it alternates policy evaluation
/// (A - B K)^T P + P (A - B K) = -(Qc + K^T Rc K) with improvement
/// K = Rc^-1 B^T P until max |K_{m+1} - K_m| < tol * max(1, max |K_{m+1}|).
/// Throws NotStabilizing if A - B K0 is not Hurwitz and NoConvergence after
/// max_iter iterations.
LqrResult kleinman_lqr(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                       const Matrix& k0, int max_iter = 100, double tol = 1e-10);

/// A stabilizing gain for a controllable pair (A, B) (Bass' method):
/// with beta > |A|_inf, solve (A + beta I) X + X (A + beta I)^T = 2 B B^T and
/// return K = B^T X^-1, which places the spectrum of A - B K at Re = -beta.
Matrix bass_stabilizing_gain(const Matrix& a, const Matrix& b);

/// Central-difference Jacobian of f at x_star:
/// A_ij = (f_i(x* + h e_j) - f_i(x* - h e_j)) / 2h.
/// Throws NonFiniteDynamics if any evaluation is non-finite.
Matrix linearize(const VectorField& f, std::span<const double> x_star, double h = 1e-5);

/// Residual max |A^T P + P A - P B Rc^-1 B^T P + Qc|.
double riccati_residual(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                        const Matrix& p);

}  // namespace lyapcert::control
