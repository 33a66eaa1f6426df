#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lyapcert/matrix.hpp"
#include "lyapcert/vector_field.hpp"

namespace lyapcert {

enum class SystemId { InvertedPendulum, Microgrid, CaltechFan };

std::string to_string(SystemId id);
SystemId system_from_string(const std::string& name);

/// Parameter tuple of one benchmark instance.
///   pendulum:  (l [m], m [kg], g [m/s^2], b [N m s])
///   microgrid: (dc_1 .. dc_N) droop coefficients; N = values.size()
///   fan:       (m [kg], J [kg m^2], r [m], g, d)
struct ParamVector {
    SystemId system = SystemId::InvertedPendulum;
    std::vector<double> values;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Throws DimensionMismatch on a wrong tuple length and DegenerateRange on a
/// non-positive physical parameter.
void validate(const ParamVector& params);

std::size_t state_dim(const ParamVector& params);
std::size_t input_dim(SystemId id);

/// Fixed network constants of the N-microgrid model. The swing equation is
///   J_i d(dd_i)/dt = -dc_i dd_i - (P_i(delta) - P*_i) + K_i dd_i
///   P_i = sum_{k != i} E_i E_k Y_ik cos(delta_i - delta_k - gamma_ik) + E_i^2 G_ii
/// with setpoints delta* = 0 and P*_i = P_i(0), so the origin is an equilibrium.
struct MicrogridNetwork {
    std::vector<double> inertia;      // J_delta_i
    std::vector<double> voltage;      // E*_i
    std::vector<double> feedback;     // K_i
    std::vector<double> conductance;  // G_ii
    Matrix admittance;                // Y_ik, symmetric, zero diagonal
    Matrix angle;                     // gamma_ik

    /// N buses on a ring: J = 1, E* = 1, K = 0, G_ii = 0.1, Y = 1 on ring
    /// edges, gamma = pi/2 - 0.1.
    static MicrogridNetwork ring(std::size_t n);
    std::size_t size() const { return inertia.size(); }
};

struct ControllerSpec {
    enum class Kind { Lqr, Open, FixedGain };
    Kind kind = Kind::Lqr;
    std::optional<Matrix> state_cost;    // Qc, identity when absent
    std::optional<Matrix> input_cost;    // Rc, identity when absent
    std::optional<Matrix> initial_gain;  // K0 for Kleinman; Bass' method when absent
    std::optional<Matrix> fixed_gain;    // used when kind == FixedGain
};

/// Everything about a benchmark family that does not vary across tasks.
struct SystemModel {
    SystemId id = SystemId::InvertedPendulum;
    ControllerSpec controller;
    std::optional<MicrogridNetwork> network;  // microgrid only; ring(N) when absent
};

/// Open-loop right-hand side f(x, u) of the benchmark systems.
void open_loop_rhs(const SystemModel& model, const ParamVector& params, std::span<const double> x,
                   std::span<const double> u, std::span<double> dx);

/// A benchmark instance with its control loop closed.
struct ClosedLoop {
    ParamVector params;
    Matrix gain;  // K with u = -K x; 0 x n for the microgrid
    VectorField field;
};

/// Closes the loop: the LQR gain is synthesized for this parameter tuple from
/// the numerical linearization at the origin.
ClosedLoop close_loop(const SystemModel& model, const ParamVector& params);

/// x' = f_theta(x) of the closed loop. Throws DimensionMismatch.
std::vector<double> eval_dynamics(const SystemModel& model, const ParamVector& params,
                                  std::span<const double> x);

/// theta_i ~ N(theta_0, diag(variance)) componentwise, redrawn until positive.
/// Throws DegenerateRange after 1000 failed draws for one component.
std::vector<ParamVector> sample_tasks(const ParamVector& nominal, std::span<const double> variance,
                                      std::size_t count, std::uint64_t seed);

struct Sample {
    std::vector<double> x;
    std::vector<double> y;  // y = f(x)
};

struct MiniBatch {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

struct TaskDataset {
    std::vector<MiniBatch> batches;
    std::size_t sample_count() const;
};

/// A point drawn uniformly from the ball ||x||_2 <= radius in R^dim.
std::vector<double> uniform_ball_point(std::size_t dim, double radius, std::mt19937_64& rng);

/// count states drawn uniformly from the ball ||x||_2 <= radius, labelled by f.
std::vector<Sample> sample_ball(const VectorField& f, double radius, std::size_t count, std::uint64_t seed);

/// m mini-batches of (K train, J test) samples from the ball of given radius.
TaskDataset build_dataset(const VectorField& f, double radius, std::size_t train_size, std::size_t test_size,
                          std::size_t batches, std::uint64_t seed);

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    bool diverged = false;
};

/// Classical fixed-step RK4. Stops early with diverged = true when ||x||_2 > 1e6.
Trajectory simulate(const VectorField& f, std::span<const double> x0, double step, double horizon);

/// Same integration without storing the path; returns the final state.
std::vector<double> integrate(const VectorField& f, std::span<const double> x0, double step, double horizon,
                              bool* diverged = nullptr);

}  // namespace lyapcert
