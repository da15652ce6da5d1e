#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfid/gp_core.hpp"
#include "sfid/input_families.hpp"

namespace sfid {

struct StepJacobian {
    Matrix dx;  // df/dx, n_x x n_x
    Matrix du;  // df/du, n_x x n_u
};

// x(k+1) = f(x(k), u(k)).
struct SystemModel {
    std::string name;
    int n_x = 0;
    int n_u = 0;
    double sample_time = 1.0;
    std::function<Vector(const Vector&, const Vector&)> step;
    std::function<StepJacobian(const Vector&, const Vector&)> jacobians;  // may be empty

    bool has_jacobians() const { return static_cast<bool>(jacobians); }
};

// dx/dt = F(x, u), with an optional analytic Jacobian.
struct ContinuousModel {
    int n_x = 0;
    int n_u = 0;
    std::function<Vector(const Vector&, const Vector&)> field;
    std::function<StepJacobian(const Vector&, const Vector&)> field_jacobian;  // may be empty
};

struct DiscreteLti {
    Matrix a;
    Matrix b;
};

// Exact zero-order-hold discretization via the exponential of [[A, B], [0, 0]] * Ts.
DiscreteLti zoh_discretize(const Matrix& a, const Matrix& b, double sample_time);

SystemModel make_lti_system(const DiscreteLti& lti, double sample_time, std::string name = "lti");

// Classical RK4 with the input held over the step. Throws IntegrationDiverged.
Vector rk4_step(const std::function<Vector(const Vector&, const Vector&)>& field, const Vector& x,
                const Vector& u, double dt);

// Discrete map from `substeps` RK4 steps of length dt / substeps per sample.
// Jacobians of the map are exact derivatives of the RK4 recursion when the
// continuous model provides a field Jacobian.
SystemModel make_rk4_system(const ContinuousModel& model, double dt, int substeps = 1,
                            std::string name = "rk4");

// Nonlinear mass-spring-damper: a mass on a horizontal rail tied by a spring
// of free length l to an anchor at height a above the rail.
struct MsdParams {
    double l = 0.17;  // m
    double a = 0.25;  // m
    double m = 5.0;   // kg
    double b = 800.0; // N/m
    double c = 10.0;  // Ns/m

    void validate() const;
};

// (x2, (F - b (1 - l / eta(x1)) x1 - c x2) / m), eta = sqrt(x1^2 + a^2).
Vector msd_vector_field(const Vector& x, double force, const MsdParams& p);
StepJacobian msd_field_jacobian(const Vector& x, const MsdParams& p);
ContinuousModel make_msd_model(const MsdParams& p);

struct Trajectory {
    Matrix states;  // x(0..N), (N+1) x n_x
    Matrix inputs;  // u(0..N), (N+1) x n_u; u(N) only enters z_N
    std::vector<Matrix> sensitivities;  // dx(k)/dtheta for k = 0..N, when requested

    Eigen::Index length() const { return states.rows() - 1; }
};

struct Rollout {
    Trajectory trajectory;
    Dataset dataset;  // z_j = vec(x(j), u(j)), j = 1..N
    std::vector<Matrix> point_sensitivities;  // dz_j/dtheta, n_z x n_theta
};

// Applies u(0) = u0 then u(k, theta) for k = 1..N. The signal must cover
// [1, N]. Throws TrajectoryDiverged on a non-finite state.
Rollout rollout(const SystemModel& system, const InputSignal& signal, const Vector& x0,
                const Vector& u0, long n, bool with_sensitivities);

struct ReachabilityAdvisory {
    bool warning = false;
    long required = 0;  // M * (T_d + 1)
    std::string message;
};

// Data-length check N >= M (T_d + 1). Advisory only.
ReachabilityAdvisory reachability_advisory(long n, long m, long t_d);

// CSV with columns k,x1..x_nx,u1..u_nu.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace sfid
