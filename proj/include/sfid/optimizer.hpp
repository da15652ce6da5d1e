#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sfid/design_problem.hpp"

namespace sfid {

struct StepPolicy {
    enum class Kind { fixed, backtracking };
    Kind kind = Kind::backtracking;
    double alpha0 = 1.0;     // fixed step, or the first trial step
    double shrink = 0.5;
    double armijo_c = 1e-4;
    double growth = 2.0;     // next trial = growth * last accepted step
    double min_step = 1e-14; // backtracking gives up below this
};

// Diagonal variable scaling of the free parameters. `bounds` steps each
// coordinate in units of its box width (unbounded coordinates keep unit
// scale), so an amplitude bounded in [0, 200] and a phase move alike.
enum class Scaling { none, bounds };
std::string to_string(Scaling scaling);
Scaling scaling_from_string(const std::string& name);

struct OptimizerConfig {
    StepPolicy step;
    Scaling scaling = Scaling::none;
    double delta = 1e-6;  // stop when ||theta(i+1) - theta(i)|| < delta
    int max_iterations = 2000;
    GradientMethod gradient_method = GradientMethod::analytic;
    std::uint64_t seed = 0;
    int plateau_window = 50;
    double plateau_tol = 1e-10;
    bool record_theta = false;

    void validate() const;
};

enum class OptimizationStatus { converged, max_iters, diverged };
std::string to_string(OptimizationStatus status);

struct IterationRecord {
    int iteration = 0;
    double cost = 0.0;
    double grad_norm = 0.0;
    double step = 0.0;  // step length that produced this iterate (0 for the first)
    std::optional<Vector> theta;
};

struct OptimizationTrace {
    std::vector<IterationRecord> records;
    OptimizationStatus status = OptimizationStatus::max_iters;
    std::string message;

    int iterations() const { return static_cast<int>(records.size()); }
};

struct OptimizeResult {
    Vector theta_hat;  // best-cost iterate
    double cost = 0.0;
    OptimizationTrace trace;
};

// Projected gradient descent on W(theta; D_N(theta)).
OptimizeResult optimize(const Vector& theta0, const DesignProblem& problem,
                        const OptimizerConfig& cfg);

// max_i |g_analytic_i - g_fd_i| / max(||g_fd||_inf, tiny); 0 for empty theta.
double gradient_check(const Vector& theta, const DesignProblem& problem);

// CSV columns: iteration,cost,grad_norm,step
void write_trace_csv(std::ostream& os, const OptimizationTrace& trace);
// CSV columns: index,theta
void write_theta_csv(std::ostream& os, const Vector& theta);

}  // namespace sfid
