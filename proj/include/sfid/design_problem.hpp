#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sfid/dynamics.hpp"
#include "sfid/gp_core.hpp"
#include "sfid/input_families.hpp"

namespace sfid {

enum class GradientMethod { analytic, central_fd };

std::string to_string(GradientMethod method);
GradientMethod gradient_method_from_string(const std::string& name);

// Everything W(theta) depends on besides theta itself.
//
// `joint_coordinates` picks which entries of the full z = vec(x, u) the
// kernel, anchors and metric see (empty = all, in canonical order). The
// kernel lengthscales and anchors live in that selected space.
struct DesignProblem {
    SystemModel system;
    InputSignal signal;
    Vector x0;
    Vector u0;
    long n = 0;
    AnchorSet anchors;
    KernelConfig kernel;
    std::vector<int> joint_coordinates;

    int full_dim() const { return system.n_x + system.n_u; }
    int joint_dim() const;
    // Throws InvalidArgument on inconsistent dimensions.
    void validate() const;
    // Rows of the full dataset restricted to the selected coordinates.
    Dataset select(const Dataset& full) const;
};

struct WEvaluation {
    double cost = 0.0;
    Dataset dataset;  // selected coordinates
    Trajectory trajectory;
};

// Rolls out u(k, theta), builds D_N(theta) and returns cost_v of it.
WEvaluation cost_w(const Vector& theta, const DesignProblem& problem);

struct WGradient {
    double cost = 0.0;
    Vector gradient;  // over theta
};

WGradient cost_w_with_gradient(const Vector& theta, const DesignProblem& problem,
                               GradientMethod method);

Vector cost_w_gradient(const Vector& theta, const DesignProblem& problem, GradientMethod method);

// Central-difference step used for coordinate i.
inline double fd_step(double theta_i) { return 1e-4 * std::max(1.0, std::abs(theta_i)); }

}  // namespace sfid
