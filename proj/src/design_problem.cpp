#include "sfid/design_problem.hpp"

#include <cmath>

#include "sfid/errors.hpp"

namespace sfid {

std::string to_string(GradientMethod method) {
    return method == GradientMethod::analytic ? "analytic" : "central_fd";
}

GradientMethod gradient_method_from_string(const std::string& name) {
    if (name == "analytic") return GradientMethod::analytic;
    if (name == "central_fd" || name == "central-fd") return GradientMethod::central_fd;
    throw InvalidArgument("unknown gradient method '" + name + "'");
}

int DesignProblem::joint_dim() const {
    return joint_coordinates.empty() ? full_dim() : static_cast<int>(joint_coordinates.size());
}

void DesignProblem::validate() const {
    if (n < 1) throw InvalidArgument("design problem: N must be >= 1");
    if (x0.size() != system.n_x) throw InvalidArgument("design problem: x0 has wrong dimension");
    if (u0.size() != system.n_u) throw InvalidArgument("design problem: u0 has wrong dimension");
    for (int c : joint_coordinates)
        if (c < 0 || c >= full_dim())
            throw InvalidArgument("design problem: joint coordinate " + std::to_string(c) +
                                  " out of range");
    kernel.validate();
    if (kernel.dim() != joint_dim())
        throw InvalidArgument("design problem: kernel has " + std::to_string(kernel.dim()) +
                              " lengthscales for a " + std::to_string(joint_dim()) +
                              "-dimensional joint space");
    if (anchors.size() < 1 || anchors.dim() != joint_dim())
        throw InvalidArgument("design problem: anchors missing or of wrong dimension");
    if (signal.n_u() != system.n_u)
        throw InvalidArgument("design problem: signal and system disagree on n_u");
}

Dataset DesignProblem::select(const Dataset& full) const {
    if (joint_coordinates.empty()) return full;
    Matrix pts(full.size(), static_cast<Eigen::Index>(joint_coordinates.size()));
    for (std::size_t c = 0; c < joint_coordinates.size(); ++c)
        pts.col(static_cast<Eigen::Index>(c)) = full.points.col(joint_coordinates[c]);
    return Dataset(std::move(pts), full.theta);
}

WEvaluation cost_w(const Vector& theta, const DesignProblem& problem) {
    const InputSignal sig = problem.signal.with_theta(theta);
    Rollout r = rollout(problem.system, sig, problem.x0, problem.u0, problem.n, false);
    WEvaluation out;
    out.dataset = problem.select(r.dataset);
    out.cost = cost_v(out.dataset, problem.anchors, problem.kernel);
    out.trajectory = std::move(r.trajectory);
    return out;
}

WGradient cost_w_with_gradient(const Vector& theta, const DesignProblem& problem,
                               GradientMethod method) {
    WGradient out;
    if (method == GradientMethod::central_fd) {
        out.cost = cost_w(theta, problem).cost;
        out.gradient.resize(theta.size());
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const double h = fd_step(theta[i]);
            Vector tp = theta;
            Vector tm = theta;
            tp[i] += h;
            tm[i] -= h;
            out.gradient[i] =
                (cost_w(tp, problem).cost - cost_w(tm, problem).cost) / (2.0 * h);
        }
        return out;
    }

    const InputSignal sig = problem.signal.with_theta(theta);
    const Rollout r = rollout(problem.system, sig, problem.x0, problem.u0, problem.n, true);
    const Dataset data = problem.select(r.dataset);
    const CostGradient cg = cost_v_with_gradient(data, problem.anchors, problem.kernel);
    out.cost = cg.cost;
    out.gradient = Vector::Zero(theta.size());
    for (long j = 0; j < problem.n; ++j) {
        const Matrix& dz = r.point_sensitivities[static_cast<std::size_t>(j)];
        if (problem.joint_coordinates.empty()) {
            out.gradient.noalias() += dz.transpose() * cg.d_points.row(j).transpose();
        } else {
            for (std::size_t c = 0; c < problem.joint_coordinates.size(); ++c) {
                const double g = cg.d_points(j, static_cast<Eigen::Index>(c));
                if (g != 0.0) out.gradient += g * dz.row(problem.joint_coordinates[c]).transpose();
            }
        }
    }
    return out;
}

Vector cost_w_gradient(const Vector& theta, const DesignProblem& problem, GradientMethod method) {
    return cost_w_with_gradient(theta, problem, method).gradient;
}

}  // namespace sfid
