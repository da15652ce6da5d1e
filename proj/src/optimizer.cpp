#include "sfid/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "sfid/errors.hpp"

namespace sfid {

void OptimizerConfig::validate() const {
    if (!(step.alpha0 > 0.0)) throw InvalidArgument("optimizer: step size must be positive");
    if (step.kind == StepPolicy::Kind::backtracking) {
        if (!(step.shrink > 0.0 && step.shrink < 1.0))
            throw InvalidArgument("optimizer: shrink factor must lie in (0, 1)");
        if (!(step.armijo_c > 0.0 && step.armijo_c < 1.0))
            throw InvalidArgument("optimizer: Armijo constant must lie in (0, 1)");
        if (!(step.growth >= 1.0)) throw InvalidArgument("optimizer: growth must be >= 1");
    }
    if (!(delta > 0.0)) throw InvalidArgument("optimizer: threshold delta must be positive");
    if (max_iterations < 1) throw InvalidArgument("optimizer: max_iterations must be >= 1");
    if (plateau_window < 1) throw InvalidArgument("optimizer: plateau window must be >= 1");
}

std::string to_string(OptimizationStatus status) {
    switch (status) {
        case OptimizationStatus::converged: return "converged";
        case OptimizationStatus::max_iters: return "max_iters";
        case OptimizationStatus::diverged: return "diverged";
    }
    return "unknown";
}

std::string to_string(Scaling scaling) { return scaling == Scaling::bounds ? "bounds" : "none"; }

Scaling scaling_from_string(const std::string& name) {
    if (name == "none") return Scaling::none;
    if (name == "bounds") return Scaling::bounds;
    throw InvalidArgument("unknown scaling '" + name + "'");
}

OptimizeResult optimize(const Vector& theta0, const DesignProblem& problem,
                        const OptimizerConfig& cfg) {
    cfg.validate();
    problem.validate();
    const InputSignal& sig = problem.signal;
    if (theta0.size() != sig.n_theta())
        throw InvalidArgument("optimize: theta0 has " + std::to_string(theta0.size()) +
                              " entries, expected " + std::to_string(sig.n_theta()));

    OptimizeResult result;
    OptimizationTrace& trace = result.trace;
    Vector theta = sig.project(theta0);
    Vector free = sig.reduce(theta);
    theta = sig.project(sig.expand(free));
    result.theta_hat = theta;
    result.cost = std::numeric_limits<double>::infinity();

    // Squared scale per free coordinate: the step is along -D^2 grad.
    Vector d2 = Vector::Ones(free.size());
    if (cfg.scaling == Scaling::bounds) {
        const Vector width = sig.reduce(sig.upper()) - sig.reduce(sig.lower());
        for (Eigen::Index i = 0; i < width.size(); ++i)
            if (std::isfinite(width[i]) && width[i] > 0.0) d2[i] = width[i] * width[i];
    }

    const bool backtracking = cfg.step.kind == StepPolicy::Kind::backtracking;
    double trial = cfg.step.alpha0;
    double step_taken = 0.0;
    double last_delta = std::numeric_limits<double>::infinity();
    int plateau = 0;

    for (int it = 0;; ++it) {
        WGradient eval;
        try {
            eval = cost_w_with_gradient(theta, problem, cfg.gradient_method);
        } catch (const TrajectoryDiverged& e) {
            trace.status = OptimizationStatus::diverged;
            trace.message = e.what();
            break;
        }
        const Vector grad = sig.reduce_gradient(eval.gradient);
        const double gnorm = grad.norm();
        const Vector dir = d2.cwiseProduct(grad);
        IterationRecord rec{it, eval.cost, gnorm, step_taken, std::nullopt};
        if (cfg.record_theta) rec.theta = theta;
        trace.records.push_back(std::move(rec));
        if (eval.cost < result.cost) {
            result.cost = eval.cost;
            result.theta_hat = theta;
        }

        if (last_delta < cfg.delta) {
            trace.status = OptimizationStatus::converged;
            trace.message = "parameter change below threshold";
            break;
        }
        if (plateau >= cfg.plateau_window) {
            trace.status = OptimizationStatus::converged;
            trace.message = "cost plateau";
            break;
        }
        if (gnorm == 0.0) {
            trace.status = OptimizationStatus::converged;
            trace.message = "zero gradient";
            break;
        }
        if (it + 1 >= cfg.max_iterations) {
            trace.status = OptimizationStatus::max_iters;
            trace.message = "iteration limit reached";
            break;
        }

        Vector next_theta;
        double next_cost = eval.cost;
        if (!backtracking) {
            next_theta = sig.project(sig.expand(free - cfg.step.alpha0 * dir));
            step_taken = cfg.step.alpha0;
        } else {
            double alpha = trial;
            bool accepted = false;
            while (alpha >= cfg.step.min_step) {
                Vector cand = sig.project(sig.expand(free - alpha * dir));
                const Vector cand_free = sig.reduce(cand);
                double c = std::numeric_limits<double>::infinity();
                try {
                    c = cost_w(cand, problem).cost;
                } catch (const TrajectoryDiverged&) {
                }
                const double decrease = grad.dot(free - cand_free);
                if (std::isfinite(c) && c <= eval.cost - cfg.step.armijo_c * decrease) {
                    next_theta = std::move(cand);
                    next_cost = c;
                    accepted = true;
                    break;
                }
                alpha *= cfg.step.shrink;
            }
            if (!accepted) {
                trace.status = OptimizationStatus::converged;
                trace.message = "line search found no decrease";
                break;
            }
            step_taken = alpha;
            trial = alpha * cfg.step.growth;
        }

        last_delta = (next_theta - theta).norm();
        const double rel = std::abs(next_cost - eval.cost) /
                           std::max(std::abs(eval.cost), std::numeric_limits<double>::min());
        plateau = (backtracking && rel < cfg.plateau_tol) ? plateau + 1 : 0;
        theta = std::move(next_theta);
        free = sig.reduce(theta);
    }
    if (!std::isfinite(result.cost)) result.cost = std::numeric_limits<double>::quiet_NaN();
    return result;
}

double gradient_check(const Vector& theta, const DesignProblem& problem) {
    if (theta.size() == 0) return 0.0;
    const Vector ga = cost_w_gradient(theta, problem, GradientMethod::analytic);
    const Vector gf = cost_w_gradient(theta, problem, GradientMethod::central_fd);
    const double scale = std::max({gf.lpNorm<Eigen::Infinity>(), ga.lpNorm<Eigen::Infinity>(),
                                   std::numeric_limits<double>::min()});
    return (ga - gf).lpNorm<Eigen::Infinity>() / scale;
}

void write_trace_csv(std::ostream& os, const OptimizationTrace& trace) {
    os << "iteration,cost,grad_norm,step\n";
    const auto old = os.precision(17);
    for (const auto& r : trace.records)
        os << r.iteration << ',' << r.cost << ',' << r.grad_norm << ',' << r.step << '\n';
    os.precision(old);
}

void write_theta_csv(std::ostream& os, const Vector& theta) {
    os << "index,theta\n";
    const auto old = os.precision(17);
    for (Eigen::Index i = 0; i < theta.size(); ++i) os << i << ',' << theta[i] << '\n';
    os.precision(old);
}

}  // namespace sfid
