#include "sfid/dynamics.hpp"

#include <cmath>
#include <ostream>

#include <unsupported/Eigen/MatrixFunctions>

#include "sfid/errors.hpp"

namespace sfid {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

DiscreteLti zoh_discretize(const Matrix& a, const Matrix& b, double sample_time) {
    if (a.rows() != a.cols()) throw InvalidArgument("zoh_discretize: A must be square");
    if (b.rows() != a.rows()) throw InvalidArgument("zoh_discretize: B rows must match A");
    if (!(sample_time > 0.0) || !std::isfinite(sample_time))
        throw InvalidArgument("zoh_discretize: sample time must be positive");
    if (!all_finite(a) || !all_finite(b))
        throw InvalidArgument("zoh_discretize: non-finite entries in A or B");
    const auto n = a.rows();
    const auto m = b.cols();
    Matrix block = Matrix::Zero(n + m, n + m);
    block.topLeftCorner(n, n) = a * sample_time;
    block.topRightCorner(n, m) = b * sample_time;
    const Matrix e = block.exp();
    return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

SystemModel make_lti_system(const DiscreteLti& lti, double sample_time, std::string name) {
    if (lti.a.rows() != lti.a.cols() || lti.b.rows() != lti.a.rows())
        throw InvalidArgument("make_lti_system: inconsistent matrix sizes");
    SystemModel sys;
    sys.name = std::move(name);
    sys.n_x = static_cast<int>(lti.a.rows());
    sys.n_u = static_cast<int>(lti.b.cols());
    sys.sample_time = sample_time;
    sys.step = [a = lti.a, b = lti.b](const Vector& x, const Vector& u) -> Vector {
        return a * x + b * u;
    };
    sys.jacobians = [a = lti.a, b = lti.b](const Vector&, const Vector&) {
        return StepJacobian{a, b};
    };
    return sys;
}

Vector rk4_step(const std::function<Vector(const Vector&, const Vector&)>& field, const Vector& x,
                const Vector& u, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("rk4_step: dt must be positive");
    const Vector k1 = field(x, u);
    const Vector k2 = field(x + 0.5 * dt * k1, u);
    const Vector k3 = field(x + 0.5 * dt * k2, u);
    const Vector k4 = field(x + dt * k3, u);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite() || !k1.allFinite() || !k2.allFinite() || !k3.allFinite() ||
        !k4.allFinite())
        throw IntegrationDiverged("rk4_step: non-finite intermediate state");
    return next;
}

namespace {

// One RK4 step together with d(next)/dx and d(next)/du.
Vector rk4_step_with_jacobian(const ContinuousModel& model, const Vector& x, const Vector& u,
                              double dt, StepJacobian& jac) {
    const auto n = x.size();
    const Vector k1 = model.field(x, u);
    const StepJacobian j1 = model.field_jacobian(x, u);
    const Vector x2 = x + 0.5 * dt * k1;
    const Vector k2 = model.field(x2, u);
    const StepJacobian j2 = model.field_jacobian(x2, u);
    const Vector x3 = x + 0.5 * dt * k2;
    const Vector k3 = model.field(x3, u);
    const StepJacobian j3 = model.field_jacobian(x3, u);
    const Vector x4 = x + dt * k3;
    const Vector k4 = model.field(x4, u);
    const StepJacobian j4 = model.field_jacobian(x4, u);

    const Matrix id = Matrix::Identity(n, n);
    const Matrix d1x = j1.dx;
    const Matrix d1u = j1.du;
    const Matrix d2x = j2.dx * (id + 0.5 * dt * d1x);
    const Matrix d2u = j2.dx * (0.5 * dt * d1u) + j2.du;
    const Matrix d3x = j3.dx * (id + 0.5 * dt * d2x);
    const Matrix d3u = j3.dx * (0.5 * dt * d2u) + j3.du;
    const Matrix d4x = j4.dx * (id + dt * d3x);
    const Matrix d4u = j4.dx * (dt * d3u) + j4.du;
    jac.dx = id + (dt / 6.0) * (d1x + 2.0 * d2x + 2.0 * d3x + d4x);
    jac.du = (dt / 6.0) * (d1u + 2.0 * d2u + 2.0 * d3u + d4u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

SystemModel make_rk4_system(const ContinuousModel& model, double dt, int substeps,
                            std::string name) {
    if (!(dt > 0.0)) throw InvalidArgument("make_rk4_system: dt must be positive");
    if (substeps < 1) throw InvalidArgument("make_rk4_system: substeps must be >= 1");
    if (!model.field) throw InvalidArgument("make_rk4_system: missing vector field");
    SystemModel sys;
    sys.name = std::move(name);
    sys.n_x = model.n_x;
    sys.n_u = model.n_u;
    sys.sample_time = dt;
    const double h = dt / substeps;
    sys.step = [model, h, substeps](const Vector& x, const Vector& u) {
        Vector s = x;
        for (int i = 0; i < substeps; ++i) s = rk4_step(model.field, s, u, h);
        return s;
    };
    if (model.field_jacobian) {
        sys.jacobians = [model, h, substeps](const Vector& x, const Vector& u) {
            StepJacobian total{Matrix::Identity(x.size(), x.size()), Matrix::Zero(x.size(), u.size())};
            Vector s = x;
            for (int i = 0; i < substeps; ++i) {
                StepJacobian j;
                s = rk4_step_with_jacobian(model, s, u, h, j);
                total.du = j.dx * total.du + j.du;
                total.dx = j.dx * total.dx;
            }
            return total;
        };
    }
    return sys;
}

void MsdParams::validate() const {
    if (!(m > 0.0)) throw InvalidArgument("msd: mass must be positive");
    if (!(a > 0.0)) throw InvalidArgument("msd: anchor height a must be positive");
    if (!(l > 0.0) || !(b > 0.0) || !(c >= 0.0))
        throw InvalidArgument("msd: spring length, stiffness and damping must be positive");
}

Vector msd_vector_field(const Vector& x, double force, const MsdParams& p) {
    if (!(p.m > 0.0)) throw InvalidArgument("msd_vector_field: mass must be positive");
    if (x.size() != 2) throw InvalidArgument("msd_vector_field: state must have two entries");
    const double eta = std::sqrt(x[0] * x[0] + p.a * p.a);
    const double spring = p.b * (1.0 - p.l / eta) * x[0];
    Vector dx(2);
    dx[0] = x[1];
    dx[1] = (force - spring - p.c * x[1]) / p.m;
    return dx;
}

StepJacobian msd_field_jacobian(const Vector& x, const MsdParams& p) {
    const double eta2 = x[0] * x[0] + p.a * p.a;
    const double eta = std::sqrt(eta2);
    // d/dx1 [ (1 - l/eta) x1 ] = 1 - l/eta + l x1^2 / eta^3 = 1 - l a^2 / eta^3
    const double dspring = p.b * (1.0 - p.l * p.a * p.a / (eta2 * eta));
    StepJacobian j{Matrix::Zero(2, 2), Matrix::Zero(2, 1)};
    j.dx(0, 1) = 1.0;
    j.dx(1, 0) = -dspring / p.m;
    j.dx(1, 1) = -p.c / p.m;
    j.du(1, 0) = 1.0 / p.m;
    return j;
}

ContinuousModel make_msd_model(const MsdParams& p) {
    p.validate();
    ContinuousModel model;
    model.n_x = 2;
    model.n_u = 1;
    model.field = [p](const Vector& x, const Vector& u) { return msd_vector_field(x, u[0], p); };
    model.field_jacobian = [p](const Vector& x, const Vector&) { return msd_field_jacobian(x, p); };
    return model;
}

Rollout rollout(const SystemModel& system, const InputSignal& signal, const Vector& x0,
                const Vector& u0, long n, bool with_sensitivities) {
    if (n < 1) throw InvalidArgument("rollout: N must be >= 1");
    if (x0.size() != system.n_x) throw InvalidArgument("rollout: x0 has wrong dimension");
    if (u0.size() != system.n_u) throw InvalidArgument("rollout: u0 has wrong dimension");
    if (signal.n_u() != system.n_u)
        throw InvalidArgument("rollout: signal has " + std::to_string(signal.n_u()) +
                              " channels, system expects " + std::to_string(system.n_u));
    if (!signal.in_horizon(1) || !signal.in_horizon(n))
        throw OutOfRange("rollout: signal horizon does not cover 1.." + std::to_string(n));
    if (with_sensitivities && !system.has_jacobians())
        throw CapabilityError("rollout: system '" + system.name +
                              "' provides no Jacobians for sensitivity propagation");

    const int nx = system.n_x;
    const int nu = system.n_u;
    const Eigen::Index nth = signal.n_theta();
    Rollout out;
    Trajectory& traj = out.trajectory;
    traj.states.resize(n + 1, nx);
    traj.inputs.resize(n + 1, nu);
    traj.states.row(0) = x0.transpose();
    traj.inputs.row(0) = u0.transpose();
    for (long k = 1; k <= n; ++k) traj.inputs.row(k) = signal.evaluate(k).transpose();

    Matrix sens;
    if (with_sensitivities) {
        sens = Matrix::Zero(nx, nth);
        traj.sensitivities.reserve(static_cast<std::size_t>(n + 1));
        traj.sensitivities.push_back(sens);
    }

    Vector x = x0;
    for (long k = 0; k < n; ++k) {
        const Vector u = traj.inputs.row(k).transpose();
        Vector next;
        try {
            next = system.step(x, u);
        } catch (const IntegrationDiverged& e) {
            throw TrajectoryDiverged(k + 1, "rollout diverged at step " + std::to_string(k + 1) +
                                                ": " + e.what());
        }
        if (!next.allFinite())
            throw TrajectoryDiverged(k + 1, "rollout produced a non-finite state at step " +
                                                std::to_string(k + 1));
        if (with_sensitivities) {
            const StepJacobian j = system.jacobians(x, u);
            Matrix next_sens = j.dx * sens;
            // u(0) = u0 does not depend on theta.
            if (k >= 1) next_sens.noalias() += j.du * signal.theta_jacobian(k);
            sens = std::move(next_sens);
            traj.sensitivities.push_back(sens);
        }
        x = std::move(next);
        traj.states.row(k + 1) = x.transpose();
    }

    Matrix pts(n, nx + nu);
    pts.leftCols(nx) = traj.states.bottomRows(n);
    pts.rightCols(nu) = traj.inputs.bottomRows(n);
    out.dataset = Dataset(std::move(pts), signal.theta());

    if (with_sensitivities) {
        out.point_sensitivities.reserve(static_cast<std::size_t>(n));
        for (long j = 1; j <= n; ++j) {
            Matrix dz(nx + nu, nth);
            dz.topRows(nx) = traj.sensitivities[static_cast<std::size_t>(j)];
            dz.bottomRows(nu) = signal.theta_jacobian(j);
            out.point_sensitivities.push_back(std::move(dz));
        }
    }
    return out;
}

ReachabilityAdvisory reachability_advisory(long n, long m, long t_d) {
    if (t_d < 1) throw InvalidArgument("reachability_advisory: T_d must be >= 1");
    if (m < 1) throw InvalidArgument("reachability_advisory: M must be >= 1");
    ReachabilityAdvisory adv;
    adv.required = m * (t_d + 1);
    adv.warning = n < adv.required;
    if (adv.warning) {
        adv.message = "data length N = " + std::to_string(n) + " is below M * (T_d + 1) = " +
                      std::to_string(adv.required) +
                      "; the anchors may not all be reachable";
    }
    return adv;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "k";
    for (Eigen::Index i = 0; i < traj.states.cols(); ++i) os << ",x" << i + 1;
    for (Eigen::Index i = 0; i < traj.inputs.cols(); ++i) os << ",u" << i + 1;
    os << '\n';
    const auto old = os.precision(17);
    for (Eigen::Index k = 0; k < traj.states.rows(); ++k) {
        os << k;
        for (Eigen::Index i = 0; i < traj.states.cols(); ++i) os << ',' << traj.states(k, i);
        for (Eigen::Index i = 0; i < traj.inputs.cols(); ++i) os << ',' << traj.inputs(k, i);
        os << '\n';
    }
    os.precision(old);
}

}  // namespace sfid
