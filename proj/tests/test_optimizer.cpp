#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "sfid/anchors_metrics.hpp"
#include "sfid/design_problem.hpp"
#include "sfid/errors.hpp"
#include "sfid/optimizer.hpp"

using namespace sfid;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

DesignProblem lti_problem(long n = 12, std::vector<int> pts = {3, 3}) {
    Matrix a(2, 2), b(2, 1);
    a << 0, 1, -0.3, -0.5;
    b << 0, 1;
    DesignProblem p;
    p.system = make_lti_system(zoh_discretize(a, b, 1.0), 1.0);
    p.signal = InputSignal::free_form(1, 1, n, Vector::Zero(n), -10.0, 10.0);
    p.x0 = Vector::Zero(2);
    p.u0 = Vector::Zero(1);
    p.n = n;
    p.joint_coordinates = {0, 2};
    const RegionOfInterest region{vec({-2, -2}), vec({2, 2})};
    p.anchors = uniform_anchor_grid(region, pts, MetricWeight::identity(2));
    p.kernel = KernelConfig::with_default_jitter(1.0, vec({2.0, 2.0}));
    return p;
}

// x(k+1) = 0: the data are (0, u(j)), so W only sees the inputs.
DesignProblem static_problem(long n) {
    DesignProblem p;
    p.system.name = "null";
    p.system.n_x = 1;
    p.system.n_u = 1;
    p.system.step = [](const Vector&, const Vector&) { return Vector(Vector::Zero(1)); };
    p.system.jacobians = [](const Vector&, const Vector&) {
        return StepJacobian{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    };
    p.signal = InputSignal::free_form(1, 1, n, Vector::Zero(n));
    p.x0 = Vector::Zero(1);
    p.u0 = Vector::Zero(1);
    p.n = n;
    p.joint_coordinates = {1};
    p.kernel = {1.0, vec({0.5}), 1e-8};
    return p;
}

Vector gaussian(std::mt19937_64& rng, Eigen::Index n, double s = 1.0) {
    std::normal_distribution<double> g(0.0, s);
    Vector v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("W is V of the rolled-out dataset") {
    const DesignProblem p = lti_problem();
    std::mt19937_64 rng(1);
    for (int t = 0; t < 5; ++t) {
        const Vector theta = gaussian(rng, p.n);
        const auto r = rollout(p.system, p.signal.with_theta(theta), p.x0, p.u0, p.n, false);
        Matrix sel(p.n, 2);
        sel.col(0) = r.dataset.points.col(0);
        sel.col(1) = r.dataset.points.col(2);
        CHECK(cost_w(theta, p).cost == cost_v(Dataset(sel), p.anchors, p.kernel));
    }
}

TEST_CASE("W at zero input") {
    // the dataset collapses onto the origin, which is the centre anchor
    const DesignProblem p = lti_problem();
    const double w = cost_w(Vector::Zero(p.n), p).cost;
    Matrix origin = Matrix::Zero(p.n, 2);
    CHECK(w == doctest::Approx(cost_v(Dataset(origin), p.anchors, p.kernel)));
    CHECK(w > 0.0);
    CHECK(w < 1.0);
}

TEST_CASE("analytic gradient agrees with central differences") {
    const DesignProblem p = lti_problem(40, {3, 3});
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) CHECK(gradient_check(gaussian(rng, p.n), p) < 1e-4);

    DesignProblem empty = p;
    CHECK(gradient_check(Vector(0), empty) == 0.0);
}

TEST_CASE("W and its gradient scale with the signal variance") {
    DesignProblem a = lti_problem();
    DesignProblem b = a;
    b.kernel.signal_variance = 4.0;
    b.kernel.jitter = 4.0 * a.kernel.jitter;
    std::mt19937_64 rng(2);
    const Vector theta = gaussian(rng, a.n);
    const auto ga = cost_w_with_gradient(theta, a, GradientMethod::analytic);
    const auto gb = cost_w_with_gradient(theta, b, GradientMethod::analytic);
    CHECK(gb.cost == doctest::Approx(4.0 * ga.cost));
    CHECK((gb.gradient - 4.0 * ga.gradient).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("static system reduces W to V of the inputs") {
    DesignProblem p = static_problem(4);
    p.anchors.points = vec({-1.0, 0.0, 1.0}).reshaped(3, 1);
    const Vector theta = vec({0.3, -0.8, 1.2, 0.0});
    Matrix pts = theta.reshaped(4, 1);
    CHECK(cost_w(theta, p).cost == doctest::Approx(cost_v(Dataset(pts), p.anchors, p.kernel)).epsilon(1e-14));
    const auto g = cost_w_with_gradient(theta, p, GradientMethod::analytic);
    const auto cg = cost_v_with_gradient(Dataset(pts), p.anchors, p.kernel);
    CHECK((g.gradient - cg.d_points.col(0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero gradient stops after one record") {
    DesignProblem p = static_problem(2);
    p.anchors.points = vec({1e6}).reshaped(1, 1);
    const auto r = optimize(vec({0.1, 0.2}), p, OptimizerConfig{});
    CHECK(r.trace.status == OptimizationStatus::converged);
    CHECK(r.trace.iterations() == 1);
    CHECK(r.theta_hat == vec({0.1, 0.2}));
}

TEST_CASE("single input moves onto a single anchor") {
    DesignProblem p = static_problem(1);
    p.anchors.points = vec({0.7}).reshaped(1, 1);
    // near the anchor W ~ 2 d^2 / l^2; with l = 0.5 the halving lattice lands
    // on 2 / curvature and Armijo accepts an endless zigzag, so keep l larger
    p.kernel.lengthscales = vec({0.8});
    OptimizerConfig cfg;
    cfg.delta = 1e-10;
    const auto r = optimize(vec({0.2}), p, cfg);
    CHECK(r.trace.status == OptimizationStatus::converged);
    CHECK(r.trace.iterations() <= 500);
    CHECK(std::abs(r.theta_hat[0] - 0.7) < 1e-6);
}

TEST_CASE("accepted costs never increase and iterates stay feasible") {
    DesignProblem p = lti_problem(20, {3, 3});
    p.signal = InputSignal::free_form(1, 1, 20, Vector::Zero(20), -0.5, 0.5);
    OptimizerConfig cfg;
    cfg.max_iterations = 60;
    cfg.record_theta = true;
    std::mt19937_64 rng(5);
    const auto r = optimize(gaussian(rng, 20, 2.0), p, cfg);
    for (std::size_t i = 1; i < r.trace.records.size(); ++i)
        CHECK(r.trace.records[i].cost <= r.trace.records[i - 1].cost);
    for (const auto& rec : r.trace.records) {
        REQUIRE(rec.theta);
        CHECK(rec.theta->cwiseAbs().maxCoeff() <= 0.5);
    }
    CHECK(r.cost == r.trace.records.back().cost);
    CHECK(r.cost < r.trace.records.front().cost);
}

TEST_CASE("fixed steps may go uphill but the best iterate is returned") {
    DesignProblem p = lti_problem(12, {3, 3});
    OptimizerConfig cfg;
    cfg.step.kind = StepPolicy::Kind::fixed;
    cfg.step.alpha0 = 50.0;
    cfg.max_iterations = 30;
    std::mt19937_64 rng(3);
    const auto r = optimize(gaussian(rng, 12), p, cfg);
    double best = INFINITY;
    for (const auto& rec : r.trace.records) best = std::min(best, rec.cost);
    CHECK(r.cost == best);
    CHECK(cost_w(r.theta_hat, p).cost == best);
}

TEST_CASE("optimization is deterministic") {
    const DesignProblem p = lti_problem(16, {3, 3});
    OptimizerConfig cfg;
    cfg.max_iterations = 40;
    std::mt19937_64 rng(9);
    const Vector t0 = gaussian(rng, 16);
    const auto a = optimize(t0, p, cfg);
    const auto b = optimize(t0, p, cfg);
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(a.cost == b.cost);
    CHECK(a.trace.iterations() == b.trace.iterations());
}

TEST_CASE("bounds scaling on a shared-amplitude multisine") {
    DesignProblem p;
    p.system = make_rk4_system(make_msd_model(MsdParams{}), 0.01, 1, "msd");
    auto sig = InputSignal::multisine(1, bin_range(2, 9), 1.0 / 128, Vector::Constant(8, 20.0),
                                      Vector::LinSpaced(8, 0.0, 3.0), 0, 128);
    sig.set_amplitude_bounds(0.0, 200.0);
    sig.set_shared_amplitude(true);
    p.signal = sig;
    p.x0 = Vector::Zero(2);
    p.u0 = Vector::Zero(1);
    p.n = 128;
    const RegionOfInterest region{vec({-2, -20, -400}), vec({2, 20, 400})};
    p.kernel = KernelConfig::with_default_jitter(10.0, vec({0.6, 6.0, 120.0}));
    p.anchors = uniform_anchor_grid(region, {3, 3, 3}, MetricWeight{vec({0.25, 0.0025, 6.25e-6})}, 20);
    OptimizerConfig cfg;
    cfg.scaling = Scaling::bounds;
    cfg.max_iterations = 15;
    const auto r = optimize(sig.theta(), p, cfg);
    CHECK(r.cost < r.trace.records.front().cost);
    const Vector amps = r.theta_hat.head(8);
    CHECK(amps.isApproxToConstant(amps[0]));
    CHECK(amps.minCoeff() >= 0.0);
    CHECK(amps.maxCoeff() <= 200.0);
}

TEST_CASE("config validation and names") {
    OptimizerConfig cfg;
    cfg.delta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.step.shrink = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    CHECK(scaling_from_string(to_string(Scaling::bounds)) == Scaling::bounds);
    CHECK(gradient_method_from_string("central_fd") == GradientMethod::central_fd);
    CHECK_THROWS_AS(scaling_from_string("log"), InvalidArgument);

    const DesignProblem p = lti_problem();
    CHECK_THROWS_AS(optimize(Vector::Zero(3), p, OptimizerConfig{}), InvalidArgument);
}

TEST_CASE("trace and theta csv") {
    OptimizationTrace t;
    t.records.push_back({0, 1.5, 0.25, 0.0, std::nullopt});
    std::ostringstream os;
    write_trace_csv(os, t);
    CHECK(os.str() == "iteration,cost,grad_norm,step\n0,1.5,0.25,0\n");
    std::ostringstream th;
    write_theta_csv(th, vec({2.0}));
    CHECK(th.str() == "index,theta\n0,2\n");
}

}
