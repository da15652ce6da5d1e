#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sfid/errors.hpp"
#include "sfid/input_families.hpp"

using namespace sfid;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Central differences of evaluate() with respect to theta.
Eigen::MatrixXd fd_jacobian(const InputSignal& s, long k) {
    Eigen::MatrixXd jac(s.n_u(), s.n_theta());
    for (Eigen::Index i = 0; i < s.n_theta(); ++i) {
        VectorXd p = s.theta(), m = s.theta();
        p[i] += 1e-6;
        m[i] -= 1e-6;
        jac.col(i) = (s.with_theta(p).evaluate(k) - s.with_theta(m).evaluate(k)) / 2e-6;
    }
    return jac;
}

}  // namespace

TEST_SUITE("input_families") {

TEST_CASE("free-form evaluates theta directly") {
    const auto s = InputSignal::free_form(1, 1, 2, vec({0.3, -1.2}));
    CHECK(s.evaluate(2)[0] == -1.2);
    CHECK(s.evaluate(1)[0] == 0.3);
    CHECK_THROWS_AS(s.evaluate(3), OutOfRange);
    CHECK_THROWS_AS(s.evaluate(0), OutOfRange);
}

TEST_CASE("free-form jacobian is a unit row") {
    const auto s = InputSignal::free_form(1, 0, 5, VectorXd::Zero(5));
    CHECK(s.theta_jacobian(3).isApprox(vec({0, 0, 0, 1, 0}).transpose()));
}

TEST_CASE("free-form can hit any target sequence") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 3.0);
    VectorXd target(40);
    for (auto& v : target) v = g(rng);
    const auto s = InputSignal::free_form(1, 1, 40, target);
    for (long k = 1; k <= 40; ++k) CHECK(s.evaluate(k)[0] == target[k - 1]);
}

TEST_CASE("multisine values") {
    const auto zero = InputSignal::multisine(1, {3, 4, 5}, 1.0 / 64, VectorXd::Zero(3), vec({0.1, 0.2, 0.3}), 0, 63);
    for (long k = 0; k < 64; ++k) CHECK(zero.evaluate(k)[0] == 0.0);

    const auto one = InputSignal::multisine(1, {1}, 0.25, vec({2.0}), vec({std::numbers::pi / 2}), 0, 3);
    CHECK(one.evaluate(0)[0] == doctest::Approx(2.0));
    CHECK(one.n_theta() == 2);

    const auto jac = InputSignal::multisine(1, {1}, 0.25, vec({2.0}), vec({0.0}), 0, 3).theta_jacobian(0);
    CHECK(jac(0, 0) == doctest::Approx(0.0));
    CHECK(jac(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("multisine gain scales value and jacobian") {
    auto s = InputSignal::multisine(1, {2, 5}, 1.0 / 32, vec({1.5, 0.7}), vec({0.4, -1.0}), 0, 31);
    const VectorXd u = s.evaluate(7);
    const auto j = s.theta_jacobian(7);
    s.set_gain(0.2);
    CHECK(s.evaluate(7)[0] == doctest::Approx(0.2 * u[0]));
    CHECK(s.theta_jacobian(7).isApprox(0.2 * j));
    CHECK_THROWS_AS(InputSignal::free_form(1, 0, 2, VectorXd::Zero(2)).set_gain(2.0), InvalidArgument);
}

TEST_CASE("multisine is periodic over one record") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ph(0.0, 2 * std::numbers::pi);
    VectorXd phases(92);
    for (auto& v : phases) v = ph(rng);
    const auto s = InputSignal::multisine(1, bin_range(11, 102), 1.0 / 1024, VectorXd::Constant(92, 100.0),
                                          phases, 0, 4096);
    for (long k = 0; k < 1024; k += 7) CHECK(std::abs(s.evaluate(k + 1024)[0] - s.evaluate(k)[0]) < 1e-10);
}

TEST_CASE("jacobians match finite differences") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    VectorXd amps(6), phases(6);
    for (auto& v : amps) v = u(rng);
    for (auto& v : phases) v = u(rng);
    // two channels, three bins
    const auto ms = InputSignal::multisine(2, {1, 3, 4}, 1.0 / 50, amps, phases, 0, 49);
    const auto pc = InputSignal::piecewise_constant(1, {0, 4, 9, 20}, vec({0.5, -1.0, 2.0}), 0, 25);
    const auto ff = InputSignal::free_form(2, 1, 5, VectorXd::LinSpaced(10, -1, 1));
    for (long k : {0L, 3L, 17L, 33L}) {
        const auto a = ms.theta_jacobian(k);
        CHECK((a - fd_jacobian(ms, k)).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    }
    for (long k : {0L, 5L, 19L, 22L}) CHECK((pc.theta_jacobian(k) - fd_jacobian(pc, k)).cwiseAbs().maxCoeff() < 1e-6);
    for (long k : {1L, 4L, 5L}) CHECK((ff.theta_jacobian(k) - fd_jacobian(ff, k)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("multisine jacobian is bounded by max(1, max A)") {
    VectorXd amps = vec({0.5, 3.0, 1.2});
    const auto s = InputSignal::multisine(1, {2, 3, 9}, 1.0 / 40, amps, vec({0.3, 1.0, 2.0}), 0, 40);
    double worst = 0.0;
    for (long k = 0; k <= 40; ++k) worst = std::max(worst, s.theta_jacobian(k).cwiseAbs().maxCoeff());
    CHECK(std::isfinite(worst));
    CHECK(worst <= 3.0 + 1e-12);
}

TEST_CASE("piecewise-constant levels and parameter counts") {
    const auto s = InputSignal::piecewise_constant(1, {2, 5, 8}, vec({1.5, -0.5}), 0, 10);
    CHECK(s.evaluate(0)[0] == 0.0);
    CHECK(s.evaluate(2)[0] == 1.5);
    CHECK(s.evaluate(4)[0] == 1.5);
    CHECK(s.evaluate(5)[0] == -0.5);
    CHECK(s.evaluate(8)[0] == 0.0);
    CHECK(s.n_theta() == 2);
    CHECK(s.full_parameter_count() == 5);  // 2 N_p + 1
    CHECK_THROWS_AS(InputSignal::piecewise_constant(1, {3, 3}, vec({1.0}), 0, 5), InvalidArgument);
}

TEST_CASE("schroeder phases") {
    const auto one = schroeder_multisine(1, 2.0, {5}, 1.0 / 16, 0, 15);
    CHECK(one.theta()[1] == 0.0);
    const auto three = schroeder_multisine(3, 1.0, {1, 2, 3}, 1.0 / 16, 0, 15);
    CHECK(three.theta()[3] == doctest::Approx(0.0));
    CHECK(three.theta()[4] == doctest::Approx(0.0));
    CHECK(three.theta()[5] == doctest::Approx(-2 * std::numbers::pi / 3));
    CHECK(three.shared_amplitude());
    CHECK(three.theta().head(3).isApprox(VectorXd::Ones(3)));
    CHECK_THROWS_AS(schroeder_multisine(2, 1.0, {1}, 0.1, 0, 9), InvalidArgument);
}

TEST_CASE("projection") {
    auto s = InputSignal::multisine(1, {1, 2}, 0.1, vec({100.0, 100.0}), vec({0.0, 1.0}), 0, 9);
    s.set_amplitude_bounds(0.0, 200.0);
    CHECK(s.project(s.theta()) == s.theta());
    CHECK(s.project(vec({250.0, 50.0, 0.0, 1.0}))[0] == 200.0);

    s.set_shared_amplitude(true);
    const VectorXd tied = s.project(vec({140.0, 160.0, 0.0, 1.0}));
    CHECK(tied[0] == 150.0);
    CHECK(tied[1] == 150.0);
    CHECK(s.project(vec({250.0, 250.0, 0.0, 1.0})).head(2).isApprox(vec({200.0, 200.0})));
    CHECK(project_theta(s.with_theta(vec({300.0, 300.0, 0.0, 1.0}))).theta()[1] == 200.0);
}

TEST_CASE("tied amplitude is a single free coordinate") {
    auto s = InputSignal::multisine(1, {1, 2, 3}, 0.1, VectorXd::Constant(3, 2.0), vec({0.1, 0.2, 0.3}), 0, 9);
    s.set_shared_amplitude(true);
    CHECK(s.n_free() == 4);
    const VectorXd free = s.reduce(s.theta());
    CHECK(free[0] == 2.0);
    CHECK(s.expand(free) == s.theta());
    const VectorXd g = s.reduce_gradient(vec({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    CHECK(g[0] == 6.0);
    CHECK(g.tail(3) == vec({4.0, 5.0, 6.0}));
}

TEST_CASE("projection is idempotent and non-expansive") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    auto s = InputSignal::free_form(1, 1, 8, VectorXd::Zero(8), -10.0, 10.0);
    for (int t = 0; t < 100; ++t) {
        VectorXd a(8), b(8);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const VectorXd pa = s.project(a), pb = s.project(b);
        CHECK(s.project(pa) == pa);
        CHECK(((pa - pb).cwiseAbs().array() <= (a - b).cwiseAbs().array()).all());
    }
}

TEST_CASE("signal csv") {
    const auto s = InputSignal::free_form(1, 1, 3, vec({1.0, 2.0, 3.0}));
    std::ostringstream os;
    write_signal_csv(os, s, 1, 3);
    CHECK(os.str() == "k,u1\n1,1\n2,2\n3,3\n");
}

TEST_CASE("family names round-trip") {
    for (auto f : {InputFamily::free_form, InputFamily::multisine, InputFamily::piecewise_constant})
        CHECK(input_family_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(input_family_from_string("chirp"), InvalidArgument);
}

}
