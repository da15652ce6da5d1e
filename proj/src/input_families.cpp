#include "sfid/input_families.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "sfid/errors.hpp"

namespace sfid {

std::string to_string(InputFamily family) {
    switch (family) {
        case InputFamily::free_form: return "free_form";
        case InputFamily::multisine: return "multisine";
        case InputFamily::piecewise_constant: return "piecewise_constant";
    }
    return "unknown";
}

InputFamily input_family_from_string(const std::string& name) {
    if (name == "free_form") return InputFamily::free_form;
    if (name == "multisine") return InputFamily::multisine;
    if (name == "piecewise_constant") return InputFamily::piecewise_constant;
    throw InvalidArgument("unknown input family '" + name + "'");
}

InputSignal InputSignal::free_form(int n_u, long first, long length, Eigen::VectorXd theta,
                                   double lower, double upper) {
    if (n_u < 1) throw InvalidArgument("free_form: n_u must be >= 1");
    if (length < 1) throw InvalidArgument("free_form: length must be >= 1");
    if (theta.size() != length * n_u)
        throw InvalidArgument("free_form: theta has " + std::to_string(theta.size()) +
                              " entries, expected " + std::to_string(length * n_u));
    InputSignal s;
    s.family_ = InputFamily::free_form;
    s.n_u_ = n_u;
    s.first_ = first;
    s.last_ = first + length - 1;
    s.lower_ = Eigen::VectorXd::Constant(theta.size(), lower);
    s.upper_ = Eigen::VectorXd::Constant(theta.size(), upper);
    s.theta_ = std::move(theta);
    return s;
}

InputSignal InputSignal::multisine(int n_u, std::vector<int> bins, double f0_over_fs,
                                   Eigen::VectorXd amplitudes, Eigen::VectorXd phases, long first,
                                   long last) {
    if (n_u < 1) throw InvalidArgument("multisine: n_u must be >= 1");
    if (bins.empty()) throw InvalidArgument("multisine: at least one excited bin is required");
    if (!(f0_over_fs > 0.0) || !std::isfinite(f0_over_fs))
        throw InvalidArgument("multisine: f0/fs must be positive");
    if (last < first) throw InvalidArgument("multisine: empty horizon");
    const auto n = static_cast<Eigen::Index>(bins.size()) * n_u;
    if (amplitudes.size() != n || phases.size() != n)
        throw InvalidArgument("multisine: expected " + std::to_string(n) +
                              " amplitudes and phases");
    InputSignal s;
    s.family_ = InputFamily::multisine;
    s.n_u_ = n_u;
    s.first_ = first;
    s.last_ = last;
    s.bins_ = std::move(bins);
    s.f0_over_fs_ = f0_over_fs;
    const double inv = 1.0 / f0_over_fs;
    const double rounded = std::round(inv);
    if (std::abs(inv - rounded) < 1e-9 * inv) s.period_ = static_cast<long>(rounded);
    s.theta_.resize(2 * n);
    s.theta_ << amplitudes, phases;
    s.lower_ = Eigen::VectorXd::Constant(2 * n, -kInf);
    s.upper_ = Eigen::VectorXd::Constant(2 * n, kInf);
    return s;
}

InputSignal InputSignal::piecewise_constant(int n_u, std::vector<long> switching,
                                            Eigen::VectorXd amplitudes, long first, long last) {
    if (n_u < 1) throw InvalidArgument("piecewise_constant: n_u must be >= 1");
    if (switching.size() < 2)
        throw InvalidArgument("piecewise_constant: need at least two switching instants");
    if (!std::is_sorted(switching.begin(), switching.end()) ||
        std::adjacent_find(switching.begin(), switching.end()) != switching.end())
        throw InvalidArgument("piecewise_constant: switching instants must be strictly increasing");
    if (last < first) throw InvalidArgument("piecewise_constant: empty horizon");
    const auto levels = static_cast<Eigen::Index>(switching.size()) - 1;
    if (amplitudes.size() != levels * n_u)
        throw InvalidArgument("piecewise_constant: expected " + std::to_string(levels * n_u) +
                              " amplitudes");
    InputSignal s;
    s.family_ = InputFamily::piecewise_constant;
    s.n_u_ = n_u;
    s.first_ = first;
    s.last_ = last;
    s.switching_ = std::move(switching);
    s.lower_ = Eigen::VectorXd::Constant(amplitudes.size(), -kInf);
    s.upper_ = Eigen::VectorXd::Constant(amplitudes.size(), kInf);
    s.theta_ = std::move(amplitudes);
    return s;
}

InputSignal InputSignal::with_theta(Eigen::VectorXd theta) const {
    if (theta.size() != theta_.size())
        throw InvalidArgument("with_theta: expected " + std::to_string(theta_.size()) +
                              " parameters, got " + std::to_string(theta.size()));
    InputSignal s = *this;
    s.theta_ = std::move(theta);
    return s;
}

void InputSignal::set_bounds(Eigen::VectorXd lower, Eigen::VectorXd upper) {
    if (lower.size() != theta_.size() || upper.size() != theta_.size())
        throw InvalidArgument("set_bounds: size mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(lower[i] <= upper[i])) throw InvalidArgument("set_bounds: lower > upper");
    lower_ = std::move(lower);
    upper_ = std::move(upper);
}

void InputSignal::set_amplitude_bounds(double lower, double upper) {
    if (family_ != InputFamily::multisine)
        throw InvalidArgument("set_amplitude_bounds: not a multisine");
    if (!(lower <= upper)) throw InvalidArgument("set_amplitude_bounds: lower > upper");
    const auto n = static_cast<Eigen::Index>(bins_.size()) * n_u_;
    lower_.head(n).setConstant(lower);
    upper_.head(n).setConstant(upper);
}

void InputSignal::set_phase_bounds(double lower, double upper) {
    if (family_ != InputFamily::multisine)
        throw InvalidArgument("set_phase_bounds: not a multisine");
    if (!(lower <= upper)) throw InvalidArgument("set_phase_bounds: lower > upper");
    const auto n = static_cast<Eigen::Index>(bins_.size()) * n_u_;
    lower_.tail(n).setConstant(lower);
    upper_.tail(n).setConstant(upper);
}

void InputSignal::set_gain(double gain) {
    if (family_ != InputFamily::multisine) throw InvalidArgument("set_gain: not a multisine");
    if (!std::isfinite(gain)) throw InvalidArgument("multisine gain must be finite");
    gain_ = gain;
}

void InputSignal::set_shared_amplitude(bool shared) {
    if (shared && family_ != InputFamily::multisine)
        throw InvalidArgument("shared amplitude applies to multisine signals only");
    shared_amplitude_ = shared;
}

Eigen::Index InputSignal::full_parameter_count() const {
    if (family_ == InputFamily::piecewise_constant)
        return theta_.size() + static_cast<Eigen::Index>(switching_.size());
    return theta_.size();
}

void InputSignal::check_k(long k) const {
    if (!in_horizon(k))
        throw OutOfRange("time index " + std::to_string(k) + " outside horizon [" +
                         std::to_string(first_) + ", " + std::to_string(last_) + "]");
}

// With an integer period the product bin*k is reduced exactly first, which
// keeps evaluate(k + period) == evaluate(k) to rounding of a single sin().
double InputSignal::angle(int l, long k) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const long bin = bins_[static_cast<std::size_t>(l)];
    if (period_ > 0) {
        long r = (bin * k) % period_;
        if (r < 0) r += period_;
        return two_pi * static_cast<double>(r) / static_cast<double>(period_);
    }
    return two_pi * static_cast<double>(bin) * f0_over_fs_ * static_cast<double>(k);
}

Eigen::VectorXd InputSignal::evaluate(long k) const {
    check_k(k);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n_u_);
    switch (family_) {
        case InputFamily::free_form:
            u = theta_.segment((k - first_) * n_u_, n_u_);
            break;
        case InputFamily::multisine:
            for (int l = 0; l < n_components(); ++l) {
                const double base = angle(l, k);
                for (int c = 0; c < n_u_; ++c)
                    u[c] += theta_[amp_index(l, c)] * std::sin(base + theta_[phase_index(l, c)]);
            }
            u *= gain_;
            break;
        case InputFamily::piecewise_constant:
            for (std::size_t l = 0; l + 1 < switching_.size(); ++l) {
                if (switching_[l] <= k && k < switching_[l + 1]) {
                    u = theta_.segment(static_cast<Eigen::Index>(l) * n_u_, n_u_);
                    break;
                }
            }
            break;
    }
    return u;
}

Eigen::MatrixXd InputSignal::theta_jacobian(long k) const {
    check_k(k);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_u_, n_theta());
    switch (family_) {
        case InputFamily::free_form:
            for (int c = 0; c < n_u_; ++c) jac(c, (k - first_) * n_u_ + c) = 1.0;
            break;
        case InputFamily::multisine:
            for (int l = 0; l < n_components(); ++l) {
                const double base = angle(l, k);
                for (int c = 0; c < n_u_; ++c) {
                    const double arg = base + theta_[phase_index(l, c)];
                    jac(c, amp_index(l, c)) = gain_ * std::sin(arg);
                    jac(c, phase_index(l, c)) = gain_ * theta_[amp_index(l, c)] * std::cos(arg);
                }
            }
            break;
        case InputFamily::piecewise_constant:
            for (std::size_t l = 0; l + 1 < switching_.size(); ++l) {
                if (switching_[l] <= k && k < switching_[l + 1]) {
                    for (int c = 0; c < n_u_; ++c)
                        jac(c, static_cast<Eigen::Index>(l) * n_u_ + c) = 1.0;
                    break;
                }
            }
            break;
    }
    return jac;
}

Eigen::Index InputSignal::n_free() const {
    if (!shared_amplitude_) return n_theta();
    return n_u_ + static_cast<Eigen::Index>(bins_.size()) * n_u_;
}

Eigen::VectorXd InputSignal::reduce(const Eigen::VectorXd& theta) const {
    if (theta.size() != n_theta()) throw InvalidArgument("reduce: size mismatch");
    if (!shared_amplitude_) return theta;
    const int nf = n_components();
    Eigen::VectorXd free(n_free());
    for (int c = 0; c < n_u_; ++c) {
        double sum = 0.0;
        for (int l = 0; l < nf; ++l) sum += theta[amp_index(l, c)];
        free[c] = sum / nf;
    }
    free.tail(nf * n_u_) = theta.tail(nf * n_u_);
    return free;
}

Eigen::VectorXd InputSignal::expand(const Eigen::VectorXd& free) const {
    if (free.size() != n_free()) throw InvalidArgument("expand: size mismatch");
    if (!shared_amplitude_) return free;
    const int nf = n_components();
    Eigen::VectorXd theta(n_theta());
    for (int l = 0; l < nf; ++l)
        for (int c = 0; c < n_u_; ++c) theta[amp_index(l, c)] = free[c];
    theta.tail(nf * n_u_) = free.tail(nf * n_u_);
    return theta;
}

Eigen::VectorXd InputSignal::reduce_gradient(const Eigen::VectorXd& grad_theta) const {
    if (grad_theta.size() != n_theta()) throw InvalidArgument("reduce_gradient: size mismatch");
    if (!shared_amplitude_) return grad_theta;
    const int nf = n_components();
    Eigen::VectorXd g(n_free());
    for (int c = 0; c < n_u_; ++c) {
        double sum = 0.0;
        for (int l = 0; l < nf; ++l) sum += grad_theta[amp_index(l, c)];
        g[c] = sum;
    }
    g.tail(nf * n_u_) = grad_theta.tail(nf * n_u_);
    return g;
}

Eigen::VectorXd InputSignal::project(const Eigen::VectorXd& theta) const {
    if (theta.size() != n_theta()) throw InvalidArgument("project: size mismatch");
    Eigen::VectorXd out = theta;
    if (shared_amplitude_) {
        const int nf = n_components();
        for (int c = 0; c < n_u_; ++c) {
            bool tied = true;
            for (int l = 1; l < nf; ++l) tied = tied && out[amp_index(l, c)] == out[amp_index(0, c)];
            if (tied) continue;
            double sum = 0.0;
            for (int l = 0; l < nf; ++l) sum += out[amp_index(l, c)];
            const double mean = sum / nf;
            for (int l = 0; l < nf; ++l) out[amp_index(l, c)] = mean;
        }
    }
    return out.cwiseMax(lower_).cwiseMin(upper_);
}

InputSignal project_theta(const InputSignal& sig) { return sig.with_theta(sig.project(sig.theta())); }

InputSignal schroeder_multisine(int n_f, double amplitude, std::vector<int> bins,
                                double f0_over_fs, long first, long last, double gain) {
    if (n_f < 1) throw InvalidArgument("schroeder_multisine: n_f must be >= 1");
    if (static_cast<int>(bins.size()) != n_f)
        throw InvalidArgument("schroeder_multisine: " + std::to_string(bins.size()) +
                              " bins given for n_f = " + std::to_string(n_f));
    Eigen::VectorXd phases(n_f);
    for (int l = 0; l < n_f; ++l)
        phases[l] = -std::numbers::pi * static_cast<double>(l) * static_cast<double>(l - 1) / n_f;
    auto sig = InputSignal::multisine(1, std::move(bins), f0_over_fs,
                                      Eigen::VectorXd::Constant(n_f, amplitude), phases, first,
                                      last);
    sig.set_shared_amplitude(true);
    sig.set_gain(gain);
    return sig;
}

std::vector<int> bin_range(int k_min, int k_max) {
    if (k_max < k_min) throw InvalidArgument("bin_range: k_max < k_min");
    std::vector<int> bins;
    for (int k = k_min; k <= k_max; ++k) bins.push_back(k);
    return bins;
}

void write_signal_csv(std::ostream& os, const InputSignal& sig, long first, long last) {
    os << "k";
    for (int c = 0; c < sig.n_u(); ++c) os << ",u" << c + 1;
    os << '\n';
    const auto old = os.precision(17);
    for (long k = first; k <= last; ++k) {
        const auto u = sig.evaluate(k);
        os << k;
        for (int c = 0; c < sig.n_u(); ++c) os << ',' << u[c];
        os << '\n';
    }
    os.precision(old);
}

}  // namespace sfid
