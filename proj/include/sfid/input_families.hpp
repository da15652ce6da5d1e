#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sfid {

enum class InputFamily { free_form, multisine, piecewise_constant };

std::string to_string(InputFamily family);
InputFamily input_family_from_string(const std::string& name);

// A parameterized input u(k, theta) over an integer horizon [first, last].
//
// Parameter layouts (n_u channels, channel index fastest):
//   free_form           theta[(k - first) * n_u + c] = u_c(k)
//   multisine           [A_{l,c}]_{l,c} followed by [phi_{l,c}]_{l,c}
//   piecewise_constant  [A_{l,c}]_{l,c}; switching instants are fixed
//
// Multisine: u_c(k) = g * sum_l A_{l,c} sin(2 pi bin_l (f0/fs) k + phi_{l,c}),
// with a fixed output gain g (1 unless set).
// Piecewise: u_c(k) = A_{l,c} for p_l <= k < p_{l+1}, zero outside all windows.
//
// With `shared_amplitude` (multisine only) every A_{l,c} of a channel is one
// tied parameter; the free-parameter view (`reduce`/`expand`) exposes it as a
// single coordinate.
class InputSignal {
public:
    // Empty free-form signal; use the named constructors.
    InputSignal() = default;

    static InputSignal free_form(int n_u, long first, long length, Eigen::VectorXd theta,
                                 double lower = -kInf, double upper = kInf);

    static InputSignal multisine(int n_u, std::vector<int> bins, double f0_over_fs,
                                 Eigen::VectorXd amplitudes, Eigen::VectorXd phases, long first,
                                 long last);

    static InputSignal piecewise_constant(int n_u, std::vector<long> switching,
                                          Eigen::VectorXd amplitudes, long first, long last);

    InputFamily family() const { return family_; }
    int n_u() const { return n_u_; }
    Eigen::Index n_theta() const { return theta_.size(); }
    long first() const { return first_; }
    long last() const { return last_; }

    const Eigen::VectorXd& theta() const { return theta_; }
    const Eigen::VectorXd& lower() const { return lower_; }
    const Eigen::VectorXd& upper() const { return upper_; }

    // Same metadata, new parameters. Throws on a size mismatch.
    InputSignal with_theta(Eigen::VectorXd theta) const;

    void set_bounds(Eigen::VectorXd lower, Eigen::VectorXd upper);
    // Multisine helpers: same bound for every amplitude / every phase.
    void set_amplitude_bounds(double lower, double upper);
    void set_phase_bounds(double lower, double upper);

    // Multisine output gain; not a decision variable.
    void set_gain(double gain);
    double gain() const { return gain_; }

    void set_shared_amplitude(bool shared);
    bool shared_amplitude() const { return shared_amplitude_; }

    const std::vector<int>& bins() const { return bins_; }
    double f0_over_fs() const { return f0_over_fs_; }
    int n_components() const { return static_cast<int>(bins_.size()); }
    const std::vector<long>& switching() const { return switching_; }

    // Piecewise: N_p amplitude levels + (N_p + 1) switching instants, the
    // count of the fully parameterized form. n_theta() counts only the
    // amplitudes, which are the decision variables.
    Eigen::Index full_parameter_count() const;

    bool in_horizon(long k) const { return k >= first_ && k <= last_; }

    Eigen::VectorXd evaluate(long k) const;
    // n_u x n_theta.
    Eigen::MatrixXd theta_jacobian(long k) const;

    // Free-parameter view used by the optimizer.
    Eigen::Index n_free() const;
    Eigen::VectorXd reduce(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd expand(const Eigen::VectorXd& free) const;
    // Chain rule for expand(): gradient over theta -> gradient over free params.
    Eigen::VectorXd reduce_gradient(const Eigen::VectorXd& grad_theta) const;

    // Ties shared amplitudes to their mean, then clips to bounds.
    Eigen::VectorXd project(const Eigen::VectorXd& theta) const;

    static constexpr double kInf = std::numeric_limits<double>::infinity();

private:
    void check_k(long k) const;
    Eigen::Index amp_index(int l, int c) const { return l * n_u_ + c; }
    Eigen::Index phase_index(int l, int c) const { return (n_components() + l) * n_u_ + c; }
    double angle(int l, long k) const;

    InputFamily family_ = InputFamily::free_form;
    int n_u_ = 1;
    long first_ = 0;
    long last_ = 0;
    Eigen::VectorXd theta_;
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;

    std::vector<int> bins_;
    double f0_over_fs_ = 0.0;
    double gain_ = 1.0;
    long period_ = 0;  // 1 / f0_over_fs when that is an integer, else 0
    bool shared_amplitude_ = false;

    std::vector<long> switching_;
};

// The signal with its parameters projected onto the bounds.
InputSignal project_theta(const InputSignal& sig);

// Multisine with a common amplitude and Schroeder phases
// phi_l = -pi l (l - 1) / n_f, l = 0..n_f-1, over `bins` (size n_f).
InputSignal schroeder_multisine(int n_f, double amplitude, std::vector<int> bins,
                                double f0_over_fs, long first, long last, double gain = 1.0);

// Consecutive integer bins k_min..k_max.
std::vector<int> bin_range(int k_min, int k_max);

// CSV with columns k,u1..u_nu over [first, last].
void write_signal_csv(std::ostream& os, const InputSignal& sig, long first, long last);

}  // namespace sfid
