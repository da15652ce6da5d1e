#pragma once

#include <optional>

#include <Eigen/Dense>

namespace sfid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A point z = vec(x, u) of the joint state-input space, state first.
using JointPoint = Eigen::VectorXd;

// Squared-exponential ARD kernel hyperparameters.
struct KernelConfig {
    double signal_variance = 1.0;  // sigma_f^2
    Vector lengthscales;           // sqrt of the diagonal of Lambda
    double jitter = 0.0;           // added to the Gram diagonal

    // Default jitter used by the design problems: 1e-8 * sigma_f^2.
    static double default_jitter(double signal_variance) { return 1e-8 * signal_variance; }

    static KernelConfig with_default_jitter(double signal_variance, Vector lengthscales) {
        return {signal_variance, std::move(lengthscales), default_jitter(signal_variance)};
    }

    Eigen::Index dim() const { return lengthscales.size(); }

    // Throws InvalidArgument when a hyperparameter is out of its domain.
    void validate() const;
};

// Rows are points. `theta` records the generating parameters when known.
struct Dataset {
    Matrix points;
    std::optional<Vector> theta;

    Dataset() = default;
    explicit Dataset(Matrix pts, std::optional<Vector> th = std::nullopt)
        : points(std::move(pts)), theta(std::move(th)) {}

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
    bool empty() const { return points.rows() == 0; }
    JointPoint point(Eigen::Index i) const { return points.row(i).transpose(); }

    // Copy with one more point appended.
    Dataset with_point(const JointPoint& z) const;
};

struct AnchorSet {
    Matrix points;        // M x n_z
    double epsilon = 0.0; // filling distance of the anchors themselves

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
};

double seard_kernel(const JointPoint& a, const JointPoint& b, const KernelConfig& cfg);

// K_ij = k(z_i, z_j) + jitter * delta_ij. Throws EmptyDataset for N = 0.
Matrix gram_matrix(const Dataset& data, const KernelConfig& cfg);

// Cross covariance k(query_i, data_j), one row per query.
Matrix cross_covariance(const Matrix& queries, const Matrix& data, const KernelConfig& cfg);

// Posterior variance before clamping; exposed for the clamping invariant.
double posterior_variance_unclamped(const JointPoint& query, const Dataset& data,
                                    const KernelConfig& cfg);

// Var(q | Z) clamped into [0, k(q,q)]. Empty data gives the prior variance.
double posterior_variance(const JointPoint& query, const Dataset& data, const KernelConfig& cfg);

// mu(q | Z, H) = k(q, Z) K^-1 H. Only used to cross-check the GP algebra.
double posterior_mean(const JointPoint& query, const Dataset& data, const Vector& targets,
                      const KernelConfig& cfg);

// Space-filling cost: mean posterior variance over the anchors.
double cost_v(const Dataset& data, const AnchorSet& anchors, const KernelConfig& cfg);

struct CostGradient {
    double cost = 0.0;
    Matrix d_points;  // dV/dz_j, N x n_z
};

// cost_v together with its gradient with respect to every data point.
CostGradient cost_v_with_gradient(const Dataset& data, const AnchorSet& anchors,
                                  const KernelConfig& cfg);

}  // namespace sfid
