#include "sfid/gp_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfid/errors.hpp"

namespace sfid {

namespace {

void check_dim(Eigen::Index got, const KernelConfig& cfg, const char* what) {
    if (got != cfg.dim()) {
        throw InvalidArgument(std::string(what) + ": dimension " + std::to_string(got) +
                              " does not match kernel dimension " + std::to_string(cfg.dim()));
    }
}

// Every kernel entry in this file goes through here, so identical inputs
// give identical bits regardless of which routine asked. (a-b)^2 == (b-a)^2
// exactly, which makes the kernel symmetric to the last bit.
template <typename A, typename B>
inline double kernel_eval(const A& a, const B& b, const Vector& inv_l, double sf2) {
    double r2 = 0.0;
    for (Eigen::Index k = 0; k < inv_l.size(); ++k) {
        const double d = (a[k] - b[k]) * inv_l[k];
        r2 += d * d;
    }
    return sf2 * std::exp(-0.5 * r2);
}

Vector inverse_lengthscales(const KernelConfig& cfg) { return cfg.lengthscales.cwiseInverse(); }

Eigen::LLT<Matrix> factorize(const Dataset& data, const KernelConfig& cfg) {
    Eigen::LLT<Matrix> llt(gram_matrix(data, cfg));
    if (llt.info() != Eigen::Success) {
        throw IllConditionedGram("Cholesky of the Gram matrix failed (N = " +
                                 std::to_string(data.size()) + ", jitter = " +
                                 std::to_string(cfg.jitter) +
                                 "); coincident points need a positive jitter");
    }
    return llt;
}

void check_anchor_inputs(const Dataset& data, const AnchorSet& anchors, const KernelConfig& cfg) {
    check_dim(anchors.dim(), cfg, "cost_v anchors");
    if (!data.empty()) check_dim(data.dim(), cfg, "cost_v dataset");
    if (anchors.size() == 0) throw InvalidArgument("cost_v: anchor set is empty");
}

}  // namespace

void KernelConfig::validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
        throw InvalidArgument("kernel signal variance must be positive and finite");
    if (lengthscales.size() == 0) throw InvalidArgument("kernel needs at least one lengthscale");
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
        if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i]))
            throw InvalidArgument("kernel lengthscale " + std::to_string(i) + " must be positive");
    }
    if (!(jitter >= 0.0) || !std::isfinite(jitter))
        throw InvalidArgument("kernel jitter must be non-negative");
}

Dataset Dataset::with_point(const JointPoint& z) const {
    if (!empty() && z.size() != dim()) throw InvalidArgument("appended point has wrong dimension");
    Matrix pts(size() + 1, z.size());
    if (!empty()) pts.topRows(size()) = points;
    pts.row(size()) = z.transpose();
    return Dataset(std::move(pts));
}

double seard_kernel(const JointPoint& a, const JointPoint& b, const KernelConfig& cfg) {
    check_dim(a.size(), cfg, "seard_kernel");
    check_dim(b.size(), cfg, "seard_kernel");
    return kernel_eval(a, b, inverse_lengthscales(cfg), cfg.signal_variance);
}

Matrix gram_matrix(const Dataset& data, const KernelConfig& cfg) {
    if (data.empty()) throw EmptyDataset("gram_matrix: dataset is empty");
    check_dim(data.dim(), cfg, "gram_matrix");
    const Vector inv_l = inverse_lengthscales(cfg);
    const Eigen::Index n = data.size();
    Matrix k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        k(j, j) = cfg.signal_variance + cfg.jitter;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v =
                kernel_eval(data.points.row(i), data.points.row(j), inv_l, cfg.signal_variance);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

Matrix cross_covariance(const Matrix& queries, const Matrix& data, const KernelConfig& cfg) {
    check_dim(queries.cols(), cfg, "cross_covariance");
    check_dim(data.cols(), cfg, "cross_covariance");
    const Vector inv_l = inverse_lengthscales(cfg);
    Matrix out(queries.rows(), data.rows());
    for (Eigen::Index j = 0; j < data.rows(); ++j)
        for (Eigen::Index i = 0; i < queries.rows(); ++i)
            out(i, j) = kernel_eval(queries.row(i), data.row(j), inv_l, cfg.signal_variance);
    return out;
}

double posterior_variance_unclamped(const JointPoint& query, const Dataset& data,
                                    const KernelConfig& cfg) {
    check_dim(query.size(), cfg, "posterior_variance");
    const double prior = cfg.signal_variance;
    if (data.empty()) return prior;
    check_dim(data.dim(), cfg, "posterior_variance");
    const auto llt = factorize(data, cfg);
    Vector k = cross_covariance(query.transpose(), data.points, cfg).transpose();
    llt.matrixL().solveInPlace(k);
    return prior - k.squaredNorm();
}

double posterior_variance(const JointPoint& query, const Dataset& data, const KernelConfig& cfg) {
    return std::clamp(posterior_variance_unclamped(query, data, cfg), 0.0, cfg.signal_variance);
}

double posterior_mean(const JointPoint& query, const Dataset& data, const Vector& targets,
                      const KernelConfig& cfg) {
    check_dim(query.size(), cfg, "posterior_mean");
    if (data.empty()) throw EmptyDataset("posterior_mean: dataset is empty");
    if (targets.size() != data.size())
        throw InvalidArgument("posterior_mean: " + std::to_string(targets.size()) +
                              " targets for " + std::to_string(data.size()) + " points");
    const auto llt = factorize(data, cfg);
    const Vector weights = llt.solve(targets);
    const Vector k = cross_covariance(query.transpose(), data.points, cfg).transpose();
    return k.dot(weights);
}

double cost_v(const Dataset& data, const AnchorSet& anchors, const KernelConfig& cfg) {
    check_anchor_inputs(data, anchors, cfg);
    const double prior = cfg.signal_variance;
    if (data.empty()) return prior;
    const auto llt = factorize(data, cfg);
    // Column i holds L^-1 k(Z, a_i).
    Matrix b = cross_covariance(data.points, anchors.points, cfg);
    llt.matrixL().solveInPlace(b);
    // Anchors are summed in index order so the result is reproducible.
    double sum = 0.0;
    for (Eigen::Index i = 0; i < b.cols(); ++i)
        sum += std::clamp(prior - b.col(i).squaredNorm(), 0.0, prior);
    return sum / static_cast<double>(anchors.size());
}

CostGradient cost_v_with_gradient(const Dataset& data, const AnchorSet& anchors,
                                  const KernelConfig& cfg) {
    check_anchor_inputs(data, anchors, cfg);
    const double prior = cfg.signal_variance;
    const Eigen::Index n = data.size();
    const Eigen::Index m = anchors.size();
    const Eigen::Index d = cfg.dim();
    CostGradient out;
    out.d_points = Matrix::Zero(n, d);
    if (data.empty()) {
        out.cost = prior;
        return out;
    }

    const auto llt = factorize(data, cfg);
    const Matrix kc = cross_covariance(data.points, anchors.points, cfg);  // N x M
    Matrix b = kc;
    llt.matrixL().solveInPlace(b);

    double sum = 0.0;
    std::vector<bool> active(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        const double v = prior - b.col(i).squaredNorm();
        active[static_cast<std::size_t>(i)] = v > 0.0;
        sum += std::clamp(v, 0.0, prior);
    }
    out.cost = sum / static_cast<double>(m);

    // alpha_i = K^-1 k_i. Clamped anchors have zero derivative.
    Matrix alpha = std::move(b);
    llt.matrixU().solveInPlace(alpha);
    for (Eigen::Index i = 0; i < m; ++i)
        if (!active[static_cast<std::size_t>(i)]) alpha.col(i).setZero();

    // dV = (1/M) sum_i [ -2 alpha_i' dk_i + alpha_i' dK alpha_i ].
    const double inv_m = 1.0 / static_cast<double>(m);
    Matrix gk(n, n);
    gk.setZero();
    gk.selfadjointView<Eigen::Lower>().rankUpdate(alpha, inv_m);

    const Vector inv_l2 = cfg.lengthscales.cwiseProduct(cfg.lengthscales).cwiseInverse();
    const Vector inv_l = inverse_lengthscales(cfg);

    // dk(z_j, y)/dz_j = -k(z_j, y) (z_j - y) / l^2
    for (Eigen::Index j = 0; j < n; ++j) {
        auto grad = out.d_points.row(j);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double w = -2.0 * inv_m * alpha(j, i) * kc(j, i);
            if (w == 0.0) continue;
            for (Eigen::Index k = 0; k < d; ++k)
                grad[k] -= w * (data.points(j, k) - anchors.points(i, k));
        }
    }
    // The Gram term: each off-diagonal K_jl moves with both z_j and z_l.
    for (Eigen::Index l = 0; l < n; ++l) {
        for (Eigen::Index j = l + 1; j < n; ++j) {
            const double kjl =
                kernel_eval(data.points.row(j), data.points.row(l), inv_l, prior);
            const double w = 2.0 * gk(j, l) * kjl;
            if (w == 0.0) continue;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double diff = data.points(j, k) - data.points(l, k);
                out.d_points(j, k) -= w * diff;
                out.d_points(l, k) += w * diff;
            }
        }
    }
    for (Eigen::Index k = 0; k < d; ++k) out.d_points.col(k) *= inv_l2[k];
    return out;
}

}  // namespace sfid
