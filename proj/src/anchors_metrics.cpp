#include "sfid/anchors_metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "sfid/errors.hpp"

namespace sfid {

void RegionOfInterest::validate() const {
    if (lower.size() == 0 || lower.size() != upper.size())
        throw InvalidArgument("region: lower and upper must be non-empty and the same size");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
            throw InvalidArgument("region: need finite lower < upper in dimension " +
                                  std::to_string(i));
    }
}

bool RegionOfInterest::contains(const JointPoint& z, double tol) const {
    if (z.size() != dim()) return false;
    for (Eigen::Index i = 0; i < dim(); ++i)
        if (z[i] < lower[i] - tol || z[i] > upper[i] + tol) return false;
    return true;
}

void MetricWeight::validate() const {
    if (q.size() == 0) throw InvalidArgument("metric weight is empty");
    for (Eigen::Index i = 0; i < q.size(); ++i)
        if (!(q[i] > 0.0) || !std::isfinite(q[i]))
            throw InvalidArgument("metric weight entries must be positive");
}

Vector grid_axis(double lo, double hi, int count) {
    if (count < 2) throw InvalidArgument("grid axis needs at least 2 points, got " +
                                         std::to_string(count));
    Vector axis(count);
    const double step = (hi - lo) / (count - 1);
    for (int i = 0; i < count; ++i) axis[i] = lo + step * i;
    axis[count - 1] = hi;
    return axis;
}

Matrix cartesian_grid(const RegionOfInterest& region, const std::vector<int>& counts) {
    region.validate();
    const auto dim = region.dim();
    if (static_cast<Eigen::Index>(counts.size()) != dim)
        throw InvalidArgument("grid: " + std::to_string(counts.size()) + " counts for a " +
                              std::to_string(dim) + "-dimensional region");
    std::vector<Vector> axes;
    Eigen::Index total = 1;
    for (Eigen::Index d = 0; d < dim; ++d) {
        axes.push_back(grid_axis(region.lower[d], region.upper[d], counts[static_cast<std::size_t>(d)]));
        total *= counts[static_cast<std::size_t>(d)];
    }
    Matrix pts(total, dim);
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    for (Eigen::Index r = 0; r < total; ++r) {
        for (Eigen::Index d = 0; d < dim; ++d) pts(r, d) = axes[static_cast<std::size_t>(d)][idx[static_cast<std::size_t>(d)]];
        for (Eigen::Index d = dim - 1; d >= 0; --d) {
            auto& i = idx[static_cast<std::size_t>(d)];
            if (++i < counts[static_cast<std::size_t>(d)]) break;
            i = 0;
        }
    }
    return pts;
}

AnchorSet uniform_anchor_grid(const RegionOfInterest& region, const std::vector<int>& points_per_dim,
                              const MetricWeight& metric, int eval_points_per_dim) {
    for (int c : points_per_dim)
        if (c < 2) throw InvalidArgument("anchor grid needs at least 2 points per dimension");
    AnchorSet anchors;
    anchors.points = cartesian_grid(region, points_per_dim);
    anchors.epsilon = anchor_epsilon(anchors, region, metric, eval_points_per_dim);
    return anchors;
}

EmptyBall largest_empty_ball(const Matrix& data, const RegionOfInterest& region,
                             const MetricWeight& metric, int eval_points_per_dim) {
    region.validate();
    metric.validate();
    if (data.rows() == 0) throw EmptyDataset("filling distance of an empty dataset");
    const auto dim = region.dim();
    if (data.cols() != dim || metric.q.size() != dim)
        throw InvalidArgument("filling distance: dataset, region and metric dimensions differ");
    if (eval_points_per_dim < 2)
        throw InvalidArgument("filling distance needs at least 2 evaluation points per dimension");

    const Vector w = metric.q.cwiseSqrt();
    const Eigen::Index n = data.rows();

    // Sort the scaled data along the axis of widest spread; a sweep outward
    // from each query's position stops once that axis alone exceeds the best.
    Matrix scaled = data * w.asDiagonal();
    Eigen::Index axis = 0;
    double best_spread = -1.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double spread = scaled.col(d).maxCoeff() - scaled.col(d).minCoeff();
        if (spread > best_spread) {
            best_spread = spread;
            axis = d;
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return scaled(a, axis) < scaled(b, axis);
    });
    // Row-major copy, sorted: pts[i * dim + d].
    std::vector<double> pts(static_cast<std::size_t>(n * dim));
    std::vector<double> key(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index d = 0; d < dim; ++d)
            pts[static_cast<std::size_t>(i * dim + d)] = scaled(order[static_cast<std::size_t>(i)], d);
        key[static_cast<std::size_t>(i)] = scaled(order[static_cast<std::size_t>(i)], axis);
    }

    std::vector<Vector> axes;
    Eigen::Index total = 1;
    for (Eigen::Index d = 0; d < dim; ++d) {
        axes.push_back(grid_axis(region.lower[d], region.upper[d], eval_points_per_dim));
        total *= eval_points_per_dim;
    }

    auto dist2 = [&](const double* e, Eigen::Index i) {
        const double* p = &pts[static_cast<std::size_t>(i * dim)];
        double s = 0.0;
        for (Eigen::Index d = 0; d < dim; ++d) {
            const double diff = e[d] - p[d];
            s += diff * diff;
        }
        return s;
    };

    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    std::vector<double> e(static_cast<std::size_t>(dim));
    double best_max = -1.0;
    Eigen::Index best_index = 0;
    for (Eigen::Index r = 0; r < total; ++r) {
        for (Eigen::Index d = 0; d < dim; ++d)
            e[static_cast<std::size_t>(d)] = axes[static_cast<std::size_t>(d)][idx[static_cast<std::size_t>(d)]] * w[d];
        const double ek = e[static_cast<std::size_t>(axis)];
        const auto start = static_cast<Eigen::Index>(
            std::lower_bound(key.begin(), key.end(), ek) - key.begin());
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = start; i < n; ++i) {
            const double gap = key[static_cast<std::size_t>(i)] - ek;
            if (gap * gap >= best) break;
            best = std::min(best, dist2(e.data(), i));
        }
        for (Eigen::Index i = start - 1; i >= 0; --i) {
            const double gap = ek - key[static_cast<std::size_t>(i)];
            if (gap * gap >= best) break;
            best = std::min(best, dist2(e.data(), i));
        }
        if (best > best_max) {
            best_max = best;
            best_index = r;
        }
        for (Eigen::Index d = dim - 1; d >= 0; --d) {
            auto& i = idx[static_cast<std::size_t>(d)];
            if (++i < eval_points_per_dim) break;
            i = 0;
        }
    }

    EmptyBall ball;
    ball.radius = std::sqrt(best_max);
    ball.grid_index = best_index;
    ball.center.resize(dim);
    Eigen::Index rem = best_index;
    for (Eigen::Index d = dim - 1; d >= 0; --d) {
        ball.center[d] = axes[static_cast<std::size_t>(d)][rem % eval_points_per_dim];
        rem /= eval_points_per_dim;
    }
    return ball;
}

double filling_distance(const Matrix& data, const RegionOfInterest& region,
                        const MetricWeight& metric, int eval_points_per_dim) {
    return largest_empty_ball(data, region, metric, eval_points_per_dim).radius;
}

double anchor_epsilon(const AnchorSet& anchors, const RegionOfInterest& region,
                      const MetricWeight& metric, int eval_points_per_dim) {
    for (Eigen::Index i = 0; i < anchors.size(); ++i)
        if (!region.contains(anchors.points.row(i).transpose(), 1e-12))
            throw InvalidArgument("anchor " + std::to_string(i) + " lies outside the region");
    return filling_distance(anchors.points, region, metric, eval_points_per_dim);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_double(std::string field, double& value) {
    const auto b = field.find_first_not_of(" \t");
    if (b == std::string::npos) return false;
    const auto e = field.find_last_not_of(" \t");
    field = field.substr(b, e - b + 1);
    if (!field.empty() && field[0] == '+') field.erase(0, 1);
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

}  // namespace

Matrix read_points_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    Eigen::Index width = -1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_fields(line);
        std::vector<double> row;
        bool numeric = true;
        for (const auto& f : fields) {
            double v = 0.0;
            if (!parse_double(f, v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty() && width < 0) {
                width = static_cast<Eigen::Index>(fields.size());  // header
                continue;
            }
            throw ParseError(line_no, "non-numeric field in '" + line + "'");
        }
        if (width >= 0 && static_cast<Eigen::Index>(row.size()) != width)
            throw ParseError(line_no, "expected " + std::to_string(width) + " columns, found " +
                                          std::to_string(row.size()));
        width = static_cast<Eigen::Index>(row.size());
        for (double v : row)
            if (!std::isfinite(v)) throw ParseError(line_no, "non-finite value");
        rows.push_back(std::move(row));
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : width);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

void write_points_csv(std::ostream& os, const Matrix& points, const std::vector<std::string>& header) {
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
        os << '\n';
    }
    const auto old = os.precision(17);
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
        for (Eigen::Index c = 0; c < points.cols(); ++c) os << (c ? "," : "") << points(r, c);
        os << '\n';
    }
    os.precision(old);
}

}  // namespace sfid
