#pragma once

#include <iosfwd>
#include <vector>

#include "sfid/gp_core.hpp"

namespace sfid {

// Axis-aligned box in canonical state-then-input order.
struct RegionOfInterest {
    Vector lower;
    Vector upper;

    Eigen::Index dim() const { return lower.size(); }
    void validate() const;
    bool contains(const JointPoint& z, double tol = 0.0) const;
};

// Diagonal weight Q of the normalized distance sqrt((a-b)' Q (a-b)).
struct MetricWeight {
    Vector q;

    static MetricWeight identity(Eigen::Index n) { return {Vector::Ones(n)}; }
    void validate() const;
};

inline constexpr int kDefaultEvalPointsPerDim = 100;

// Endpoint-inclusive points of the evaluation / anchor grids along one axis.
Vector grid_axis(double lo, double hi, int count);

// Cartesian product of endpoint-inclusive axes, first dimension slowest.
Matrix cartesian_grid(const RegionOfInterest& region, const std::vector<int>& counts);

// Anchors on a uniform grid; epsilon is the grid's own filling distance.
AnchorSet uniform_anchor_grid(const RegionOfInterest& region, const std::vector<int>& points_per_dim,
                              const MetricWeight& metric,
                              int eval_points_per_dim = kDefaultEvalPointsPerDim);

struct EmptyBall {
    JointPoint center;
    double radius = 0.0;
    Eigen::Index grid_index = 0;
};

// max over the evaluation grid of the Q-distance to the nearest data point,
// with the arg-max (lowest grid index on ties).
EmptyBall largest_empty_ball(const Matrix& data, const RegionOfInterest& region,
                             const MetricWeight& metric,
                             int eval_points_per_dim = kDefaultEvalPointsPerDim);

double filling_distance(const Matrix& data, const RegionOfInterest& region,
                        const MetricWeight& metric,
                        int eval_points_per_dim = kDefaultEvalPointsPerDim);

inline double filling_distance(const Dataset& data, const RegionOfInterest& region,
                               const MetricWeight& metric,
                               int eval_points_per_dim = kDefaultEvalPointsPerDim) {
    return filling_distance(data.points, region, metric, eval_points_per_dim);
}

double anchor_epsilon(const AnchorSet& anchors, const RegionOfInterest& region,
                      const MetricWeight& metric,
                      int eval_points_per_dim = kDefaultEvalPointsPerDim);

// One point per row, comma separated, optional non-numeric header line.
// Throws ParseError naming the offending line.
Matrix read_points_csv(std::istream& is);
void write_points_csv(std::ostream& os, const Matrix& points,
                      const std::vector<std::string>& header = {});

}  // namespace sfid
