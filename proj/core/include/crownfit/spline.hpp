#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "crownfit/mesh.hpp"

namespace crownfit {

using Vec2 = Eigen::Vector2d;

/// Natural cubic spline through 2-D points, parameterised by cumulative chord
/// length (t_0 = 0, t_i = t_{i-1} + |p_i - p_{i-1}|).
class ArchSpline {
public:
    /// Uses the (x, y) of each point; z is ignored. Throws Argument for fewer
    /// than three points and Degenerate for coincident consecutive points.
    static ArchSpline fit(std::span<const Vec3> ordered_points);

    double t_min() const { return knots_.front(); }
    double t_max() const { return knots_.back(); }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<Vec2>& points() const { return points_; }

    Vec2 value(double t) const;
    Vec2 derivative(double t) const;
    Vec2 second_derivative(double t) const;

    /// Parameter of the closest curve point to `p`; `clamped` is set when the
    /// foot point falls at an end of the parameter range.
    double closest_parameter(const Vec2& p, bool* clamped = nullptr) const;

    /// Mean of the interpolated points.
    Vec2 centroid() const;

private:
    std::size_t segment(double t) const;

    std::vector<double> knots_;
    std::vector<Vec2> points_;
    std::vector<Vec2> second_;  // second derivatives at the knots (natural: 0 at ends)
};

ArchSpline fit_arch_spline(std::span<const Vec3> ordered_centroids);

}  // namespace crownfit
