#include "crownfit/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crownfit {

ArchSpline ArchSpline::fit(std::span<const Vec3> ordered_points) {
    const std::size_t n = ordered_points.size();
    if (n < 3) throw Error(ErrorKind::Argument, "fit_arch_spline: at least 3 centroids are required");
    ArchSpline s;
    s.points_.reserve(n);
    s.knots_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = ordered_points[i].head<2>();
        if (!p.allFinite()) throw Error(ErrorKind::Argument, "fit_arch_spline: non-finite centroid");
        if (i == 0) {
            s.knots_.push_back(0.0);
        } else {
            const double h = (p - s.points_.back()).norm();
            if (h == 0.0) throw Error(ErrorKind::Degenerate, "fit_arch_spline: duplicate consecutive centroids");
            s.knots_.push_back(s.knots_.back() + h);
        }
        s.points_.push_back(p);
    }

    // Natural boundary conditions; Thomas algorithm on the interior knots.
    s.second_.assign(n, Vec2::Zero());
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), lower(m);
    std::vector<Vec2> rhs(m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = k + 1;
        const double h0 = s.knots_[i] - s.knots_[i - 1];
        const double h1 = s.knots_[i + 1] - s.knots_[i];
        lower[k] = h0;
        diag[k] = 2.0 * (h0 + h1);
        upper[k] = h1;
        rhs[k] = 6.0 * ((s.points_[i + 1] - s.points_[i]) / h1 - (s.points_[i] - s.points_[i - 1]) / h0);
    }
    for (std::size_t k = 1; k < m; ++k) {
        const double w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    for (std::size_t k = m; k-- > 0;) {
        Vec2 v = rhs[k];
        if (k + 1 < m) v -= upper[k] * s.second_[k + 2];
        s.second_[k + 1] = v / diag[k];
    }
    return s;
}

std::size_t ArchSpline::segment(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t i = it == knots_.begin() ? 0 : std::size_t(it - knots_.begin()) - 1;
    return std::min(i, knots_.size() - 2);
}

Vec2 ArchSpline::value(double t) const {
    const std::size_t i = segment(t);
    if (t == knots_[i]) return points_[i];
    if (t == knots_[i + 1]) return points_[i + 1];
    const double h = knots_[i + 1] - knots_[i];
    const double a = knots_[i + 1] - t, b = t - knots_[i];
    const Vec2& m0 = second_[i];
    const Vec2& m1 = second_[i + 1];
    return m0 * (a * a * a) / (6 * h) + m1 * (b * b * b) / (6 * h) + (points_[i] / h - m0 * h / 6) * a +
           (points_[i + 1] / h - m1 * h / 6) * b;
}

Vec2 ArchSpline::derivative(double t) const {
    const std::size_t i = segment(t);
    const double h = knots_[i + 1] - knots_[i];
    const double a = knots_[i + 1] - t, b = t - knots_[i];
    const Vec2& m0 = second_[i];
    const Vec2& m1 = second_[i + 1];
    return -m0 * (a * a) / (2 * h) + m1 * (b * b) / (2 * h) + (points_[i + 1] - points_[i]) / h - (m1 - m0) * h / 6;
}

Vec2 ArchSpline::second_derivative(double t) const {
    const std::size_t i = segment(t);
    const double h = knots_[i + 1] - knots_[i];
    return (second_[i] * (knots_[i + 1] - t) + second_[i + 1] * (t - knots_[i])) / h;
}

Vec2 ArchSpline::centroid() const {
    Vec2 c = Vec2::Zero();
    for (const auto& p : points_) c += p;
    return c / double(points_.size());
}

double ArchSpline::closest_parameter(const Vec2& p, bool* clamped) const {
    constexpr int kSamples = 64;
    double best_t = knots_.front();
    double best_d = std::numeric_limits<double>::infinity();
    double step = 0.0;
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
        const double h = (knots_[i + 1] - knots_[i]) / kSamples;
        for (int k = 0; k <= kSamples; ++k) {
            const double t = knots_[i] + h * k;
            const double d = (value(t) - p).squaredNorm();
            if (d < best_d) best_d = d, best_t = t, step = h;
        }
    }
    // Golden-section refinement inside the bracketing samples.
    double lo = std::max(t_min(), best_t - step), hi = std::min(t_max(), best_t + step);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double t) { return (value(t) - p).squaredNorm(); };
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 100 && hi - lo > 1e-13 * (1.0 + t_max()); ++it) {
        if (f1 < f2) {
            hi = x2, x2 = x1, f2 = f1;
            x1 = hi - g * (hi - lo), f1 = f(x1);
        } else {
            lo = x1, x1 = x2, f1 = f2;
            x2 = lo + g * (hi - lo), f2 = f(x2);
        }
    }
    double t = 0.5 * (lo + hi);
    for (double cand : {best_t, t_min(), t_max()})
        if (f(cand) < f(t)) t = cand;

    if (clamped != nullptr) {
        *clamped = false;
        const double tol = 1e-9 * (1.0 + t_max());
        if (t <= t_min() + tol) *clamped = (p - value(t_min())).dot(derivative(t_min())) < -1e-9;
        else if (t >= t_max() - tol) *clamped = (p - value(t_max())).dot(derivative(t_max())) > 1e-9;
    }
    return t;
}

ArchSpline fit_arch_spline(std::span<const Vec3> ordered_centroids) { return ArchSpline::fit(ordered_centroids); }

}  // namespace crownfit
