#include "crownfit/features.hpp"

#include <algorithm>
#include <cmath>

#include "crownfit/spatial_index.hpp"

namespace crownfit {

double azimuth_of(double x, double y) {
    if (x == 0.0 && y == 0.0) return 0.0;
    const double a = std::atan2(y, x);
    return a == -M_PI ? M_PI : a;
}

PointFeatures compute_point_features(const PointCloud& cloud, FeatureScaling scaling) {
    if (!cloud.has_normals()) throw Error(ErrorKind::Argument, "compute_point_features: normals are required");
    validate(cloud);
    for (const auto& n : cloud.normals)
        if (std::abs(n.norm() - 1.0) > 1e-6) throw Error(ErrorKind::Argument, "compute_point_features: normals must be unit length");

    PointFeatures out;
    out.centroid = vertex_mean(cloud.points);
    if (scaling == FeatureScaling::UnitSphere) {
        double rmax = 0.0;
        for (const auto& p : cloud.points) rmax = std::max(rmax, (p - out.centroid).norm());
        out.scale = rmax > 0.0 ? rmax : 1.0;
    }
    out.points.resize(cloud.points.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        auto& f = out.points[i];
        f.position = (cloud.points[i] - out.centroid) / out.scale;
        f.normal = cloud.normals[i];
        f.radius = std::hypot(f.position.x(), f.position.y());
        f.azimuth = azimuth_of(f.position.x(), f.position.y());
    }
    return out;
}

bool pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2, double& f_theta, double& f_alpha,
                   double& f_phi) {
    Vec3 d = p2 - p1;
    const double len = d.norm();
    if (len == 0.0) return false;
    const double a1 = n1.dot(d) / len;
    const double a2 = n2.dot(d) / len;
    Vec3 u = n1, n_t = n2;
    if (std::acos(std::clamp(std::abs(a1), 0.0, 1.0)) > std::acos(std::clamp(std::abs(a2), 0.0, 1.0))) {
        u = n2;
        n_t = n1;
        d = -d;
        f_phi = -a2;
    } else {
        f_phi = a1;
    }
    Vec3 v = d.cross(u);
    const double vn = v.norm();
    if (vn == 0.0) return false;
    v /= vn;
    const Vec3 w = u.cross(v);
    f_alpha = v.dot(n_t);
    f_theta = std::atan2(w.dot(n_t), u.dot(n_t));
    return true;
}

namespace {

int bin_of(double value, double lo, double hi) {
    const int b = static_cast<int>(std::floor(kFpfhBins * (value - lo) / (hi - lo)));
    return std::clamp(b, 0, kFpfhBins - 1);
}

void normalize_subhistograms(FpfhHistogram& h) {
    for (int s = 0; s < 3; ++s) {
        double sum = 0.0;
        for (int b = 0; b < kFpfhBins; ++b) sum += h[s * kFpfhBins + b];
        if (sum > 0.0)
            for (int b = 0; b < kFpfhBins; ++b) h[s * kFpfhBins + b] *= 100.0 / sum;
    }
}

}  // namespace

FpfhDescriptor compute_fpfh(const PointCloud& cloud, double radius, Warnings* warnings) {
    if (!(radius > 0.0)) throw Error(ErrorKind::Argument, "compute_fpfh: radius must be > 0");
    if (!cloud.has_normals()) throw Error(ErrorKind::Argument, "compute_fpfh: normals are required");
    validate(cloud);
    const std::size_t n = cloud.size();
    FpfhDescriptor out;
    out.histograms.assign(n, FpfhHistogram{});
    if (n == 0) return out;

    const SpatialIndex index(cloud.points);
    std::vector<std::vector<Neighbor>> neighbors(n);
    std::vector<FpfhHistogram> spfh(n, FpfhHistogram{});
    std::vector<Neighbor> buf;
    for (std::size_t i = 0; i < n; ++i) {
        index.radius_into(cloud.points[i], radius, buf);
        auto& nb = neighbors[i];
        for (const auto& c : buf)
            if (c.index != i) nb.push_back(c);
        if (nb.empty()) continue;
        const double incr = 100.0 / double(nb.size());
        auto& h = spfh[i];
        for (const auto& c : nb) {
            double theta, alpha, phi;
            if (!pair_features(cloud.points[i], cloud.normals[i], cloud.points[c.index], cloud.normals[c.index], theta, alpha, phi))
                continue;
            h[bin_of(theta, -M_PI, M_PI)] += incr;
            h[kFpfhBins + bin_of(alpha, -1.0, 1.0)] += incr;
            h[2 * kFpfhBins + bin_of(phi, -1.0, 1.0)] += incr;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& nb = neighbors[i];
        if (nb.empty()) {
            ++out.points_without_neighbors;
            continue;
        }
        FpfhHistogram acc{};
        const double k = double(nb.size());
        for (const auto& c : nb) {
            const double dist = std::sqrt(c.distance_sq);
            if (dist == 0.0) continue;
            const double w = 1.0 / (k * dist);
            const auto& hs = spfh[c.index];
            for (int j = 0; j < kFpfhDims; ++j) acc[j] += w * hs[j];
        }
        auto& h = out.histograms[i];
        for (int j = 0; j < kFpfhDims; ++j) h[j] = spfh[i][j] + acc[j];
        normalize_subhistograms(h);
    }
    if (out.points_without_neighbors > 0)
        warn(warnings, std::to_string(out.points_without_neighbors) + " point(s) had no FPFH neighbours; zero histograms emitted");
    return out;
}

}  // namespace crownfit
