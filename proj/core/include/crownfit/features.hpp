#pragma once

#include <array>
#include <vector>

#include "crownfit/mesh.hpp"

namespace crownfit {

/// Per-point 8-D descriptor: centred position, unit normal, polar radius and
/// azimuth in the XY (occlusal) plane.
struct PointFeature {
    Vec3 position;  // relative to the cloud centroid
    Vec3 normal;
    double radius = 0.0;   // sqrt(x^2 + y^2)
    double azimuth = 0.0;  // atan2(y, x) in (-pi, pi], 0 at the origin

    std::array<double, 8> as_array() const {
        return {position.x(), position.y(), position.z(), normal.x(), normal.y(), normal.z(), radius, azimuth};
    }
};

enum class FeatureScaling {
    RawMillimetres,
    /// Positions and radius divided by the largest centred point distance.
    UnitSphere,
};

struct PointFeatures {
    std::vector<PointFeature> points;
    Vec3 centroid = Vec3::Zero();
    double scale = 1.0;  // divisor applied to positions (1 for raw mm)
};

/// Azimuth convention: atan2(y, x) mapped into (-pi, pi], with atan2(0, 0) := 0.
double azimuth_of(double x, double y);

PointFeatures compute_point_features(const PointCloud& cloud, FeatureScaling scaling = FeatureScaling::RawMillimetres);

inline constexpr int kFpfhBins = 11;
inline constexpr int kFpfhDims = 3 * kFpfhBins;
using FpfhHistogram = std::array<double, kFpfhDims>;

struct FpfhDescriptor {
    std::vector<FpfhHistogram> histograms;
    std::size_t points_without_neighbors = 0;
};

/// Darboux-frame pair features (alpha, phi, theta) for an oriented pair, with
/// source/target chosen so the source normal makes the smaller angle with the
/// connecting line. Returns false for coincident points or a degenerate frame.
bool pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2, double& f_theta, double& f_alpha,
                   double& f_phi);

/// Two-pass FPFH: SPFH over radius neighbours (each sub-histogram in percent),
/// then FPFH(p) = SPFH(p) + (1/k) * sum_k SPFH(p_k) / |p - p_k|, with each
/// 11-bin sub-histogram renormalised to sum to 100.
FpfhDescriptor compute_fpfh(const PointCloud& cloud, double radius, Warnings* warnings = nullptr);

}  // namespace crownfit
