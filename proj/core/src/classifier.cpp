#include "crownfit/classifier.hpp"

#include "crownfit/spatial_index.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace crownfit {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Least-squares circle through the XY footprint (algebraic fit); its centre
/// stands in for the arch centre.
Eigen::Vector2d arch_center(const PointFeatures& f) {
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (const auto& p : f.points) {
        const Eigen::Vector3d row(p.position.x(), p.position.y(), 1.0);
        ata += row * row.transpose();
        atb -= row * p.position.head<2>().squaredNorm();
    }
    const Eigen::Vector3d c = ata.ldlt().solve(atb);
    return {-0.5 * c[0], -0.5 * c[1]};
}

struct ArcStats {
    double span_deg = 0.0;
    double mean_direction_deg = 0.0;  // relative to anterior (-y), + toward +x
    double resultant = 0.0;           // mean resultant length in [0, 1]
};

ArcStats arc_stats(const PointFeatures& f, const BaselineThresholds& th) {
    ArcStats out;
    const Eigen::Vector2d center = arch_center(f);
    if (!center.allFinite()) return out;
    const int bins = th.histogram_bins;
    std::vector<std::size_t> hist(bins, 0);
    Eigen::Vector2d resultant = Eigen::Vector2d::Zero();
    std::size_t n = 0;
    for (const auto& p : f.points) {
        const Eigen::Vector2d d = p.position.head<2>() - center;
        const double r = d.norm();
        if (!(r > 0.0)) continue;
        resultant += d / r;
        ++n;
        const int b = int(std::floor((azimuth_of(d.x(), d.y()) + M_PI) / (2 * M_PI) * bins));
        hist[std::clamp(b, 0, bins - 1)]++;
    }
    if (n == 0) return out;
    const double min_count = th.bin_mass_fraction * double(n);
    int longest = 0, run = 0, occupied = 0;
    for (int b = 0; b < bins; ++b) occupied += double(hist[b]) >= min_count;
    for (int k = 0; k < 2 * bins; ++k) {
        run = double(hist[k % bins]) < min_count ? run + 1 : 0;
        longest = std::max(longest, std::min(run, bins));
    }
    out.span_deg = occupied == 0 ? 0.0 : 360.0 * double(bins - longest) / bins;
    resultant /= double(n);
    out.resultant = resultant.norm();
    out.mean_direction_deg = std::atan2(resultant.x(), -resultant.y()) * 180.0 / M_PI;
    return out;
}

double z_skewness(const PointFeatures& f) {
    double m2 = 0.0, m3 = 0.0;
    for (const auto& p : f.points) {
        const double z = p.position.z();
        m2 += z * z;
        m3 += z * z * z;
    }
    const double n = double(f.points.size());
    m2 /= n;
    m3 /= n;
    return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

/// Distance from the footprint centroid to the nearest footprint point over the
/// RMS radius. A full arch wraps around an empty palate or tongue space, so its
/// centroid sits well clear of the mass; a segment's centroid lies inside it.
double hollowness(const PointFeatures& f) {
    std::vector<Vec3> flat;
    flat.reserve(f.points.size());
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : f.points) {
        flat.emplace_back(p.position.x(), p.position.y(), 0.0);
        mean += p.position.head<2>();
    }
    mean /= double(flat.size());
    double ms = 0.0;
    for (const auto& q : flat) ms += (q.head<2>() - mean).squaredNorm();
    const double rms = std::sqrt(ms / double(flat.size()));
    if (!(rms > 0.0)) return 0.0;
    const SpatialIndex index(flat);
    return std::sqrt(index.nearest(Vec3(mean.x(), mean.y(), 0.0)).distance_sq) / rms;
}

}  // namespace

Classification baseline_geometric_classify(const PointFeatures& features, const LabeledMesh&,
                                           const BaselineThresholds& th) {
    if (features.points.size() < 100)
        throw Error(ErrorKind::Classification, "baseline classifier needs at least 100 points", "classification");
    Classification out;
    out.provider = "baseline";
    out.z_skewness = z_skewness(features);
    const ArcStats arc = arc_stats(features, th);
    out.azimuth_span_deg = arc.span_deg;
    out.side_angle_deg = arc.mean_direction_deg;

    out.hollowness = hollowness(features);
    const double hollow_margin = clamp01(std::abs(out.hollowness - th.full_hollowness) / th.full_hollowness);
    if (out.hollowness > th.full_hollowness) {
        out.scan_class = out.z_skewness < 0.0 ? ScanClass::FullUpper : ScanClass::FullLower;
        out.confidence = std::min(hollow_margin, clamp01(std::abs(out.z_skewness) / 0.5));
        return out;
    }
    const double side = out.side_angle_deg;
    if (std::abs(side) <= th.center_band_deg) out.scan_class = ScanClass::PartialCenter;
    else out.scan_class = side > 0 ? ScanClass::PartialLeft : ScanClass::PartialRight;
    const double side_margin = clamp01(std::abs(std::abs(side) - th.center_band_deg) / th.center_band_deg);
    out.confidence = std::min(hollow_margin, side_margin);
    if (arc.resultant == 0.0) out.confidence = 0.0;
    return out;
}

Classification SidecarClassifier::classify(const PointFeatures&, const LabeledMesh&) const {
    std::ifstream in(path_);
    if (!in) throw Error(ErrorKind::Io, "cannot open classifier sidecar " + path_.string(), "classification");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "classifier sidecar: " + std::string(e.what()), "classification");
    }
    if (!j.contains("class") || !j["class"].is_string())
        throw Error(ErrorKind::Parse, "classifier sidecar: missing string field 'class'", "classification");
    Classification out;
    out.provider = name();
    out.scan_class = scan_class_from_string(j["class"].get<std::string>());
    out.confidence = j.value("confidence", 1.0);
    if (!(out.confidence >= 0.0 && out.confidence <= 1.0))
        throw Error(ErrorKind::Validation, "classifier sidecar: confidence outside [0, 1]", "classification");
    return out;
}

Classification classify(const ClassifierProvider& provider, const LabeledMesh& scan) {
    try {
        PointCloud cloud;
        cloud.points = scan.vertices;
        cloud.normals = scan.has_normals() || scan.faces.empty() ? scan.vertex_normals
                                                                  : estimate_vertex_normals(scan).vertex_normals;
        if (cloud.normals.empty()) cloud.normals.assign(cloud.points.size(), Vec3::UnitZ());
        const PointFeatures features = compute_point_features(cloud, FeatureScaling::RawMillimetres);
        Classification out = provider.classify(features, scan);
        if (out.provider.empty()) out.provider = provider.name();
        return out;
    } catch (const Error& e) {
        throw e.with_stage("classification");
    }
}

LabeledMesh mirror_sagittal(const LabeledMesh& mesh) {
    LabeledMesh out = mesh;
    for (auto& v : out.vertices) v.x() = -v.x();
    for (auto& n : out.vertex_normals) n.x() = -n.x();
    for (auto& f : out.faces) std::swap(f[1], f[2]);
    for (auto& l : out.face_labels) {
        if (l >= 1 && l <= 8) l = std::uint8_t(l + 8);
        else if (l >= 9 && l <= 16) l = std::uint8_t(l - 8);
    }
    return out;
}

}  // namespace crownfit
