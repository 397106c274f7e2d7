#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "crownfit/features.hpp"
#include "crownfit/fdi.hpp"
#include "crownfit/mesh.hpp"

namespace crownfit {

struct Classification {
    ScanClass scan_class = ScanClass::FullLower;
    double confidence = 0.0;  // in [0, 1]
    std::string provider;

    // Baseline diagnostics (zero for other providers).
    double azimuth_span_deg = 0.0;
    double side_angle_deg = 0.0;  // circular mean direction relative to anterior, + toward patient left
    double z_skewness = 0.0;
    double hollowness = 0.0;
};

/// Geometric stand-in thresholds; calibrated on the synthetic generator.
struct BaselineThresholds {
    double full_hollowness = 0.2;
    double center_band_deg = 30.0;
    int histogram_bins = 72;
    double bin_mass_fraction = 0.002;  // bins below this fraction count as empty
};

class ClassifierProvider {
public:
    virtual ~ClassifierProvider() = default;
    virtual std::string name() const = 0;
    virtual Classification classify(const PointFeatures& features, const LabeledMesh& scan) const = 0;
};

/// Rule-based baseline working in the canonical frame (occlusal plane XY,
/// anterior -y, patient left +x):
///  * a full arch encloses empty space, so the gap between the footprint
///    centroid and the nearest point (relative to the RMS radius) separates
///    full arches from segments;
///  * azimuths are measured about the centre of a least-squares circle
///    through the footprint (the arch centre); for partials, the circular mean azimuth relative to the anterior
///    direction gives Left / Right / Center;
///  * for full arches, crowns stand proud of the gingiva on the occlusal side,
///    so the z-skewness of the point mass gives Upper (negative) or Lower.
/// Throws Classification for fewer than 100 points.
Classification baseline_geometric_classify(const PointFeatures& features, const LabeledMesh& scan,
                                           const BaselineThresholds& thresholds = {});

class BaselineClassifier final : public ClassifierProvider {
public:
    explicit BaselineClassifier(BaselineThresholds thresholds = {}) : thresholds_(thresholds) {}
    std::string name() const override { return "baseline"; }
    Classification classify(const PointFeatures& features, const LabeledMesh& scan) const override {
        return baseline_geometric_classify(features, scan, thresholds_);
    }

private:
    BaselineThresholds thresholds_;
};

/// Always answers the same class.
class FixedClassifier final : public ClassifierProvider {
public:
    FixedClassifier(ScanClass cls, double confidence = 1.0) : cls_(cls), confidence_(confidence) {}
    std::string name() const override { return "fixed"; }
    Classification classify(const PointFeatures&, const LabeledMesh&) const override {
        return {.scan_class = cls_, .confidence = confidence_, .provider = name()};
    }

private:
    ScanClass cls_;
    double confidence_;
};

/// Reads {"class": "...", "confidence": x} from a JSON sidecar produced by an
/// out-of-tree model.
class SidecarClassifier final : public ClassifierProvider {
public:
    explicit SidecarClassifier(std::filesystem::path sidecar) : path_(std::move(sidecar)) {}
    std::string name() const override { return "external"; }
    Classification classify(const PointFeatures&, const LabeledMesh&) const override;

private:
    std::filesystem::path path_;
};

/// Computes raw-mm point features from the scan vertices and delegates to the
/// provider. Failures are rethrown with stage "classification".
Classification classify(const ClassifierProvider& provider, const LabeledMesh& scan);

/// Mirror across the sagittal plane (x -> -x) with winding flipped; left and
/// right label classes are swapped.
LabeledMesh mirror_sagittal(const LabeledMesh& mesh);

}  // namespace crownfit
