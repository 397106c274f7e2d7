#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crownfit/fdi.hpp"
#include "crownfit/mesh.hpp"
#include "crownfit/spline.hpp"

namespace crownfit {

/// Per-face region annotations carried in the label channel of crown templates.
namespace region {
inline constexpr std::uint8_t kMesial = 101;
inline constexpr std::uint8_t kBuccal = 102;
inline constexpr std::uint8_t kOcclusal = 103;
}  // namespace region

/// Crown mesh with annotated mesial/buccal/occlusal faces and their
/// area-weighted mean unit normals.
struct CrownTemplate {
    LabeledMesh mesh;
    Vec3 mesial_normal = Vec3::UnitX();
    Vec3 buccal_normal = Vec3::UnitY();
    Vec3 occlusal_normal = Vec3::UnitZ();
};

/// Builds a template from a mesh whose face labels mark the three regions.
/// Throws Validation when a region is empty or its mean normal vanishes.
CrownTemplate make_crown_template(LabeledMesh annotated);

struct TargetVectors {
    Vec3 mesial_ref = Vec3::UnitX();
    Vec3 buccal_ref = Vec3::UnitY();
    Vec3 mesial_robust = Vec3::UnitX();
    Vec3 buccal_robust = Vec3::UnitY();
    Vec3 occlusal_axis = Vec3::UnitZ();
    Vec3 prep_centroid = Vec3::Zero();
    double tau = 0.6;
};

/// Throws Argument if a vector is not unit length (1e-9), a reference vector
/// has a z component, or tau is outside (0, 1).
void validate(const TargetVectors& t);

struct SplineFrame {
    Vec3 mesial;      // unit tangent, z = 0, pointing toward the midline
    Vec3 buccal;      // unit in-plane normal, z = 0, pointing away from the arch
    double parameter = 0.0;
    bool clamped = false;
    bool straight = false;  // curvature too small; buccal from arch centroid
};

/// Frame of the arch at the foot point of `prep_centroid`. The spline must be
/// ordered by ascending FDI arch key; `prep_fdi` fixes the mesial sign.
SplineFrame spline_frame_at(const ArchSpline& spline, const Vec3& prep_centroid, int prep_fdi,
                            Warnings* warnings = nullptr);

/// Mean of the normals with n . ref > tau, renormalised; `ref` with a warning
/// when none qualify.
Vec3 robust_target(std::span<const Vec3> normals, const Vec3& ref, double tau = 0.6, Warnings* warnings = nullptr,
                   std::size_t* admitted = nullptr);

/// Minimal rotation taking unit `from` to unit `to`. For antiparallel input the
/// axis is the lowest-index canonical axis orthogonalised against `from`.
Mat3 minimal_rotation(const Vec3& from, const Vec3& to);

struct AlignmentTrace {
    double translation_mm = 0.0;
    double mesial_angle_deg = 0.0;   // step (ii)
    double buccal_angle_deg = 0.0;   // step (iii)
    double occlusal_angle_deg = 0.0; // step (iv)
    double mesial_dot_after_mesial = 0.0;
    double mesial_dot_after_buccal = 0.0;
    double buccal_error_rad_after_buccal = 0.0;
    double occlusal_dot_after_occlusal = 0.0;
};

struct AlignmentResult {
    RigidTransform transform;
    AlignmentTrace trace;
};

/// Sequential alignment: centroid to prep centroid, mesial to mesial_robust,
/// buccal about the new mesial axis, occlusal to occlusal_axis. Rotations
/// pivot on the prep centroid. Throws Degenerate when the buccal normal is
/// parallel to the mesial axis.
AlignmentResult align_crown(const CrownTemplate& crown, const TargetVectors& targets);

/// Targets derived from a labelled jaw: arch spline through the tooth
/// centroids (prep label treated as `prep_fdi`), frame at the prep centroid,
/// robust targets from the prep vertex normals.
struct JawTargets {
    TargetVectors targets;
    SplineFrame frame;
    ArchSpline spline;
    std::size_t mesial_admitted = 0;
    std::size_t buccal_admitted = 0;
};

JawTargets compute_targets(const LabeledMesh& jaw_mesh, int prep_fdi, double tau = 0.6, Warnings* warnings = nullptr);

}  // namespace crownfit
