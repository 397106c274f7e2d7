#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "crownfit/error.hpp"

namespace crownfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<std::uint32_t, 3>;

/// Face label conventions for scans. Crown templates reuse the label channel
/// for region annotations (see crown_alignment).
namespace label {
inline constexpr std::uint8_t kGingiva = 0;
inline constexpr std::uint8_t kPrepared = 17;
inline constexpr std::uint8_t kMaxScanLabel = 17;
}  // namespace label

struct LabeledMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> vertex_normals;          // empty or one per vertex
    std::vector<std::uint8_t> face_labels;     // empty or one per face

    bool has_normals() const { return !vertex_normals.empty(); }
    bool has_labels() const { return !face_labels.empty(); }
    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_faces() const { return faces.size(); }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty or one per point

    bool has_normals() const { return !normals.empty(); }
    std::size_t size() const { return points.size(); }
};

/// Proper rigid motion x -> R x + t.
class RigidTransform {
public:
    RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
    /// Throws Validation when `rotation` is not orthonormal with det +1 (1e-9).
    RigidTransform(const Mat3& rotation, const Vec3& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform from_matrix(const Eigen::Matrix4d& m);
    static RigidTransform translation_only(const Vec3& t) { return {Mat3::Identity(), t}; }
    /// Rotation about `pivot`.
    static RigidTransform rotation_about(const Mat3& rotation, const Vec3& pivot);

    const Mat3& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    Eigen::Matrix4d matrix() const;

    Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
    Vec3 apply_direction(const Vec3& d) const { return rotation_ * d; }
    RigidTransform inverse() const;
    /// (*this) after `rhs`: x -> this(rhs(x)).
    RigidTransform operator*(const RigidTransform& rhs) const;

    double rotation_angle_deg() const;

private:
    Mat3 rotation_;
    Vec3 translation_;
};

/// Angle of R_a R_b^T in degrees.
double rotation_distance_deg(const Mat3& a, const Mat3& b);

/// Projects a near-rotation onto SO(3) (SVD); used after composing many steps.
Mat3 orthonormalize(const Mat3& m);

// ---- validation -----------------------------------------------------------

/// Checks face indices, normal count/unit length (1e-6) and label count.
void validate(const LabeledMesh& mesh);
/// validate() plus every label in {0..17}.
void validate_scan_labels(const LabeledMesh& mesh);
void validate(const PointCloud& cloud);

// ---- basic geometry -------------------------------------------------------

Vec3 face_normal_unnormalized(const LabeledMesh& mesh, std::size_t f);
double face_area(const LabeledMesh& mesh, std::size_t f);
Vec3 face_centroid(const LabeledMesh& mesh, std::size_t f);
Vec3 vertex_mean(std::span<const Vec3> points);

/// Area-weighted centroid of the faces carrying each label.
std::map<std::uint8_t, Vec3> label_centroids(const LabeledMesh& mesh);

/// Area-weighted per-vertex normals oriented by face winding. Zero-area faces
/// are skipped; vertices with no usable face get (0,0,1) and a warning.
LabeledMesh estimate_vertex_normals(const LabeledMesh& mesh, Warnings* warnings = nullptr);

/// One point per occupied voxel at the centroid of its members; normals are
/// averaged and renormalised. Output is ordered by voxel key.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

double bounding_box_diagonal(const LabeledMesh& mesh);
double bounding_box_diagonal(std::span<const Vec3> points);

PointCloud to_point_cloud(const LabeledMesh& mesh);

LabeledMesh transformed(const LabeledMesh& mesh, const RigidTransform& t);
PointCloud transformed(const PointCloud& cloud, const RigidTransform& t);
/// Uniform scale about `center`. Normals are unchanged.
LabeledMesh scaled_about(const LabeledMesh& mesh, double factor, const Vec3& center);

/// Concatenate meshes; labels kept when all inputs carry them.
LabeledMesh merge(std::span<const LabeledMesh> parts);

/// Keeps the listed faces and the vertices they reference (compacted, in
/// original order). Coordinates are copied exactly.
LabeledMesh submesh(const LabeledMesh& mesh, std::span<const std::size_t> face_ids);
/// Ids of the faces carrying `label`, ascending.
std::vector<std::size_t> faces_with_label(const LabeledMesh& mesh, std::uint8_t label);
/// submesh of the faces carrying `label` (empty mesh when none do).
LabeledMesh submesh_by_label(const LabeledMesh& mesh, std::uint8_t label);

// ---- topology -------------------------------------------------------------

/// For each face, the faces sharing an edge with it (sorted, unique).
std::vector<std::vector<std::uint32_t>> face_adjacency(const LabeledMesh& mesh);
/// For each vertex, its one-ring neighbour vertices (sorted, unique).
std::vector<std::vector<std::uint32_t>> vertex_adjacency(const LabeledMesh& mesh);
/// Component id per face (edge-connected), ids ordered by first face.
std::vector<std::uint32_t> face_components(const LabeledMesh& mesh, std::size_t* count = nullptr);
/// Every edge shared by exactly two faces with opposite orientation.
bool is_closed(const LabeledMesh& mesh);
/// V - E + F per edge-connected component.
std::vector<int> euler_characteristics(const LabeledMesh& mesh);

}  // namespace crownfit
