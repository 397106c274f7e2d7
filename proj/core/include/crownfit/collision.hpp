#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "crownfit/mesh.hpp"

namespace crownfit {

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void expand(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void expand(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    bool empty() const { return !(lo.array() <= hi.array()).all(); }
    Aabb intersection(const Aabb& b) const { return {lo.cwiseMax(b.lo), hi.cwiseMin(b.hi)}; }
    double squared_distance(const Vec3& p) const {
        return (lo - p).cwiseMax(p - hi).cwiseMax(0.0).squaredNorm();
    }
};

/// Bounding-volume hierarchy over the triangles of a mesh (median splits,
/// small leaves). Holds its own copy of the geometry.
class TriangleBvh {
public:
    explicit TriangleBvh(const LabeledMesh& mesh);

    const Aabb& bounds() const { return nodes_.front().box; }
    bool closed() const { return closed_; }

    /// Parameters t at which the infinite line o + t d crosses a triangle.
    /// Triangles parallel to the line are ignored. Unsorted.
    void line_hits(const Vec3& o, const Vec3& d, std::vector<double>& ts) const;

    /// True when the closed segment [a, b] touches any triangle.
    bool segment_hits(const Vec3& a, const Vec3& b) const;

    struct Closest {
        double distance = 0.0;
        std::uint32_t face = 0;
        Vec3 point = Vec3::Zero();
    };
    /// Nearest surface point (exact point-triangle distance).
    Closest closest(const Vec3& p) const;

    /// Point containment. Closed meshes: majority vote of ray parity along
    /// three fixed skew directions. Open meshes: sign of the offset from the
    /// nearest point against that face's normal.
    bool inside(const Vec3& p) const;

    /// Signed distance to the surface, negative inside (see inside()).
    double signed_distance(const Vec3& p) const;

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }

private:
    struct Node {
        Aabb box;
        std::uint32_t first = 0, count = 0;  // leaf range in order_ when count > 0
        std::uint32_t left = 0, right = 0;
    };
    std::uint32_t build(std::uint32_t first, std::uint32_t count);
    std::optional<bool> parity_inside(const Vec3& p, const Vec3& d) const;

    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
    bool closed_ = false;
};

enum class IntersectionMode { Auto, Volumetric, Proximity };

/// Volume of A ∩ B (mm³). Volumetric mode integrates, over a grid of
/// z-columns spaced `resolution` apart across the overlap of the two bounding
/// boxes, the length of the z-intervals inside both solids (ray parity); the
/// error is O(surface area x resolution). Proximity mode counts vertices of
/// either mesh with negative signed distance to the other, times
/// resolution³. Auto picks volumetric when both meshes are closed.
/// Throws Mode for open input in volumetric mode, Argument for resolution <= 0.
double intersection_volume(const LabeledMesh& a, const LabeledMesh& b, double resolution,
                           IntersectionMode mode = IntersectionMode::Auto);
double intersection_volume(const TriangleBvh& a, const TriangleBvh& b, double resolution,
                           IntersectionMode mode = IntersectionMode::Auto);

/// Exact contact predicate: some edge of one mesh touches a triangle of the
/// other, or one solid contains a component of the other.
bool meshes_touch(const TriangleBvh& a, const TriangleBvh& b);

/// Volume estimate used by crown fitting: 0 when the meshes do not touch,
/// otherwise intersection_volume, re-sampled at resolution / 4 when the
/// coarse columns miss a contact that exists.
double contact_volume(const TriangleBvh& a, const TriangleBvh& b, double resolution,
                      IntersectionMode mode = IntersectionMode::Auto);

/// Vertices of `points` inside `solid`, ascending.
std::vector<std::uint32_t> vertices_inside(const LabeledMesh& points, const TriangleBvh& solid);

}  // namespace crownfit
