#pragma once

#include <span>
#include <vector>

#include "crownfit/kdtree.hpp"
#include "crownfit/mesh.hpp"

namespace crownfit {

/// Exact 3-D nearest-neighbour / radius index over a fixed point set.
class SpatialIndex {
public:
    explicit SpatialIndex(std::span<const Vec3> points);

    std::size_t size() const { return tree_.size(); }
    Neighbor nearest(const Vec3& q) const { return tree_.nearest(to_point(q)); }
    std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const { return tree_.knn(to_point(q), k); }
    std::vector<Neighbor> radius(const Vec3& q, double r) const { return tree_.radius(to_point(q), r); }
    void radius_into(const Vec3& q, double r, std::vector<Neighbor>& out) const { tree_.radius_into(to_point(q), r, out); }

private:
    static KdTree<3>::Point to_point(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

    KdTree<3> tree_;
};

SpatialIndex build_spatial_index(std::span<const Vec3> points);

}  // namespace crownfit
