#include "crownfit/spatial_index.hpp"

namespace crownfit {

namespace {

std::vector<KdTree<3>::Point> to_points(std::span<const Vec3> points) {
    if (points.empty()) throw Error(ErrorKind::Argument, "build_spatial_index: no points");
    std::vector<KdTree<3>::Point> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p.x(), p.y(), p.z()});
    return out;
}

}  // namespace

SpatialIndex::SpatialIndex(std::span<const Vec3> points) : tree_(to_points(points)) {}

SpatialIndex build_spatial_index(std::span<const Vec3> points) { return SpatialIndex(points); }

}  // namespace crownfit
