#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "crownfit/error.hpp"

namespace crownfit {

struct Neighbor {
    std::uint32_t index;
    double distance_sq;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.distance_sq < b.distance_sq || (a.distance_sq == b.distance_sq && a.index < b.index);
    }
};

/// Static k-d tree over D-dimensional points with exact nearest, k-nearest and
/// radius queries. Ties in distance resolve to the lower point index so results
/// match a linear scan. Immutable after construction; queries are const and
/// safe to run concurrently.
template <int D>
class KdTree {
public:
    using Point = std::array<double, D>;

    KdTree() = default;
    explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.empty()) throw Error(ErrorKind::Argument, "KdTree: no points");
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), 0u);
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, static_cast<std::uint32_t>(points_.size()));
    }

    std::size_t size() const { return points_.size(); }
    const Point& point(std::size_t i) const { return points_[i]; }

    Neighbor nearest(const Point& q) const {
        Neighbor best{std::numeric_limits<std::uint32_t>::max(), std::numeric_limits<double>::infinity()};
        nearest_rec(0, q, best);
        return best;
    }

    /// k nearest, sorted by (distance, index).
    std::vector<Neighbor> knn(const Point& q, std::size_t k) const {
        std::vector<Neighbor> heap;  // max-heap by operator<
        if (k == 0) return heap;
        heap.reserve(k + 1);
        knn_rec(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    /// All points with squared distance <= radius^2, sorted by (distance, index).
    std::vector<Neighbor> radius(const Point& q, double r) const {
        std::vector<Neighbor> out;
        radius_into(q, r, out);
        return out;
    }

    void radius_into(const Point& q, double r, std::vector<Neighbor>& out) const {
        out.clear();
        if (r < 0) return;
        radius_rec(0, q, r * r, out);
        std::sort(out.begin(), out.end());
    }

private:
    static constexpr std::uint32_t kLeafSize = 12;

    struct Node {
        std::uint32_t begin, end;  // range in order_
        std::int32_t left = -1, right = -1;
        int axis = -1;
        double split = 0.0;
        Point lo, hi;  // bounding box
    };

    static double dist_sq(const Point& a, const Point& b) {
        double s = 0.0;
        for (int k = 0; k < D; ++k) {
            const double d = a[k] - b[k];
            s += d * d;
        }
        return s;
    }

    double box_dist_sq(const Node& n, const Point& q) const {
        double s = 0.0;
        for (int k = 0; k < D; ++k) {
            double d = 0.0;
            if (q[k] < n.lo[k]) d = n.lo[k] - q[k];
            else if (q[k] > n.hi[k]) d = q[k] - n.hi[k];
            s += d * d;
        }
        return s;
    }

    std::int32_t build(std::uint32_t begin, std::uint32_t end) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        Node node{};
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        Point lo, hi;
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (auto i = begin; i < end; ++i) {
            const auto& p = points_[order_[i]];
            for (int k = 0; k < D; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        }
        nodes_[id].lo = lo;
        nodes_[id].hi = hi;
        if (end - begin <= kLeafSize) return id;
        int axis = 0;
        double spread = -1.0;
        for (int k = 0; k < D; ++k) {
            if (hi[k] - lo[k] > spread) {
                spread = hi[k] - lo[k];
                axis = k;
            }
        }
        if (!(spread > 0.0)) return id;  // all coincident: keep as leaf
        const std::uint32_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
        nodes_[id].axis = axis;
        nodes_[id].split = points_[order_[mid]][axis];
        const auto l = build(begin, mid);
        const auto r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void nearest_rec(std::int32_t id, const Point& q, Neighbor& best) const {
        const Node& n = nodes_[id];
        if (box_dist_sq(n, q) > best.distance_sq) return;
        if (n.axis < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const Neighbor c{order_[i], dist_sq(points_[order_[i]], q)};
                if (c < best) best = c;
            }
            return;
        }
        const bool go_left = q[n.axis] < n.split;
        nearest_rec(go_left ? n.left : n.right, q, best);
        nearest_rec(go_left ? n.right : n.left, q, best);
    }

    void knn_rec(std::int32_t id, const Point& q, std::size_t k, std::vector<Neighbor>& heap) const {
        const Node& n = nodes_[id];
        if (heap.size() == k && box_dist_sq(n, q) > heap.front().distance_sq) return;
        if (n.axis < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const Neighbor c{order_[i], dist_sq(points_[order_[i]], q)};
                if (heap.size() < k) {
                    heap.push_back(c);
                    std::push_heap(heap.begin(), heap.end());
                } else if (c < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = c;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            return;
        }
        const bool go_left = q[n.axis] < n.split;
        knn_rec(go_left ? n.left : n.right, q, k, heap);
        knn_rec(go_left ? n.right : n.left, q, k, heap);
    }

    void radius_rec(std::int32_t id, const Point& q, double r2, std::vector<Neighbor>& out) const {
        const Node& n = nodes_[id];
        if (box_dist_sq(n, q) > r2) return;
        if (n.axis < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const double d = dist_sq(points_[order_[i]], q);
                if (d <= r2) out.push_back({order_[i], d});
            }
            return;
        }
        radius_rec(n.left, q, r2, out);
        radius_rec(n.right, q, r2, out);
    }

    std::vector<Point> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace crownfit
