#include "crownfit/collision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crownfit {

namespace {

constexpr std::uint32_t kLeafSize = 4;

Aabb triangle_box(const std::vector<Vec3>& v, const Face& f) {
    Aabb b;
    for (auto i : f) b.expand(v[i]);
    return b;
}

enum class LineHit { Miss, Hit, Edge };

/// Watertight line/triangle test (shear to a z-aligned frame, edge functions
/// from origin-relative coordinates). A shared edge yields exactly negated
/// edge functions in its two triangles, so a line crosses one of them unless
/// it grazes the edge itself, which is reported as Edge.
struct ShearedLine {
    Vec3 o;
    int kx, ky, kz;
    double sx, sy, sz;

    ShearedLine(const Vec3& origin, const Vec3& d) : o(origin) {
        d.cwiseAbs().maxCoeff(&kz);
        kx = (kz + 1) % 3;
        ky = (kx + 1) % 3;
        sx = d[kx] / d[kz];
        sy = d[ky] / d[kz];
        sz = 1.0 / d[kz];
    }

    LineHit test(const Vec3& a, const Vec3& b, const Vec3& c, double& t) const {
        const Vec3 A = a - o, B = b - o, C = c - o;
        const double ax = A[kx] - sx * A[kz], ay = A[ky] - sy * A[kz];
        const double bx = B[kx] - sx * B[kz], by = B[ky] - sy * B[kz];
        const double cx = C[kx] - sx * C[kz], cy = C[ky] - sy * C[kz];
        const double u = cx * by - cy * bx;
        const double v = ax * cy - ay * cx;
        const double w = bx * ay - by * ax;
        if ((u < 0 || v < 0 || w < 0) && (u > 0 || v > 0 || w > 0)) return LineHit::Miss;
        const double det = u + v + w;
        if (det == 0.0) return LineHit::Miss;  // parallel or degenerate triangle
        t = (u * sz * A[kz] + v * sz * B[kz] + w * sz * C[kz]) / det;
        return (u == 0 || v == 0 || w == 0) ? LineHit::Edge : LineHit::Hit;
    }
};

bool ray_box(const Vec3& o, const Vec3& inv_d, const Aabb& box, double tmin, double tmax) {
    for (int k = 0; k < 3; ++k) {
        double t0 = (box.lo[k] - o[k]) * inv_d[k];
        double t1 = (box.hi[k] - o[k]) * inv_d[k];
        if (std::isnan(t0) || std::isnan(t1)) {  // 0 * inf: origin on a slab plane of a flat axis
            if (o[k] < box.lo[k] || o[k] > box.hi[k]) return false;
            continue;
        }
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    return true;
}

Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

// Skew directions for parity votes; irrational-looking to stay clear of
// axis-aligned and grid-aligned features.
const Vec3 kVoteDirs[3] = {Vec3(0.2718281828, 0.1414213562, 0.9519917365).normalized(),
                           Vec3(-0.5772156649, 0.7071067812, 0.4082482905).normalized(),
                           Vec3(0.8660254038, -0.3183098862, -0.3852747534).normalized()};

}  // namespace

TriangleBvh::TriangleBvh(const LabeledMesh& mesh) : vertices_(mesh.vertices), faces_(mesh.faces) {
    if (faces_.empty()) throw Error(ErrorKind::Argument, "BVH needs at least one triangle");
    for (const auto& f : faces_)
        for (auto i : f)
            if (i >= vertices_.size()) throw Error(ErrorKind::Validation, "face references a missing vertex");
    closed_ = is_closed(mesh);
    order_.resize(faces_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    centroids_.reserve(faces_.size());
    for (const auto& f : faces_) centroids_.push_back((vertices_[f[0]] + vertices_[f[1]] + vertices_[f[2]]) / 3.0);
    nodes_.reserve(2 * faces_.size() / kLeafSize + 2);
    build(0, std::uint32_t(faces_.size()));
}

std::uint32_t TriangleBvh::build(std::uint32_t first, std::uint32_t count) {
    const auto id = std::uint32_t(nodes_.size());
    nodes_.emplace_back();
    Aabb box, cbox;
    for (std::uint32_t i = first; i < first + count; ++i) {
        box.expand(triangle_box(vertices_, faces_[order_[i]]));
        cbox.expand(centroids_[order_[i]]);
    }
    nodes_[id].box = box;
    if (count <= kLeafSize) {
        nodes_[id].first = first;
        nodes_[id].count = count;
        return id;
    }
    int axis;
    (cbox.hi - cbox.lo).maxCoeff(&axis);
    const std::uint32_t mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](std::uint32_t a, std::uint32_t b) {
                         return centroids_[a][axis] < centroids_[b][axis] ||
                                (centroids_[a][axis] == centroids_[b][axis] && a < b);
                     });
    const auto l = build(first, mid - first);
    const auto r = build(mid, first + count - mid);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
}

void TriangleBvh::line_hits(const Vec3& o, const Vec3& d, std::vector<double>& ts) const {
    ts.clear();
    const ShearedLine line(o, d);
    const Vec3 inv = d.cwiseInverse();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> stack = {0};
    while (!stack.empty()) {
        const Node& n = nodes_[stack.back()];
        stack.pop_back();
        if (!ray_box(o, inv, n.box, -inf, inf)) continue;
        if (n.count == 0) {
            stack.push_back(n.left);
            stack.push_back(n.right);
            continue;
        }
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
            const Face& f = faces_[order_[i]];
            double t;
            const auto h = line.test(vertices_[f[0]], vertices_[f[1]], vertices_[f[2]], t);
            if (h == LineHit::Miss) continue;
            // an edge graze is reported as NaN so callers can re-cast
            ts.push_back(h == LineHit::Hit ? t : std::numeric_limits<double>::quiet_NaN());
        }
    }
}

bool TriangleBvh::segment_hits(const Vec3& a, const Vec3& b) const {
    const Vec3 d = b - a;
    if (d.squaredNorm() == 0.0) return closest(a).distance == 0.0;
    const ShearedLine line(a, d);
    const Vec3 inv = d.cwiseInverse();
    std::vector<std::uint32_t> stack = {0};
    while (!stack.empty()) {
        const Node& n = nodes_[stack.back()];
        stack.pop_back();
        if (!ray_box(a, inv, n.box, 0.0, 1.0)) continue;
        if (n.count == 0) {
            stack.push_back(n.left);
            stack.push_back(n.right);
            continue;
        }
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
            const Face& f = faces_[order_[i]];
            double t;
            if (line.test(vertices_[f[0]], vertices_[f[1]], vertices_[f[2]], t) != LineHit::Miss && t >= 0.0 &&
                t <= 1.0)
                return true;
        }
    }
    return false;
}

TriangleBvh::Closest TriangleBvh::closest(const Vec3& p) const {
    Closest best;
    double best_sq = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> stack = {0};
    while (!stack.empty()) {
        const Node& n = nodes_[stack.back()];
        stack.pop_back();
        if (n.box.squared_distance(p) >= best_sq) continue;
        if (n.count == 0) {
            // nearer child last so it is popped first
            const double dl = nodes_[n.left].box.squared_distance(p), dr = nodes_[n.right].box.squared_distance(p);
            if (dl < dr) {
                stack.push_back(n.right);
                stack.push_back(n.left);
            } else {
                stack.push_back(n.left);
                stack.push_back(n.right);
            }
            continue;
        }
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
            const Face& f = faces_[order_[i]];
            const Vec3 q = closest_on_triangle(p, vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]);
            const double sq = (q - p).squaredNorm();
            if (sq < best_sq || (sq == best_sq && order_[i] < best.face)) {
                best_sq = sq;
                best.face = order_[i];
                best.point = q;
            }
        }
    }
    best.distance = std::sqrt(best_sq);
    return best;
}

std::optional<bool> TriangleBvh::parity_inside(const Vec3& p, const Vec3& d) const {
    std::vector<double> ts;
    line_hits(p, d, ts);
    std::size_t ahead = 0;
    for (double t : ts) {
        if (std::isnan(t) || t == 0.0) return std::nullopt;  // grazing cast
        ahead += t > 0.0;
    }
    return ahead % 2 == 1;
}

bool TriangleBvh::inside(const Vec3& p) const {
    if (!closed_) return signed_distance(p) < 0.0;
    if (bounds().squared_distance(p) > 0.0) return false;
    int votes = 0, cast = 0;
    for (const auto& d : kVoteDirs)
        if (const auto in = parity_inside(p, d)) {
            votes += *in;
            ++cast;
        }
    if (cast == 0) return false;  // every cast grazed an edge: p sits on the surface
    return 2 * votes > cast;
}

double TriangleBvh::signed_distance(const Vec3& p) const {
    const Closest c = closest(p);
    if (closed_) return inside(p) ? -c.distance : c.distance;
    const Face& f = faces_[c.face];
    const Vec3 n = (vertices_[f[1]] - vertices_[f[0]]).cross(vertices_[f[2]] - vertices_[f[0]]);
    return (p - c.point).dot(n) < 0.0 ? -c.distance : c.distance;
}

namespace {

/// Intervals [t0, t1] of an axis-aligned column inside a closed mesh, or
/// false when the column grazes an edge or sees an odd number of crossings.
bool column_intervals(const TriangleBvh& m, const Vec3& origin, int axis, std::vector<double>& ts,
                      std::vector<std::pair<double, double>>& out) {
    out.clear();
    m.line_hits(origin, Vec3::Unit(axis), ts);
    for (double t : ts)
        if (std::isnan(t)) return false;
    if (ts.size() % 2 != 0) return false;
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i < ts.size(); i += 2) out.emplace_back(ts[i], ts[i + 1]);
    return true;
}

double overlap_length(const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b) {
    double len = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].first, b[j].first), hi = std::min(a[i].second, b[j].second);
        if (hi > lo) len += hi - lo;
        (a[i].second < b[j].second) ? ++i : ++j;
    }
    return len;
}

/// Column integration along `axis` over the cross-section of `box`.
double column_volume(const TriangleBvh& a, const TriangleBvh& b, const Aabb& box, double res, int axis = 2) {
    if (box.empty()) return 0.0;
    const int ax = (axis + 1) % 3, ay = (axis + 2) % 3;
    const auto nx = std::max<std::size_t>(1, std::size_t(std::ceil((box.hi[ax] - box.lo[ax]) / res)));
    const auto ny = std::max<std::size_t>(1, std::size_t(std::ceil((box.hi[ay] - box.lo[ay]) / res)));
    // fixed sub-resolution offsets keep columns off grid-aligned mesh features
    const double jitter[3][2] = {{1.37e-7, 2.71e-7}, {-3.14e-7, 1.61e-7}, {2.23e-7, -1.73e-7}};
    std::vector<double> ts;
    std::vector<std::pair<double, double>> ia, ib;
    double total = 0.0;
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j)
            for (const auto& jt : jitter) {
                Vec3 o = Vec3::Zero();
                o[ax] = box.lo[ax] + (double(i) + 0.5 + jt[0]) * res;
                o[ay] = box.lo[ay] + (double(j) + 0.5 + jt[1]) * res;
                if (!column_intervals(a, o, axis, ts, ia)) continue;
                if (ia.empty()) break;
                if (!column_intervals(b, o, axis, ts, ib)) continue;
                total += overlap_length(ia, ib);
                break;
            }
    return total * res * res;
}

std::vector<std::array<std::uint32_t, 2>> unique_edges(const std::vector<Face>& faces) {
    std::vector<std::array<std::uint32_t, 2>> e;
    e.reserve(faces.size() * 3);
    for (const auto& f : faces)
        for (int k = 0; k < 3; ++k) e.push_back({std::min(f[k], f[(k + 1) % 3]), std::max(f[k], f[(k + 1) % 3])});
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
}

/// One vertex per edge-connected component.
std::vector<std::uint32_t> component_seeds(const TriangleBvh& m) {
    std::vector<std::uint32_t> parent(m.vertices().size());
    std::iota(parent.begin(), parent.end(), 0u);
    auto find = [&](std::uint32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& f : m.faces())
        for (int k = 1; k < 3; ++k) {
            const auto a = find(f[0]), b = find(f[k]);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::vector<std::uint32_t> seeds;
    std::vector<char> seen(parent.size(), 0);
    for (const auto& f : m.faces()) {
        const auto r = find(f[0]);
        if (!seen[r]) {
            seen[r] = 1;
            seeds.push_back(f[0]);
        }
    }
    return seeds;
}

bool edges_touch(const TriangleBvh& from, const TriangleBvh& to, const Aabb& overlap, Aabb* contact) {
    bool any = false;
    for (const auto& e : unique_edges(from.faces())) {
        const Vec3& p = from.vertices()[e[0]];
        const Vec3& q = from.vertices()[e[1]];
        Aabb eb;
        eb.expand(p);
        eb.expand(q);
        if (eb.intersection(overlap).empty()) continue;
        if (to.segment_hits(p, q)) {
            if (contact == nullptr) return true;
            any = true;
            contact->expand(eb);
        }
    }
    return any;
}

bool touch_impl(const TriangleBvh& a, const TriangleBvh& b, Aabb* contact) {
    const Aabb overlap = a.bounds().intersection(b.bounds());
    if (overlap.empty()) return false;
    const bool ea = edges_touch(a, b, overlap, contact);
    if (ea && contact == nullptr) return true;
    const bool eb = edges_touch(b, a, overlap, contact);
    if (ea || eb) return true;
    for (auto s : component_seeds(a))
        if (b.inside(a.vertices()[s])) return true;
    for (auto s : component_seeds(b))
        if (a.inside(b.vertices()[s])) return true;
    return false;
}

}  // namespace

double intersection_volume(const TriangleBvh& a, const TriangleBvh& b, double resolution, IntersectionMode mode) {
    if (!(resolution > 0.0)) throw Error(ErrorKind::Argument, "intersection resolution must be positive");
    const bool both_closed = a.closed() && b.closed();
    if (mode == IntersectionMode::Auto) mode = both_closed ? IntersectionMode::Volumetric : IntersectionMode::Proximity;
    if (mode == IntersectionMode::Volumetric) {
        if (!both_closed)
            throw Error(ErrorKind::Mode, "volumetric intersection needs closed meshes; use proximity mode for open ones");
        return column_volume(a, b, a.bounds().intersection(b.bounds()), resolution);
    }
    std::size_t inside = 0;
    for (const auto& v : a.vertices()) inside += b.signed_distance(v) < 0.0;
    for (const auto& v : b.vertices()) inside += a.signed_distance(v) < 0.0;
    return double(inside) * resolution * resolution * resolution;
}

double intersection_volume(const LabeledMesh& a, const LabeledMesh& b, double resolution, IntersectionMode mode) {
    return intersection_volume(TriangleBvh(a), TriangleBvh(b), resolution, mode);
}

bool meshes_touch(const TriangleBvh& a, const TriangleBvh& b) { return touch_impl(a, b, nullptr); }

double contact_volume(const TriangleBvh& a, const TriangleBvh& b, double resolution, IntersectionMode mode) {
    if (mode == IntersectionMode::Auto)
        mode = a.closed() && b.closed() ? IntersectionMode::Volumetric : IntersectionMode::Proximity;
    if (mode == IntersectionMode::Proximity) return intersection_volume(a, b, resolution, mode);
    Aabb contact;
    if (!touch_impl(a, b, &contact)) return 0.0;
    const double v = intersection_volume(a, b, resolution, mode);
    if (v > 0.0 || contact.empty()) return v;
    // surface-band refinement around the touching edges; a sliver thinner
    // than the column spacing is only visible to columns crossing it, so
    // every axis is tried
    contact.lo -= Vec3::Constant(resolution);
    contact.hi += Vec3::Constant(resolution);
    const Aabb band = contact.intersection(a.bounds().intersection(b.bounds()));
    double best = 0.0;
    for (int axis = 0; axis < 3; ++axis) best = std::max(best, column_volume(a, b, band, resolution / 4.0, axis));
    return best;
}

std::vector<std::uint32_t> vertices_inside(const LabeledMesh& points, const TriangleBvh& solid) {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < points.vertices.size(); ++i)
        if (solid.inside(points.vertices[i])) out.push_back(std::uint32_t(i));
    return out;
}

}  // namespace crownfit
