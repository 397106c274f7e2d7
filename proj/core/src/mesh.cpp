#include "crownfit/mesh.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace crownfit {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Argument: return "argument";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Io: return "io";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::Classification: return "classification";
        case ErrorKind::CoarseFailure: return "coarse-failure";
        case ErrorKind::RankDeficient: return "rank-deficient";
        case ErrorKind::RoutingFailure: return "routing-failure";
        case ErrorKind::NoMatch: return "no-match";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Mode: return "mode";
        case ErrorKind::NonConvergence: return "non-convergence";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

// ---- RigidTransform -------------------------------------------------------

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
    const double det = rotation.determinant();
    const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(std::abs(det - 1.0) <= 1e-9) || !(ortho <= 1e-9)) {
        std::ostringstream os;
        os << "rotation is not a proper orthonormal matrix (det=" << det << ", |RR^T-I|=" << ortho << ")";
        throw Error(ErrorKind::Validation, os.str());
    }
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::rotation_about(const Mat3& rotation, const Vec3& pivot) {
    return {rotation, pivot - rotation * pivot};
}

Eigen::Matrix4d RigidTransform::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation_ = rotation_ * rhs.rotation_;
    out.translation_ = rotation_ * rhs.translation_ + translation_;
    return out;
}

double RigidTransform::rotation_angle_deg() const {
    return rotation_distance_deg(rotation_, Mat3::Identity());
}

double rotation_distance_deg(const Mat3& a, const Mat3& b) {
    const Mat3 d = a * b.transpose();
    // acos of the trace loses precision near 0; the axis-angle form does not.
    const Eigen::AngleAxisd aa(d);
    return std::abs(aa.angle()) * 180.0 / M_PI;
}

Mat3 orthonormalize(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
        Mat3 u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    return r;
}

// ---- validation -----------------------------------------------------------

void validate(const LabeledMesh& mesh) {
    const auto nv = mesh.vertices.size();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (auto idx : mesh.faces[f]) {
            if (idx >= nv) {
                std::ostringstream os;
                os << "face " << f << " references vertex " << idx << " but mesh has " << nv << " vertices";
                throw Error(ErrorKind::Validation, os.str());
            }
        }
    }
    if (!mesh.vertex_normals.empty()) {
        if (mesh.vertex_normals.size() != nv)
            throw Error(ErrorKind::Validation, "vertex normal count does not match vertex count");
        for (std::size_t i = 0; i < nv; ++i) {
            if (std::abs(mesh.vertex_normals[i].norm() - 1.0) > 1e-6) {
                std::ostringstream os;
                os << "vertex normal " << i << " is not unit length";
                throw Error(ErrorKind::Validation, os.str());
            }
        }
    }
    if (!mesh.face_labels.empty() && mesh.face_labels.size() != mesh.faces.size())
        throw Error(ErrorKind::Validation, "face label count does not match face count");
}

void validate_scan_labels(const LabeledMesh& mesh) {
    validate(mesh);
    for (std::size_t f = 0; f < mesh.face_labels.size(); ++f) {
        if (mesh.face_labels[f] > label::kMaxScanLabel) {
            std::ostringstream os;
            os << "face " << f << " has label " << int(mesh.face_labels[f]) << " outside 0..17";
            throw Error(ErrorKind::Validation, os.str());
        }
    }
}

void validate(const PointCloud& cloud) {
    if (!cloud.normals.empty() && cloud.normals.size() != cloud.points.size())
        throw Error(ErrorKind::Validation, "normal count does not match point count");
}

// ---- geometry -------------------------------------------------------------

Vec3 face_normal_unnormalized(const LabeledMesh& mesh, std::size_t f) {
    const auto& fc = mesh.faces[f];
    const Vec3& a = mesh.vertices[fc[0]];
    const Vec3& b = mesh.vertices[fc[1]];
    const Vec3& c = mesh.vertices[fc[2]];
    return (b - a).cross(c - a);
}

double face_area(const LabeledMesh& mesh, std::size_t f) { return 0.5 * face_normal_unnormalized(mesh, f).norm(); }

Vec3 face_centroid(const LabeledMesh& mesh, std::size_t f) {
    const auto& fc = mesh.faces[f];
    return (mesh.vertices[fc[0]] + mesh.vertices[fc[1]] + mesh.vertices[fc[2]]) / 3.0;
}

Vec3 vertex_mean(std::span<const Vec3> points) {
    Vec3 sum = Vec3::Zero();
    for (const auto& p : points) sum += p;
    return points.empty() ? sum : Vec3(sum / double(points.size()));
}

std::map<std::uint8_t, Vec3> label_centroids(const LabeledMesh& mesh) {
    if (!mesh.has_labels()) throw Error(ErrorKind::Argument, "label_centroids: mesh has no labels");
    std::map<std::uint8_t, std::pair<Vec3, double>> acc;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const double a = face_area(mesh, f);
        auto& [sum, area] = acc.try_emplace(mesh.face_labels[f], Vec3::Zero(), 0.0).first->second;
        sum += a * face_centroid(mesh, f);
        area += a;
    }
    std::map<std::uint8_t, Vec3> out;
    for (const auto& [lab, sa] : acc) {
        if (sa.second > 0.0) {
            out[lab] = sa.first / sa.second;
            continue;
        }
        Vec3 s = Vec3::Zero();
        std::size_t n = 0;
        for (std::size_t f = 0; f < mesh.faces.size(); ++f)
            if (mesh.face_labels[f] == lab) s += face_centroid(mesh, f), ++n;
        out[lab] = s / double(n);
    }
    return out;
}

LabeledMesh estimate_vertex_normals(const LabeledMesh& mesh, Warnings* warnings) {
    if (mesh.faces.empty()) throw Error(ErrorKind::Argument, "estimate_vertex_normals: mesh has no faces");
    validate(mesh);
    LabeledMesh out = mesh;
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    std::size_t degenerate = 0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        // |cross| = 2 * area, so summing the raw cross product is area weighting.
        const Vec3 n = face_normal_unnormalized(mesh, f);
        if (!(n.norm() > 0.0)) {
            ++degenerate;
            continue;
        }
        for (auto v : mesh.faces[f]) acc[v] += n;
    }
    if (degenerate > 0) warn(warnings, std::to_string(degenerate) + " zero-area face(s) skipped in normal accumulation");
    out.vertex_normals.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double len = acc[i].norm();
        if (len > 0.0) {
            out.vertex_normals[i] = acc[i] / len;
        } else {
            out.vertex_normals[i] = Vec3::UnitZ();
            warn(warnings, "vertex " + std::to_string(i) + " has no incident area; fallback normal (0,0,1)");
        }
    }
    return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
    if (!(voxel > 0.0)) throw Error(ErrorKind::Argument, "voxel_downsample: voxel size must be > 0");
    validate(cloud);
    struct Acc {
        Vec3 sum = Vec3::Zero();
        Vec3 nsum = Vec3::Zero();
        std::size_t count = 0;
    };
    // std::map keeps the output order independent of hashing.
    std::map<std::array<std::int64_t, 3>, Acc> cells;
    const bool with_normals = cloud.has_normals();
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                                              static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                                              static_cast<std::int64_t>(std::floor(p.z() / voxel))};
        auto& a = cells[key];
        a.sum += p;
        if (with_normals) a.nsum += cloud.normals[i];
        ++a.count;
    }
    PointCloud out;
    out.points.reserve(cells.size());
    if (with_normals) out.normals.reserve(cells.size());
    for (const auto& [key, a] : cells) {
        out.points.push_back(a.sum / double(a.count));
        if (with_normals) {
            const double len = a.nsum.norm();
            out.normals.push_back(len > 0.0 ? Vec3(a.nsum / len) : Vec3::UnitZ());
        }
    }
    return out;
}

double bounding_box_diagonal(std::span<const Vec3> points) {
    if (points.empty()) throw Error(ErrorKind::Argument, "bounding_box_diagonal: no vertices");
    Vec3 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

double bounding_box_diagonal(const LabeledMesh& mesh) { return bounding_box_diagonal(std::span<const Vec3>(mesh.vertices)); }

PointCloud to_point_cloud(const LabeledMesh& mesh) {
    PointCloud c;
    c.points = mesh.vertices;
    c.normals = mesh.vertex_normals;
    return c;
}

LabeledMesh transformed(const LabeledMesh& mesh, const RigidTransform& t) {
    LabeledMesh out = mesh;
    for (auto& v : out.vertices) v = t.apply(v);
    for (auto& n : out.vertex_normals) n = t.apply_direction(n).normalized();
    return out;
}

PointCloud transformed(const PointCloud& cloud, const RigidTransform& t) {
    PointCloud out = cloud;
    for (auto& p : out.points) p = t.apply(p);
    for (auto& n : out.normals) n = t.apply_direction(n).normalized();
    return out;
}

LabeledMesh scaled_about(const LabeledMesh& mesh, double factor, const Vec3& center) {
    LabeledMesh out = mesh;
    for (auto& v : out.vertices) v = center + factor * (v - center);
    return out;
}

LabeledMesh merge(std::span<const LabeledMesh> parts) {
    LabeledMesh out;
    bool all_labels = !parts.empty();
    bool all_normals = !parts.empty();
    for (const auto& p : parts) {
        all_labels = all_labels && (p.has_labels() || p.faces.empty());
        all_normals = all_normals && (p.has_normals() || p.vertices.empty());
    }
    for (const auto& p : parts) {
        const auto base = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
        if (all_normals) out.vertex_normals.insert(out.vertex_normals.end(), p.vertex_normals.begin(), p.vertex_normals.end());
        for (const auto& f : p.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
        if (all_labels) out.face_labels.insert(out.face_labels.end(), p.face_labels.begin(), p.face_labels.end());
    }
    return out;
}

LabeledMesh submesh(const LabeledMesh& mesh, std::span<const std::size_t> face_ids) {
    std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
    std::vector<char> used(mesh.vertices.size(), 0);
    for (auto f : face_ids)
        for (auto v : mesh.faces[f]) used[v] = 1;
    LabeledMesh out;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (!used[v]) continue;
        remap[v] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        if (mesh.has_normals()) out.vertex_normals.push_back(mesh.vertex_normals[v]);
    }
    for (auto f : face_ids) {
        const auto& fc = mesh.faces[f];
        out.faces.push_back({static_cast<std::uint32_t>(remap[fc[0]]), static_cast<std::uint32_t>(remap[fc[1]]),
                             static_cast<std::uint32_t>(remap[fc[2]])});
        if (mesh.has_labels()) out.face_labels.push_back(mesh.face_labels[f]);
    }
    return out;
}

std::vector<std::size_t> faces_with_label(const LabeledMesh& mesh, std::uint8_t label) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < mesh.face_labels.size(); ++f)
        if (mesh.face_labels[f] == label) out.push_back(f);
    return out;
}

LabeledMesh submesh_by_label(const LabeledMesh& mesh, std::uint8_t label) {
    return submesh(mesh, faces_with_label(mesh, label));
}

// ---- topology -------------------------------------------------------------

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(a) << 32) | b;
}

}  // namespace

std::vector<std::vector<std::uint32_t>> face_adjacency(const LabeledMesh& mesh) {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edges;
    edges.reserve(mesh.faces.size() * 2);
    for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& fc = mesh.faces[f];
        for (int k = 0; k < 3; ++k) edges[edge_key(fc[k], fc[(k + 1) % 3])].push_back(f);
    }
    std::vector<std::vector<std::uint32_t>> adj(mesh.faces.size());
    for (const auto& [key, fs] : edges) {
        for (std::size_t i = 0; i < fs.size(); ++i)
            for (std::size_t j = 0; j < fs.size(); ++j)
                if (i != j) adj[fs[i]].push_back(fs[j]);
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

std::vector<std::vector<std::uint32_t>> vertex_adjacency(const LabeledMesh& mesh) {
    std::vector<std::vector<std::uint32_t>> adj(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            adj[f[k]].push_back(f[(k + 1) % 3]);
            adj[f[k]].push_back(f[(k + 2) % 3]);
        }
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

std::vector<std::uint32_t> face_components(const LabeledMesh& mesh, std::size_t* count) {
    const auto adj = face_adjacency(mesh);
    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> comp(mesh.faces.size(), kUnset);
    std::uint32_t next = 0;
    std::vector<std::uint32_t> stack;
    for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
        if (comp[f] != kUnset) continue;
        comp[f] = next;
        stack.push_back(f);
        while (!stack.empty()) {
            const auto g = stack.back();
            stack.pop_back();
            for (auto h : adj[g]) {
                if (comp[h] == kUnset) {
                    comp[h] = next;
                    stack.push_back(h);
                }
            }
        }
        ++next;
    }
    if (count != nullptr) *count = next;
    return comp;
}

bool is_closed(const LabeledMesh& mesh) {
    if (mesh.faces.empty()) return false;
    // directed edge count per undirected edge: need exactly one (a,b) and one (b,a)
    std::unordered_map<std::uint64_t, std::pair<int, int>> edges;
    edges.reserve(mesh.faces.size() * 2);
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            const auto a = f[k], b = f[(k + 1) % 3];
            if (a == b) return false;
            auto& e = edges[edge_key(a, b)];
            if (a < b) ++e.first; else ++e.second;
        }
    }
    for (const auto& [key, e] : edges)
        if (e.first != 1 || e.second != 1) return false;
    return true;
}

std::vector<int> euler_characteristics(const LabeledMesh& mesh) {
    std::size_t ncomp = 0;
    const auto comp = face_components(mesh, &ncomp);
    std::vector<int> faces(ncomp, 0), verts(ncomp, 0), edges(ncomp, 0);
    std::vector<std::int64_t> vcomp(mesh.vertices.size(), -1);
    std::unordered_map<std::uint64_t, std::uint32_t> edge_comp;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        ++faces[comp[f]];
        for (int k = 0; k < 3; ++k) {
            const auto v = mesh.faces[f][k];
            if (vcomp[v] < 0) {
                vcomp[v] = comp[f];
                ++verts[comp[f]];
            }
            const auto key = edge_key(v, mesh.faces[f][(k + 1) % 3]);
            if (edge_comp.emplace(key, comp[f]).second) ++edges[comp[f]];
        }
    }
    std::vector<int> chi(ncomp);
    for (std::size_t c = 0; c < ncomp; ++c) chi[c] = verts[c] - edges[c] + faces[c];
    return chi;
}

}  // namespace crownfit
