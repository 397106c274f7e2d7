#include "crownfit/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace crownfit {

namespace {

bool is_unit(const Vec3& v) { return v.allFinite() && std::abs(v.norm() - 1.0) <= 1e-9; }

double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

}  // namespace

CrownTemplate make_crown_template(LabeledMesh annotated) {
    validate(annotated);
    if (!annotated.has_labels()) throw Error(ErrorKind::Validation, "crown template: region labels are missing");
    Vec3 sums[3] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t f = 0; f < annotated.faces.size(); ++f) {
        const int r = int(annotated.face_labels[f]) - int(region::kMesial);
        if (r < 0 || r > 2) continue;
        sums[r] += face_normal_unnormalized(annotated, f);
        ++counts[r];
    }
    static constexpr const char* kNames[3] = {"mesial", "buccal", "occlusal"};
    Vec3 normals[3];
    for (int r = 0; r < 3; ++r) {
        if (counts[r] == 0) throw Error(ErrorKind::Validation, std::string("crown template: empty ") + kNames[r] + " region");
        const double n = sums[r].norm();
        if (!(n > 1e-12)) throw Error(ErrorKind::Validation, std::string("crown template: ") + kNames[r] + " normals cancel");
        normals[r] = sums[r] / n;
    }
    if (!annotated.has_normals()) annotated = estimate_vertex_normals(annotated);
    CrownTemplate out;
    out.mesh = std::move(annotated);
    out.mesial_normal = normals[0];
    out.buccal_normal = normals[1];
    out.occlusal_normal = normals[2];
    return out;
}

void validate(const TargetVectors& t) {
    const std::pair<const Vec3*, const char*> vs[] = {{&t.mesial_ref, "mesial_ref"},
                                                      {&t.buccal_ref, "buccal_ref"},
                                                      {&t.mesial_robust, "mesial_robust"},
                                                      {&t.buccal_robust, "buccal_robust"},
                                                      {&t.occlusal_axis, "occlusal_axis"}};
    for (const auto& [v, name] : vs)
        if (!is_unit(*v)) throw Error(ErrorKind::Argument, std::string("targets: ") + name + " is not unit length");
    if (std::abs(t.mesial_ref.z()) > 1e-12 || std::abs(t.buccal_ref.z()) > 1e-12)
        throw Error(ErrorKind::Argument, "targets: reference directions must lie in the XY plane");
    if (!t.prep_centroid.allFinite()) throw Error(ErrorKind::Argument, "targets: prep centroid is not finite");
    if (!(t.tau > 0.0 && t.tau < 1.0)) throw Error(ErrorKind::Argument, "targets: tau must be in (0, 1)");
}

SplineFrame spline_frame_at(const ArchSpline& spline, const Vec3& prep_centroid, int prep_fdi, Warnings* warnings) {
    SplineFrame out;
    const Vec2 p = prep_centroid.head<2>();
    out.parameter = spline.closest_parameter(p, &out.clamped);
    if (out.clamped) warn(warnings, "spline_frame_at: prep centroid projects beyond the arch ends; clamped");

    const Vec2 d1 = spline.derivative(out.parameter);
    const double speed = d1.norm();
    if (!(speed > 0.0)) throw Error(ErrorKind::Degenerate, "spline_frame_at: zero tangent");
    const Vec2 tangent = d1 / speed;
    // Ascending arch key runs right distal -> left distal, so the midline lies
    // ahead on the right side and behind on the left.
    const double sign = fdi::side(prep_fdi) == Side::Right ? 1.0 : -1.0;
    out.mesial = Vec3(sign * tangent.x(), sign * tangent.y(), 0.0);

    const Vec2 d2 = spline.second_derivative(out.parameter);
    const Vec2 concave = d2 - d2.dot(tangent) * tangent;  // points toward the centre of curvature
    const Vec2 normal(-tangent.y(), tangent.x());
    Vec2 buccal;
    if (concave.norm() / (speed * speed) > 1e-9) {
        buccal = -concave.normalized();
    } else {
        out.straight = true;
        const double s = normal.dot(p - spline.centroid());
        if (s == 0.0) warn(warnings, "spline_frame_at: straight arch through its centroid; buccal sign arbitrary");
        buccal = s < 0.0 ? Vec2(-normal) : normal;
    }
    out.buccal = Vec3(buccal.x(), buccal.y(), 0.0);
    return out;
}

Vec3 robust_target(std::span<const Vec3> normals, const Vec3& ref, double tau, Warnings* warnings,
                   std::size_t* admitted) {
    if (normals.empty()) throw Error(ErrorKind::Argument, "robust_target: no normals");
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::Argument, "robust_target: tau must be in (0, 1)");
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    for (const auto& v : normals)
        if (v.dot(ref) > tau) sum += v, ++n;
    if (admitted != nullptr) *admitted = n;
    const double len = sum.norm();
    if (n == 0 || !(len > 0.0)) {
        warn(warnings, "robust_target: no normal within the threshold; using the reference direction");
        return ref.normalized();
    }
    return sum / len;
}

Mat3 minimal_rotation(const Vec3& from, const Vec3& to) {
    const Vec3 a = from.normalized(), b = to.normalized();
    const Vec3 axis = a.cross(b);
    const double s = axis.norm(), c = a.dot(b);
    if (s > 1e-12) return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
    if (c > 0.0) return Mat3::Identity();
    for (int k = 0; k < 3; ++k) {
        const Vec3 e = Vec3::Unit(k);
        const Vec3 perp = e - e.dot(a) * a;
        if (perp.norm() > 0.5) return Eigen::AngleAxisd(M_PI, perp.normalized()).toRotationMatrix();
    }
    return Mat3::Identity();  // unreachable: some canonical axis is always far from parallel
}

AlignmentResult align_crown(const CrownTemplate& crown, const TargetVectors& targets) {
    validate(targets);
    if (!is_unit(crown.mesial_normal) || !is_unit(crown.buccal_normal) || !is_unit(crown.occlusal_normal))
        throw Error(ErrorKind::Argument, "align_crown: crown region normals must be unit length");
    if (crown.mesh.vertices.empty()) throw Error(ErrorKind::Argument, "align_crown: empty crown mesh");

    AlignmentResult out;
    auto& tr = out.trace;
    const Vec3 centroid = vertex_mean(crown.mesh.vertices);
    tr.translation_mm = (targets.prep_centroid - centroid).norm();

    const Vec3& axis = targets.mesial_robust;
    const Mat3 r2 = minimal_rotation(crown.mesial_normal, axis);
    tr.mesial_angle_deg = angle_between(crown.mesial_normal, axis) * 180.0 / M_PI;
    tr.mesial_dot_after_mesial = (r2 * crown.mesial_normal).dot(axis);

    const Vec3 b = r2 * crown.buccal_normal;
    const Vec3 pb = b - b.dot(axis) * axis;
    const Vec3 pt = targets.buccal_robust - targets.buccal_robust.dot(axis) * axis;
    if (pb.norm() < 1e-9) throw Error(ErrorKind::Degenerate, "align_crown: buccal normal is parallel to the mesial axis");
    if (pt.norm() < 1e-9) throw Error(ErrorKind::Degenerate, "align_crown: buccal target is parallel to the mesial axis");
    const double theta = std::atan2(axis.dot(pb.cross(pt)), pb.dot(pt));
    const Mat3 r3 = Eigen::AngleAxisd(theta, axis).toRotationMatrix();
    const Mat3 r32 = r3 * r2;
    tr.buccal_angle_deg = std::abs(theta) * 180.0 / M_PI;
    tr.mesial_dot_after_buccal = (r32 * crown.mesial_normal).dot(axis);
    {
        const Vec3 b3 = r32 * crown.buccal_normal;
        const Vec3 pb3 = b3 - b3.dot(axis) * axis;
        tr.buccal_error_rad_after_buccal = angle_between(pb3, pt);
    }

    const Vec3 o = r32 * crown.occlusal_normal;
    const Mat3 r4 = minimal_rotation(o, targets.occlusal_axis);
    tr.occlusal_angle_deg = angle_between(o, targets.occlusal_axis) * 180.0 / M_PI;
    const Mat3 r = r4 * r32;
    tr.occlusal_dot_after_occlusal = (r * crown.occlusal_normal).dot(targets.occlusal_axis);

    // x -> R (x - centroid) + C_prep
    out.transform = RigidTransform(r, targets.prep_centroid - r * centroid);
    return out;
}

JawTargets compute_targets(const LabeledMesh& jaw_mesh, int prep_fdi, double tau, Warnings* warnings) {
    fdi::require_valid(prep_fdi);
    if (!jaw_mesh.has_labels()) throw Error(ErrorKind::Argument, "compute_targets: jaw mesh has no labels");
    const LabeledMesh mesh = jaw_mesh.has_normals() ? jaw_mesh : estimate_vertex_normals(jaw_mesh, warnings);
    const auto centroids = label_centroids(mesh);
    const auto prep = centroids.find(label::kPrepared);
    if (prep == centroids.end()) throw Error(ErrorKind::Argument, "compute_targets: no faces carry the prepared label");

    const std::uint8_t prep_class = fdi::tooth_class(prep_fdi);
    std::vector<std::pair<int, Vec3>> keyed;
    for (const auto& [lab, c] : centroids) {
        if (lab == label::kGingiva || lab == prep_class) continue;
        if (lab == label::kPrepared) keyed.emplace_back(fdi::arch_key(prep_fdi), c);
        else if (lab <= 16) keyed.emplace_back(fdi::class_arch_key(lab), c);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vec3> ordered;
    for (const auto& kc : keyed) ordered.push_back(kc.second);

    JawTargets out{.targets = {}, .frame = {}, .spline = fit_arch_spline(ordered)};
    out.frame = spline_frame_at(out.spline, prep->second, prep_fdi, warnings);

    std::set<std::uint32_t> prep_vertices;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
        if (mesh.face_labels[f] == label::kPrepared) prep_vertices.insert(mesh.faces[f].begin(), mesh.faces[f].end());
    std::vector<Vec3> normals;
    normals.reserve(prep_vertices.size());
    for (auto v : prep_vertices) normals.push_back(mesh.vertex_normals[v]);

    auto& t = out.targets;
    t.tau = tau;
    t.prep_centroid = prep->second;
    t.mesial_ref = out.frame.mesial;
    t.buccal_ref = out.frame.buccal;
    t.mesial_robust = robust_target(normals, t.mesial_ref, tau, warnings, &out.mesial_admitted);
    t.buccal_robust = robust_target(normals, t.buccal_ref, tau, warnings, &out.buccal_admitted);
    t.occlusal_axis = fdi::jaw(prep_fdi) == Jaw::Lower ? Vec3::UnitZ() : Vec3(-Vec3::UnitZ());
    return out;
}

}  // namespace crownfit
