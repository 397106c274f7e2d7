#include "crownfit/fitting.hpp"

#include "crownfit/fdi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace crownfit {

void FittingParams::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::Config, "fitting: " + what); };
    if (!(shrink > 0.0 && shrink < 1.0)) bad("shrink must lie in (0, 1)");
    if (!(grow > 1.0 && std::isfinite(grow))) bad("grow must exceed 1");
    if (!(delta > 0.0)) bad("delta must be positive");
    if (!(falloff_radius > 0.0)) bad("falloff_radius must be positive");
    if (!(v_int_threshold >= 0.0)) bad("v_int_threshold must be >= 0");
    if (!(proximity_dist >= 0.0)) bad("proximity_dist must be >= 0");
    if (!(cusp_normal_dot_min >= -1.0 && cusp_normal_dot_min <= 1.0)) bad("cusp_normal_dot_min must lie in [-1, 1]");
    if (!(volume_resolution > 0.0)) bad("volume_resolution must be positive");
    if (cusp_count == 0 || max_scale_iters == 0 || max_tap_rounds == 0 || max_shift_iters == 0)
        bad("counts must be positive");
}

Vec3 occlusal_direction(int fdi) {
    fdi::require_valid(fdi);
    return fdi::jaw(fdi) == Jaw::Lower ? Vec3::UnitZ() : Vec3(-Vec3::UnitZ());
}

CuspSet detect_cusps(const LabeledMesh& crown, const Vec3& occlusal_dir, const FittingParams& params) {
    const Vec3 dir = occlusal_dir.normalized();
    const LabeledMesh withn = crown.has_normals() ? LabeledMesh{} : estimate_vertex_normals(crown);
    const auto& normals = crown.has_normals() ? crown.vertex_normals : withn.vertex_normals;
    const auto ring = vertex_adjacency(crown);
    // border vertices of an open surface have a partial one-ring
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use;
    for (const auto& f : crown.faces)
        for (int k = 0; k < 3; ++k) ++edge_use[std::minmax(f[k], f[(k + 1) % 3])];
    std::vector<char> border(crown.vertices.size(), 0);
    for (const auto& [e, n] : edge_use)
        if (n == 1) border[e.first] = border[e.second] = 1;
    std::vector<std::pair<double, std::uint32_t>> found;
    for (std::uint32_t v = 0; v < crown.vertices.size(); ++v) {
        if (ring[v].empty() || border[v]) continue;
        const double h = crown.vertices[v].dot(dir);
        bool peak = normals[v].dot(dir) > params.cusp_normal_dot_min;
        for (auto u : ring[v]) {
            if (!peak) break;
            peak = h > crown.vertices[u].dot(dir);
        }
        if (peak) found.emplace_back(h, v);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    CuspSet out;
    for (std::size_t k = 0; k < std::min(found.size(), params.cusp_count); ++k) {
        out.vertices.push_back(found[k].second);
        out.heights.push_back(found[k].first);
    }
    return out;
}

namespace {

LabeledMesh scaled_copy(const LabeledMesh& crown, const Vec3& c, double s) {
    LabeledMesh m = crown;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) m.vertices[i] = c + s * (crown.vertices[i] - c);
    return m;
}

std::string trace_text(const std::vector<double>& t) {
    std::ostringstream os;
    os.precision(6);
    const std::size_t from = t.size() > 8 ? t.size() - 8 : 0;
    if (from > 0) os << "... ";
    for (std::size_t i = from; i < t.size(); ++i) os << t[i] << (i + 1 < t.size() ? ", " : "");
    return os.str();
}

}  // namespace

ScaledCrown interproximal_adapt(const LabeledMesh& crown, const LabeledMesh& neighbors, const FittingParams& params) {
    params.validate();
    const TriangleBvh nb(neighbors);
    ScalingReport rep;
    rep.center = vertex_mean(crown.vertices);
    auto volume = [&](double s) {
        return contact_volume(TriangleBvh(scaled_copy(crown, rep.center, s)), nb, params.volume_resolution);
    };
    double s = 1.0;
    double v = volume(s);
    rep.initial_volume = v;
    rep.initial_collision = v > params.v_int_threshold;
    auto step = [&](double factor) {
        if (rep.scale_trace.size() >= params.max_scale_iters)
            throw Error(ErrorKind::NonConvergence, "interproximal scaling did not converge; scale trace: " +
                                                       trace_text(rep.scale_trace));
        s *= factor;
        v = volume(s);
        rep.scale_trace.push_back(s);
        rep.volume_trace.push_back(v);
    };
    if (rep.initial_collision)
        while (v > params.v_int_threshold) step(params.shrink);
    else
        while (v <= params.v_int_threshold) step(params.grow);
    // functional gap
    s *= params.shrink;
    ScaledCrown out{scaled_copy(crown, rep.center, s), {}};
    v = contact_volume(TriangleBvh(out.mesh), nb, params.volume_resolution);
    rep.scale_trace.push_back(s);
    rep.volume_trace.push_back(v);
    rep.final_scale = s;
    rep.final_volume = v;
    out.report = std::move(rep);
    return out;
}

LabeledMesh center_between_neighbors(const LabeledMesh& crown, const LabeledMesh& neighbors, Vec3* shift) {
    std::size_t count = 0;
    const auto comp = face_components(neighbors, &count);
    if (count != 2)
        throw Error(ErrorKind::Argument, "centering needs exactly two neighbour components, got " + std::to_string(count));
    Vec3 acc[2] = {Vec3::Zero(), Vec3::Zero()};
    double area[2] = {0.0, 0.0};
    for (std::size_t f = 0; f < neighbors.faces.size(); ++f) {
        const double a = face_area(neighbors, f);
        acc[comp[f]] += a * face_centroid(neighbors, f);
        area[comp[f]] += a;
    }
    if (!(area[0] > 0.0 && area[1] > 0.0)) throw Error(ErrorKind::Argument, "centering: neighbour with zero area");
    const Vec3 mid = 0.5 * (acc[0] / area[0] + acc[1] / area[1]);
    Vec3 t = mid - vertex_mean(crown.vertices);
    t.z() = 0.0;
    LabeledMesh out = crown;
    for (auto& p : out.vertices) p += t;
    if (shift != nullptr) *shift = t;
    return out;
}

LabeledMesh occlusal_correct_posterior(const LabeledMesh& crown, const LabeledMesh& opposing, const Vec3& occlusal_dir,
                                       const FittingParams& params, TapReport* report) {
    params.validate();
    const Vec3 dir = occlusal_dir.normalized();
    TapReport rep;
    rep.cusps = detect_cusps(crown, dir, params);
    const TriangleBvh opp(opposing);

    // neighbourhood of each cusp on the input geometry
    const double sigma = params.falloff_radius / 2.0;
    struct Hood {
        std::vector<std::uint32_t> ids;
        std::vector<double> weights;
    };
    std::vector<Hood> hoods(rep.cusps.size());
    for (std::size_t k = 0; k < rep.cusps.size(); ++k) {
        const Vec3& apex = crown.vertices[rep.cusps.vertices[k]];
        for (std::uint32_t v = 0; v < crown.vertices.size(); ++v) {
            const double d2 = (crown.vertices[v] - apex).squaredNorm();
            if (d2 > params.falloff_radius * params.falloff_radius) continue;
            hoods[k].ids.push_back(v);
            hoods[k].weights.push_back(std::exp(-d2 / (2 * sigma * sigma)));
        }
    }

    LabeledMesh m = crown;
    std::vector<double> moved(crown.vertices.size(), 0.0);
    std::vector<char> touched(crown.vertices.size(), 0);
    auto colliding = [&] {
        std::vector<std::size_t> ks;
        for (std::size_t k = 0; k < hoods.size(); ++k)
            for (auto v : hoods[k].ids)
                if (opp.inside(m.vertices[v])) {
                    ks.push_back(k);
                    break;
                }
        return ks;
    };
    auto tap = [&](const std::vector<std::size_t>& ks) {
        std::vector<double> w(crown.vertices.size(), 0.0);
        for (auto k : ks)
            for (std::size_t i = 0; i < hoods[k].ids.size(); ++i)
                w[hoods[k].ids[i]] = std::max(w[hoods[k].ids[i]], hoods[k].weights[i]);
        for (std::size_t v = 0; v < w.size(); ++v) {
            if (w[v] == 0.0) continue;
            m.vertices[v] -= params.delta * w[v] * dir;
            moved[v] += params.delta * w[v];
            touched[v] = 1;
        }
        rep.colliding_per_round.push_back(ks.size());
    };

    auto ks = colliding();
    if (ks.empty()) {
        for (std::size_t k = 0; k < rep.cusps.size(); ++k)
            if (opp.closest(m.vertices[rep.cusps.vertices[k]]).distance < params.proximity_dist) ks.push_back(k);
        if (!ks.empty()) {
            rep.proximity_pass = true;
            tap(ks);
        }
    } else {
        while (!ks.empty()) {
            if (rep.colliding_per_round.size() >= params.max_tap_rounds)
                throw Error(ErrorKind::NonConvergence, "cusp tap-down still colliding after " +
                                                           std::to_string(params.max_tap_rounds) + " rounds");
            tap(ks);
            ks = colliding();
        }
    }
    for (std::uint32_t v = 0; v < touched.size(); ++v)
        if (touched[v]) rep.displaced_vertices.push_back(v);
    rep.max_displacement = moved.empty() ? 0.0 : *std::max_element(moved.begin(), moved.end());
    if (!rep.displaced_vertices.empty() && m.has_normals()) {
        // positions stay as computed; only the normals are refreshed
        const auto fresh = estimate_vertex_normals(m);
        m.vertex_normals = fresh.vertex_normals;
    }
    if (report != nullptr) *report = std::move(rep);
    return m;
}

LabeledMesh occlusal_correct_anterior(const LabeledMesh& crown, const LabeledMesh& opposing, const Vec3& occlusal_dir,
                                      const FittingParams& params, ShiftReport* report) {
    params.validate();
    const Vec3 dir = occlusal_dir.normalized();
    const TriangleBvh opp(opposing);
    LabeledMesh m = crown;
    std::size_t k = 0;
    while (meshes_touch(TriangleBvh(m), opp)) {
        if (k >= params.max_shift_iters)
            throw Error(ErrorKind::NonConvergence,
                        "anterior shift still interfering after " + std::to_string(params.max_shift_iters) + " steps");
        ++k;
        const Vec3 t = -double(k) * params.delta * dir;
        for (std::size_t i = 0; i < m.vertices.size(); ++i) m.vertices[i] = crown.vertices[i] + t;
    }
    if (report != nullptr) *report = {k, double(k) * params.delta};
    return m;
}

const char* to_string(OcclusalMode m) {
    switch (m) {
        case OcclusalMode::Posterior: return "posterior";
        case OcclusalMode::Anterior: return "anterior";
        case OcclusalMode::Skipped: return "skipped";
    }
    return "?";
}

LabeledMesh fit_crown(const LabeledMesh& crown, const LabeledMesh& neighbors, const LabeledMesh* opposing, int fdi,
                      const FittingParams& params, FittingReport* report) {
    try {
        fdi::require_valid(fdi);
        params.validate();
        FittingReport rep;
        auto scaled = interproximal_adapt(crown, neighbors, params);
        rep.scaling = std::move(scaled.report);
        LabeledMesh m = center_between_neighbors(scaled.mesh, neighbors, &rep.centering_shift);
        const TriangleBvh nb(neighbors);
        {
            const LabeledMesh centered = m;
            const Vec3 c = vertex_mean(centered.vertices);
            double v = contact_volume(TriangleBvh(m), nb, params.volume_resolution);
            while (v > params.v_int_threshold) {
                if (++rep.recentre_shrinks > params.max_scale_iters)
                    throw Error(ErrorKind::NonConvergence, "crown still intersects a neighbour after centering");
                rep.recentre_scale *= params.shrink;
                m = scaled_copy(centered, c, rep.recentre_scale);
                v = contact_volume(TriangleBvh(m), nb, params.volume_resolution);
            }
        }
        const Vec3 dir = occlusal_direction(fdi);
        if (opposing == nullptr) {
            rep.antagonist_missing = true;
            rep.mode = OcclusalMode::Skipped;
        } else if (fdi::is_posterior(fdi)) {
            rep.mode = OcclusalMode::Posterior;
            m = occlusal_correct_posterior(m, *opposing, dir, params, &rep.tap);
            const TriangleBvh opp(*opposing);
            const LabeledMesh tapped = m;
            while (!vertices_inside(m, opp).empty()) {
                if (++rep.clearance_shifts > params.max_shift_iters)
                    throw Error(ErrorKind::NonConvergence, "crown still inside the antagonist after clearance shifts");
                const Vec3 step = -double(rep.clearance_shifts) * params.delta * dir;
                for (std::size_t i = 0; i < m.vertices.size(); ++i) m.vertices[i] = tapped.vertices[i] + step;
            }
        } else {
            rep.mode = OcclusalMode::Anterior;
            m = occlusal_correct_anterior(m, *opposing, dir, params, &rep.shift);
        }
        const TriangleBvh fitted(m);
        rep.residual_neighbor_volume = contact_volume(fitted, nb, params.volume_resolution);
        if (opposing != nullptr) rep.vertices_inside_opposing = vertices_inside(m, TriangleBvh(*opposing)).size();
        if (report != nullptr) *report = std::move(rep);
        return m;
    } catch (const Error& e) {
        throw e.with_stage("fitting");
    }
}

nlohmann::json to_json(const FittingReport& r) {
    nlohmann::json j;
    j["scaling"] = {{"case", r.scaling.initial_collision ? "shrink_to_contact" : "grow_to_contact"},
                    {"initial_volume_mm3", r.scaling.initial_volume},
                    {"final_scale", r.scaling.final_scale},
                    {"final_volume_mm3", r.scaling.final_volume},
                    {"scale_trace", r.scaling.scale_trace},
                    {"volume_trace_mm3", r.scaling.volume_trace}};
    j["centering_shift_mm"] = {r.centering_shift.x(), r.centering_shift.y(), r.centering_shift.z()};
    j["post_centering"] = {{"shrink_steps", r.recentre_shrinks}, {"scale", r.recentre_scale}};
    j["mode"] = to_string(r.mode);
    j["antagonist_missing"] = r.antagonist_missing;
    if (r.mode == OcclusalMode::Posterior)
        j["tap_down"] = {{"cusps", r.tap.cusps.vertices},
                         {"cusp_heights_mm", r.tap.cusps.heights},
                         {"proximity_pass", r.tap.proximity_pass},
                         {"colliding_per_round", r.tap.colliding_per_round},
                         {"displaced_vertices", r.tap.displaced_vertices.size()},
                         {"max_displacement_mm", r.tap.max_displacement}};
    if (r.mode == OcclusalMode::Anterior)
        j["shift"] = {{"steps", r.shift.shifts}, {"total_mm", r.shift.total_shift_mm}};
    if (r.mode == OcclusalMode::Posterior) j["clearance_shifts"] = r.clearance_shifts;
    j["residual_neighbor_volume_mm3"] = r.residual_neighbor_volume;
    j["vertices_inside_opposing"] = r.vertices_inside_opposing;
    return j;
}

}  // namespace crownfit
