#include "crownfit/template_library.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>

#include "crownfit/mesh_io.hpp"
#include "crownfit/spatial_index.hpp"

namespace crownfit {

namespace {

constexpr int kManifestVersion = 1;

bool is_tooth_class(std::uint8_t l) { return l >= 1 && l <= 16; }

}  // namespace

std::map<std::uint8_t, Vec3> extract_tooth_centroids(const LabeledMesh& scan) {
    if (!scan.has_labels()) throw Error(ErrorKind::Argument, "extract_tooth_centroids: mesh has no labels");
    std::map<std::uint8_t, Vec3> out;
    for (const auto& [lab, c] : label_centroids(scan))
        if (is_tooth_class(lab)) out.emplace(lab, c);
    if (out.empty()) throw Error(ErrorKind::Argument, "extract_tooth_centroids: no tooth-labelled faces");
    return out;
}

CentroidCurve build_average_curve(std::span<const LabeledMesh> scans) {
    if (scans.empty()) throw Error(ErrorKind::Argument, "build_average_curve: no scans");
    CentroidCurve curve;
    std::map<std::uint8_t, Vec3> sum;
    for (const auto& s : scans)
        for (const auto& [cls, c] : extract_tooth_centroids(s)) {
            sum.try_emplace(cls, Vec3::Zero()).first->second += c;
            ++curve.count[cls];
        }
    for (const auto& [cls, s] : sum) curve.mean[cls] = s / double(curve.count[cls]);
    return curve;
}

double curve_distance(const std::map<std::uint8_t, Vec3>& centroids, const CentroidCurve& curve) {
    double total = 0.0;
    std::size_t shared = 0;
    for (const auto& [cls, c] : centroids) {
        const auto it = curve.mean.find(cls);
        if (it == curve.mean.end()) continue;
        total += (c - it->second).norm();
        ++shared;
    }
    if (shared == 0) throw Error(ErrorKind::Argument, "curve_distance: no class shared with the curve");
    return total / double(shared);
}

std::size_t select_canonical(std::span<const LabeledMesh> scans, const CentroidCurve& curve) {
    if (scans.empty()) throw Error(ErrorKind::Argument, "select_canonical: no scans");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scans.size(); ++i) {
        const double d = curve_distance(extract_tooth_centroids(scans[i]), curve);
        if (d < best_d) best_d = d, best = i;
    }
    return best;
}

std::set<std::uint8_t> partial_cut_spec(Side side) {
    std::set<std::uint8_t> out;
    switch (side) {
        case Side::Right:
            for (std::uint8_t p = 3; p <= 8; ++p) out.insert(p);
            break;
        case Side::Left:
            for (std::uint8_t p = 3; p <= 8; ++p) out.insert(std::uint8_t(8 + p));
            break;
        case Side::Center:
            out = {1, 2, 3, 9, 10, 11};
            break;
    }
    return out;
}

LabeledMesh derive_partial(const LabeledMesh& master, const std::set<std::uint8_t>& cut, double gingiva_margin) {
    if (!master.has_labels()) throw Error(ErrorKind::Argument, "derive_partial: master has no labels");
    if (cut.empty()) throw Error(ErrorKind::Argument, "derive_partial: empty cut specification");
    if (!(gingiva_margin >= 0.0)) throw Error(ErrorKind::Argument, "derive_partial: negative gingiva margin");
    std::vector<char> tooth_vertex(master.vertices.size(), 0);
    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < master.faces.size(); ++f) {
        if (!cut.count(master.face_labels[f])) continue;
        keep.push_back(f);
        for (auto v : master.faces[f]) tooth_vertex[v] = 1;
    }
    if (keep.empty()) throw Error(ErrorKind::Argument, "derive_partial: cut keeps no tooth faces");
    std::vector<Vec3> tooth_points;
    for (std::size_t v = 0; v < master.vertices.size(); ++v)
        if (tooth_vertex[v]) tooth_points.push_back(master.vertices[v]);
    const SpatialIndex index(tooth_points);
    const double r2 = gingiva_margin * gingiva_margin;
    for (std::size_t f = 0; f < master.faces.size(); ++f) {
        if (master.face_labels[f] != 0) continue;
        for (auto v : master.faces[f])
            if (index.nearest(master.vertices[v]).distance_sq <= r2) {
                keep.push_back(f);
                break;
            }
    }
    std::sort(keep.begin(), keep.end());
    return submesh(master, keep);
}

std::string to_string(const TemplateKey& key) {
    std::string s = key.jaw == Jaw::Upper ? "upper" : "lower";
    if (key.full) return s;
    switch (key.side) {
        case Side::Left: return s + "_left";
        case Side::Right: return s + "_right";
        case Side::Center: return s + "_center";
    }
    return s;
}

TemplateKey template_key_from_string(const std::string& s) {
    for (Jaw j : {Jaw::Upper, Jaw::Lower}) {
        if (s == to_string(TemplateKey::master(j))) return TemplateKey::master(j);
        for (Side side : {Side::Left, Side::Right, Side::Center})
            if (s == to_string(TemplateKey::partial(j, side))) return TemplateKey::partial(j, side);
    }
    throw Error(ErrorKind::Argument, "unknown template key '" + s + "'");
}

const LabeledMesh& TemplateLibrary::partial(Jaw jaw, Side side) const {
    const auto it = partials.find(TemplateKey::partial(jaw, side));
    if (it == partials.end())
        throw Error(ErrorKind::Argument, "template library has no partial " + to_string(TemplateKey::partial(jaw, side)));
    return it->second;
}

const LabeledMesh& TemplateLibrary::get(const TemplateKey& key) const {
    return key.full ? master(key.jaw) : partial(key.jaw, key.side);
}

void TemplateLibrary::validate() const {
    if (master_upper.faces.empty() || master_lower.faces.empty())
        throw Error(ErrorKind::Validation, "template library: missing master template");
    if (partials.size() != 6) throw Error(ErrorKind::Validation, "template library: expected 6 partial templates");
    for (Jaw j : {Jaw::Upper, Jaw::Lower})
        for (Side s : {Side::Left, Side::Right, Side::Center})
            if (!partials.count(TemplateKey::partial(j, s)))
                throw Error(ErrorKind::Validation, "template library: missing " + to_string(TemplateKey::partial(j, s)));
}

TemplateLibrary make_library(LabeledMesh master_upper, LabeledMesh master_lower, double gingiva_margin) {
    TemplateLibrary lib;
    lib.master_upper = std::move(master_upper);
    lib.master_lower = std::move(master_lower);
    lib.gingiva_margin = gingiva_margin;
    for (Jaw j : {Jaw::Upper, Jaw::Lower})
        for (Side s : {Side::Left, Side::Right, Side::Center})
            lib.partials[TemplateKey::partial(j, s)] = derive_partial(lib.master(j), partial_cut_spec(s), gingiva_margin);
    return lib;
}

TemplateLibrary build_library(std::span<const LabeledMesh> upper_scans, std::span<const LabeledMesh> lower_scans,
                              double gingiva_margin) {
    const auto pick = [](std::span<const LabeledMesh> scans) {
        return scans[select_canonical(scans, build_average_curve(scans))];
    };
    return make_library(pick(upper_scans), pick(lower_scans), gingiva_margin);
}

void save_library(const TemplateLibrary& lib, const std::filesystem::path& dir) {
    lib.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create template directory " + dir.string() + ": " + ec.message());
    nlohmann::json manifest;
    manifest["version"] = kManifestVersion;
    manifest["gingiva_margin_mm"] = lib.gingiva_margin;
    auto write = [&](const TemplateKey& key, const LabeledMesh& mesh) {
        const std::string file = to_string(key) + ".ply";
        save_mesh(mesh, dir / file);
        manifest["templates"][to_string(key)] = file;
    };
    write(TemplateKey::master(Jaw::Upper), lib.master_upper);
    write(TemplateKey::master(Jaw::Lower), lib.master_lower);
    for (const auto& [key, mesh] : lib.partials) {
        write(key, mesh);
        const auto cut = partial_cut_spec(key.side);
        manifest["cut_specs"][to_string(key)] = std::vector<int>(cut.begin(), cut.end());
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

TemplateLibrary load_library(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "template manifest: " + std::string(e.what()));
    }
    if (manifest.value("version", 0) != kManifestVersion)
        throw Error(ErrorKind::Unsupported, "template manifest: unsupported version");
    if (!manifest.contains("templates") || !manifest["templates"].is_object())
        throw Error(ErrorKind::Parse, "template manifest: missing 'templates'");
    TemplateLibrary lib;
    lib.gingiva_margin = manifest.value("gingiva_margin_mm", 2.0);
    for (const auto& [name, file] : manifest["templates"].items()) {
        const TemplateKey key = template_key_from_string(name);
        LabeledMesh mesh = load_mesh(dir / file.get<std::string>());
        if (key.full) (key.jaw == Jaw::Upper ? lib.master_upper : lib.master_lower) = std::move(mesh);
        else lib.partials[key] = std::move(mesh);
    }
    lib.validate();
    return lib;
}

}  // namespace crownfit
