#include "crownfit/mesh_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace crownfit {

namespace {

static_assert(std::endian::native == std::endian::little, "binary mesh I/O assumes a little-endian host");

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t offset, const std::string& what) {
    std::ostringstream os;
    os << path.string() << ": " << what << " at byte offset " << offset;
    throw Error(ErrorKind::Parse, os.str());
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// ---- PLY ------------------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> ply_type(const std::string& name) {
    if (name == "char" || name == "int8") return PlyType::Int8;
    if (name == "uchar" || name == "uint8") return PlyType::UInt8;
    if (name == "short" || name == "int16") return PlyType::Int16;
    if (name == "ushort" || name == "uint16") return PlyType::UInt16;
    if (name == "int" || name == "int32") return PlyType::Int32;
    if (name == "uint" || name == "uint32") return PlyType::UInt32;
    if (name == "float" || name == "float32") return PlyType::Float32;
    if (name == "double" || name == "float64") return PlyType::Float64;
    return std::nullopt;
}

std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::Int8:
        case PlyType::UInt8: return 1;
        case PlyType::Int16:
        case PlyType::UInt16: return 2;
        case PlyType::Int32:
        case PlyType::UInt32:
        case PlyType::Float32: return 4;
        case PlyType::Float64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type{};
    bool is_list = false;
    PlyType count_type{};
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

/// Cursor over the body of a PLY file in either encoding.
class PlyReader {
public:
    PlyReader(const std::filesystem::path& path, const std::string& data, std::size_t pos, bool binary)
        : path_(path), data_(data), pos_(pos), binary_(binary) {}

    double read(PlyType t) { return binary_ ? read_binary(t) : read_ascii(); }
    std::size_t offset() const { return pos_; }
    void end_row() {
        if (binary_) return;
        // ASCII rows end at a newline; tolerate trailing whitespace.
        while (pos_ < data_.size() && data_[pos_] != '\n') {
            if (!std::isspace(static_cast<unsigned char>(data_[pos_]))) parse_error(path_, pos_, "unexpected extra token in PLY row");
            ++pos_;
        }
        if (pos_ < data_.size()) ++pos_;
    }

private:
    double read_binary(PlyType t) {
        const auto n = ply_size(t);
        if (pos_ + n > data_.size()) parse_error(path_, pos_, "unexpected end of binary PLY body");
        const char* p = data_.data() + pos_;
        pos_ += n;
        switch (t) {
            case PlyType::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
            case PlyType::UInt8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
            case PlyType::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
            case PlyType::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
            case PlyType::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
            case PlyType::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
            case PlyType::Float32: { float v; std::memcpy(&v, p, 4); return v; }
            case PlyType::Float64: { double v; std::memcpy(&v, p, 8); return v; }
        }
        return 0.0;
    }

    double read_ascii() {
        while (pos_ < data_.size() && (data_[pos_] == ' ' || data_[pos_] == '\t' || data_[pos_] == '\r')) ++pos_;
        if (pos_ >= data_.size() || data_[pos_] == '\n') parse_error(path_, pos_, "missing value in ASCII PLY row");
        const char* begin = data_.data() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) parse_error(path_, pos_, "malformed number in ASCII PLY body");
        pos_ += static_cast<std::size_t>(end - begin);
        return v;
    }

    const std::filesystem::path& path_;
    const std::string& data_;
    std::size_t pos_;
    bool binary_;
};

LabeledMesh load_ply(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    std::size_t pos = 0;
    auto next_line = [&](std::string& line) -> std::size_t {
        const std::size_t start = pos;
        if (pos >= data.size()) parse_error(path, pos, "unexpected end of PLY header");
        const auto nl = data.find('\n', pos);
        if (nl == std::string::npos) parse_error(path, pos, "unterminated PLY header line");
        line = data.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = nl + 1;
        return start;
    };

    std::string line;
    next_line(line);
    if (line != "ply") parse_error(path, 0, "missing 'ply' magic");

    bool binary = false;
    bool saw_format = false;
    std::vector<PlyElement> elements;
    while (true) {
        const std::size_t at = next_line(line);
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else parse_error(path, at, "unsupported PLY format '" + fmt + "'");
            saw_format = true;
        } else if (kw == "element") {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (!ls || count < 0) parse_error(path, at, "malformed element line");
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (kw == "property") {
            if (elements.empty()) parse_error(path, at, "property before any element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                const auto c = ply_type(ct);
                const auto i = ply_type(it);
                if (!c || !i || p.name.empty()) parse_error(path, at, "malformed list property");
                p.is_list = true;
                p.count_type = *c;
                p.type = *i;
            } else {
                const auto ty = ply_type(t);
                ls >> p.name;
                if (!ty || p.name.empty()) parse_error(path, at, "unknown property type '" + t + "'");
                p.type = *ty;
            }
            elements.back().properties.push_back(std::move(p));
        } else {
            parse_error(path, at, "unknown PLY header keyword '" + kw + "'");
        }
    }
    if (!saw_format) parse_error(path, pos, "PLY header has no format line");

    LabeledMesh mesh;
    PlyReader reader(path, data, pos, binary);
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
            for (int k = 0; k < int(e.properties.size()); ++k) {
                const auto& n = e.properties[k].name;
                if (n == "x") ix = k; else if (n == "y") iy = k; else if (n == "z") iz = k;
                else if (n == "nx") inx = k; else if (n == "ny") iny = k; else if (n == "nz") inz = k;
            }
            if (ix < 0 || iy < 0 || iz < 0) parse_error(path, reader.offset(), "vertex element lacks x/y/z");
            const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
            mesh.vertices.resize(e.count);
            if (normals) mesh.vertex_normals.resize(e.count);
            std::vector<double> row(e.properties.size());
            for (std::size_t i = 0; i < e.count; ++i) {
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (p.is_list) {
                        const auto n = static_cast<std::size_t>(reader.read(p.count_type));
                        for (std::size_t j = 0; j < n; ++j) reader.read(p.type);
                        row[k] = 0.0;
                    } else {
                        row[k] = reader.read(p.type);
                    }
                }
                reader.end_row();
                mesh.vertices[i] = Vec3(row[ix], row[iy], row[iz]);
                if (normals) mesh.vertex_normals[i] = Vec3(row[inx], row[iny], row[inz]);
            }
        } else if (e.name == "face") {
            int iidx = -1, ilabel = -1;
            for (int k = 0; k < int(e.properties.size()); ++k) {
                const auto& n = e.properties[k].name;
                if (n == "vertex_indices" || n == "vertex_index") iidx = k;
                else if (n == "label") ilabel = k;
            }
            if (iidx < 0 || !e.properties[iidx].is_list) parse_error(path, reader.offset(), "face element lacks vertex_indices list");
            mesh.faces.reserve(e.count);
            if (ilabel >= 0) mesh.face_labels.reserve(e.count);
            std::vector<std::uint32_t> poly;
            for (std::size_t i = 0; i < e.count; ++i) {
                const std::size_t row_start = reader.offset();
                double lab = 0.0;
                poly.clear();
                for (int k = 0; k < int(e.properties.size()); ++k) {
                    const auto& p = e.properties[k];
                    if (p.is_list) {
                        const double n = reader.read(p.count_type);
                        if (n < 0) parse_error(path, row_start, "negative list length");
                        for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
                            const double v = reader.read(p.type);
                            if (k == iidx) {
                                if (v < 0 || v > double(std::numeric_limits<std::uint32_t>::max()))
                                    parse_error(path, row_start, "face index out of representable range");
                                poly.push_back(static_cast<std::uint32_t>(v));
                            }
                        }
                    } else {
                        const double v = reader.read(p.type);
                        if (k == ilabel) lab = v;
                    }
                }
                reader.end_row();
                if (poly.size() < 3) parse_error(path, row_start, "face with fewer than 3 vertices");
                // fan-triangulate polygons
                for (std::size_t j = 1; j + 1 < poly.size(); ++j) {
                    mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
                    if (ilabel >= 0) {
                        if (lab < 0 || lab > 255) parse_error(path, row_start, "face label outside uchar range");
                        mesh.face_labels.push_back(static_cast<std::uint8_t>(lab));
                    }
                }
            }
        } else {
            // skip unknown elements
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto n = static_cast<std::size_t>(reader.read(p.count_type));
                        for (std::size_t j = 0; j < n; ++j) reader.read(p.type);
                    } else {
                        reader.read(p.type);
                    }
                }
                reader.end_row();
            }
        }
    }
    return mesh;
}

void write_ply(const LabeledMesh& mesh, std::ostream& out, const SaveOptions& options) {
    const bool normals = options.write_normals && mesh.has_normals();
    const bool labels = options.write_labels && mesh.has_labels();
    out << "ply\n"
        << "format " << (options.binary ? "binary_little_endian" : "ascii") << " 1.0\n"
        << "element vertex " << mesh.vertices.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "element face " << mesh.faces.size() << "\n"
        << "property list uchar uint vertex_indices\n";
    if (labels) out << "property uchar label\n";
    out << "end_header\n";
    if (options.binary) {
        auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            for (int k = 0; k < 3; ++k) put(mesh.vertices[i][k]);
            if (normals)
                for (int k = 0; k < 3; ++k) put(mesh.vertex_normals[i][k]);
        }
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const std::uint8_t n = 3;
            put(n);
            for (auto idx : mesh.faces[f]) put(idx);
            if (labels) put(mesh.face_labels[f]);
        }
    } else {
        out << std::setprecision(17);
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const auto& v = mesh.vertices[i];
            out << v.x() << ' ' << v.y() << ' ' << v.z();
            if (normals) {
                const auto& n = mesh.vertex_normals[i];
                out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
            }
            out << '\n';
        }
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& fc = mesh.faces[f];
            out << "3 " << fc[0] << ' ' << fc[1] << ' ' << fc[2];
            if (labels) out << ' ' << int(mesh.face_labels[f]);
            out << '\n';
        }
    }
}

// ---- OBJ ------------------------------------------------------------------

LabeledMesh load_obj(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    LabeledMesh mesh;
    std::vector<Vec3> normals;
    std::vector<std::int64_t> vertex_normal_idx;
    std::size_t pos = 0;
    while (pos < data.size()) {
        const std::size_t start = pos;
        auto nl = data.find('\n', pos);
        if (nl == std::string::npos) nl = data.size();
        std::string line = data.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw.empty() || kw[0] == '#') continue;
        if (kw == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) parse_error(path, start, "malformed vertex line");
            mesh.vertices.emplace_back(x, y, z);
        } else if (kw == "vn") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) parse_error(path, start, "malformed normal line");
            normals.emplace_back(x, y, z);
        } else if (kw == "f") {
            std::vector<std::uint32_t> poly;
            std::vector<std::int64_t> npoly;
            std::string tok;
            while (ls >> tok) {
                const auto s1 = tok.find('/');
                long long vi = 0;
                try {
                    vi = std::stoll(tok.substr(0, s1));
                } catch (...) {
                    parse_error(path, start, "malformed face index '" + tok + "'");
                }
                if (vi < 0) vi = static_cast<long long>(mesh.vertices.size()) + vi + 1;
                if (vi <= 0) parse_error(path, start, "face index out of range");
                poly.push_back(static_cast<std::uint32_t>(vi - 1));
                std::int64_t ni = -1;
                if (s1 != std::string::npos) {
                    const auto s2 = tok.find('/', s1 + 1);
                    if (s2 != std::string::npos && s2 + 1 < tok.size()) {
                        try {
                            ni = std::stoll(tok.substr(s2 + 1)) - 1;
                        } catch (...) {
                            parse_error(path, start, "malformed normal index '" + tok + "'");
                        }
                    }
                }
                npoly.push_back(ni);
            }
            if (poly.size() < 3) parse_error(path, start, "face with fewer than 3 vertices");
            for (std::size_t j = 1; j + 1 < poly.size(); ++j) mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
            if (vertex_normal_idx.size() < mesh.vertices.size()) vertex_normal_idx.resize(mesh.vertices.size(), -1);
            for (std::size_t j = 0; j < poly.size(); ++j)
                if (poly[j] < vertex_normal_idx.size() && npoly[j] >= 0) vertex_normal_idx[poly[j]] = npoly[j];
        }
        // other statements (vt, g, o, s, usemtl, mtllib) are ignored
    }
    vertex_normal_idx.resize(mesh.vertices.size(), -1);
    const bool all_normals = !mesh.vertices.empty() && std::all_of(vertex_normal_idx.begin(), vertex_normal_idx.end(), [&](auto i) {
        return i >= 0 && static_cast<std::size_t>(i) < normals.size();
    });
    if (all_normals) {
        mesh.vertex_normals.resize(mesh.vertices.size());
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.vertex_normals[i] = normals[vertex_normal_idx[i]];
    }
    return mesh;
}

void write_obj(const LabeledMesh& mesh, std::ostream& out, const SaveOptions& options) {
    const bool normals = options.write_normals && mesh.has_normals();
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    if (normals)
        for (const auto& n : mesh.vertex_normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    for (const auto& f : mesh.faces) {
        out << 'f';
        for (auto idx : f) {
            out << ' ' << idx + 1;
            if (normals) out << "//" << idx + 1;
        }
        out << '\n';
    }
}

// ---- STL ------------------------------------------------------------------

/// STL stores unindexed triangles; identical coordinates are welded.
struct VertexWelder {
    std::map<std::array<double, 3>, std::uint32_t> index;
    LabeledMesh* mesh;

    std::uint32_t add(const Vec3& p) {
        const std::array<double, 3> key{p.x(), p.y(), p.z()};
        auto [it, inserted] = index.emplace(key, static_cast<std::uint32_t>(mesh->vertices.size()));
        if (inserted) mesh->vertices.push_back(p);
        return it->second;
    }
};

LabeledMesh load_stl(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    LabeledMesh mesh;
    VertexWelder weld{{}, &mesh};
    const bool ascii_magic = data.size() >= 5 && data.compare(0, 5, "solid") == 0;
    if (data.size() >= 84) {
        std::uint32_t n = 0;
        std::memcpy(&n, data.data() + 80, 4);
        if (84 + std::size_t(n) * 50 == data.size()) {
            for (std::uint32_t t = 0; t < n; ++t) {
                const char* rec = data.data() + 84 + std::size_t(t) * 50;
                Face f{};
                for (int k = 0; k < 3; ++k) {
                    float xyz[3];
                    std::memcpy(xyz, rec + 12 + 12 * k, 12);
                    f[k] = weld.add(Vec3(xyz[0], xyz[1], xyz[2]));
                }
                mesh.faces.push_back(f);
            }
            return mesh;
        }
    }
    if (!ascii_magic) parse_error(path, std::min<std::size_t>(data.size(), 80), "binary STL size does not match its triangle count");
    std::istringstream in(data);
    std::string tok;
    std::vector<std::uint32_t> tri;
    while (in >> tok) {
        if (tok == "vertex") {
            const auto at = static_cast<std::size_t>(in.tellg());
            double x, y, z;
            if (!(in >> x >> y >> z)) parse_error(path, at, "malformed ASCII STL vertex");
            tri.push_back(weld.add(Vec3(x, y, z)));
        } else if (tok == "endfacet") {
            if (tri.size() != 3) parse_error(path, static_cast<std::size_t>(in.tellg()), "facet without exactly 3 vertices");
            mesh.faces.push_back({tri[0], tri[1], tri[2]});
            tri.clear();
        }
    }
    return mesh;
}

void write_stl(const LabeledMesh& mesh, std::ostream& out) {
    char header[80] = {};
    std::strncpy(header, "crownfit binary STL", sizeof(header) - 1);
    out.write(header, 80);
    const auto n = static_cast<std::uint32_t>(mesh.faces.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        Vec3 nrm = face_normal_unnormalized(mesh, f);
        if (nrm.norm() > 0) nrm.normalize();
        float buf[12];
        for (int k = 0; k < 3; ++k) buf[k] = static_cast<float>(nrm[k]);
        for (int v = 0; v < 3; ++v)
            for (int k = 0; k < 3; ++k) buf[3 + 3 * v + k] = static_cast<float>(mesh.vertices[mesh.faces[f][v]][k]);
        out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
        const std::uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(&attr), 2);
    }
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = lower(path.extension().string());
    if (ext == ".ply") return MeshFormat::Ply;
    if (ext == ".obj") return MeshFormat::Obj;
    if (ext == ".stl") return MeshFormat::Stl;
    throw Error(ErrorKind::Argument, "unknown mesh extension '" + ext + "' for " + path.string());
}

LabeledMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path.string());
    LabeledMesh mesh;
    switch (format) {
        case MeshFormat::Ply: mesh = load_ply(path); break;
        case MeshFormat::Obj: mesh = load_obj(path); break;
        case MeshFormat::Stl: mesh = load_stl(path); break;
    }
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
        for (auto idx : mesh.faces[f])
            if (idx >= mesh.vertices.size())
                throw Error(ErrorKind::Validation, path.string() + ": face " + std::to_string(f) + " index " +
                                                       std::to_string(idx) + " out of range");
    // Normals in files may be slightly off unit length; renormalise rather than reject.
    for (auto& n : mesh.vertex_normals) {
        const double len = n.norm();
        n = len > 0 ? Vec3(n / len) : Vec3::UnitZ();
    }
    return mesh;
}

LabeledMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

void save_mesh(const LabeledMesh& mesh, const std::filesystem::path& path, MeshFormat format, const SaveOptions& options,
               Warnings* warnings) {
    validate(mesh);
    if (format == MeshFormat::Stl && options.write_labels && mesh.has_labels())
        throw Error(ErrorKind::Unsupported, "STL cannot store face labels");
    if (format == MeshFormat::Obj && options.write_labels && mesh.has_labels())
        warn(warnings, "OBJ has no face label channel; " + std::to_string(mesh.face_labels.size()) + " labels dropped writing " +
                           path.string());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    switch (format) {
        case MeshFormat::Ply: write_ply(mesh, out, options); break;
        case MeshFormat::Obj: write_obj(mesh, out, options); break;
        case MeshFormat::Stl: write_stl(mesh, out); break;
    }
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void save_mesh(const LabeledMesh& mesh, const std::filesystem::path& path) {
    const auto format = format_from_path(path);
    SaveOptions options;
    options.write_labels = format == MeshFormat::Ply;
    save_mesh(mesh, path, format, options);
}

}  // namespace crownfit
