#include "crownfit/retrieval.hpp"

#include "crownfit/fdi.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace crownfit {

void Embedding::validate() const {
    if (values.size() != kEmbeddingDim)
        throw Error(ErrorKind::Argument, "embedding must have " + std::to_string(kEmbeddingDim) + " values, got " +
                                             std::to_string(values.size()));
    double sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::Argument, "embedding holds a non-finite value");
        sq += v * v;
    }
    if (!(sq > 0.0)) throw Error(ErrorKind::Argument, "embedding has zero norm");
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.values.size() != b.values.size()) throw Error(ErrorKind::Argument, "cosine: dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        ab += a.values[i] * b.values[i];
        aa += a.values[i] * a.values[i];
        bb += b.values[i] * b.values[i];
    }
    if (!(aa > 0.0) || !(bb > 0.0)) throw Error(ErrorKind::Argument, "cosine: zero vector");
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

void EmbeddingIndex::add_tooth(const std::string& jaw_id, int fdi, Embedding e) {
    fdi::require_valid(fdi);
    e.validate();
    if (!jaws_[jaw_id].emplace(fdi, std::move(e)).second)
        throw Error(ErrorKind::Argument, "duplicate embedding for jaw " + jaw_id + " tooth " + std::to_string(fdi));
}

void EmbeddingIndex::add_crown(const std::string& template_id, Embedding e) {
    e.validate();
    if (!crowns_.emplace(template_id, std::move(e)).second)
        throw Error(ErrorKind::Argument, "duplicate crown template " + template_id);
}

void ContextQuery::validate() const {
    fdi::require_valid(target_fdi);
    if (slots.empty()) throw Error(ErrorKind::Argument, "context query has no slots");
    if (slots.count(target_fdi) != 0) throw Error(ErrorKind::Argument, "context query contains the target tooth");
    for (const auto& [code, e] : slots) {
        fdi::require_valid(code);
        e.validate();
    }
}

std::vector<ContextMatch> score_context(const ContextQuery& query, const EmbeddingIndex& index) {
    query.validate();
    std::vector<ContextMatch> out;
    for (const auto& [jaw_id, teeth] : index.jaws()) {
        if (teeth.count(query.target_fdi) == 0) continue;
        double sum = 0.0;
        std::size_t shared = 0;
        for (const auto& [code, e] : query.slots) {
            const auto it = teeth.find(code);
            if (it == teeth.end()) continue;
            sum += cosine(e, it->second);
            ++shared;
        }
        if (2 * shared < query.slots.size() || shared == 0) continue;
        out.push_back({jaw_id, sum / double(shared), shared});
    }
    return out;
}

ContextMatch match_context(const ContextQuery& query, const EmbeddingIndex& index) {
    const auto scored = score_context(query, index);
    if (scored.empty())
        throw Error(ErrorKind::NoMatch, "no reference jaw holds tooth " + std::to_string(query.target_fdi) +
                                            " and at least half of the context slots");
    // jaw-id order plus strict comparison keeps the smallest id on ties
    const ContextMatch* best = &scored.front();
    for (const auto& m : scored)
        if (m.score > best->score) best = &m;
    return *best;
}

CrownMatch retrieve_crown(const Embedding& donor, const EmbeddingIndex& index) {
    if (index.crowns().empty()) throw Error(ErrorKind::Argument, "crown library is empty");
    CrownMatch best;
    bool first = true;
    for (const auto& [id, e] : index.crowns()) {
        const double s = cosine(donor, e);
        if (first || s > best.score) best = {id, s};
        first = false;
    }
    return best;
}

RetrievalResult retrieve(const ContextQuery& query, const EmbeddingIndex& index) {
    RetrievalResult r;
    r.context = match_context(query, index);
    r.donor_fdi = query.target_fdi;
    r.crown = retrieve_crown(index.jaws().at(r.context.jaw_id).at(query.target_fdi), index);
    return r;
}

std::vector<int> context_positions(int target_fdi) {
    fdi::require_valid(target_fdi);
    std::vector<int> out;
    out.push_back(fdi::mesial_neighbor(target_fdi));
    if (auto d = fdi::distal_neighbor(target_fdi)) out.push_back(*d);
    const Jaw opposing = fdi::jaw(target_fdi) == Jaw::Upper ? Jaw::Lower : Jaw::Upper;
    const int antagonist = fdi::make(opposing, fdi::side(target_fdi), fdi::position(target_fdi));
    out.push_back(antagonist);
    out.push_back(fdi::mesial_neighbor(antagonist));
    if (auto d = fdi::distal_neighbor(antagonist)) out.push_back(*d);
    return out;
}

namespace {

constexpr int kBlock = 64;
constexpr std::size_t kMaxSamples = 400;

void bump(std::array<double, kEmbeddingDim>& h, int block, double t) {
    // t in [0, 1); values outside land in the end bins
    const int b = std::clamp(int(std::floor(t * kBlock)), 0, kBlock - 1);
    h[std::size_t(block * kBlock + b)] += 1.0;
}

}  // namespace

Embedding shape_embedding(const LabeledMesh& mesh, const Vec3& up) {
    if (mesh.vertices.size() < 4) throw Error(ErrorKind::Argument, "shape embedding needs at least 4 vertices");
    if (!mesh.has_normals()) throw Error(ErrorKind::Argument, "shape embedding needs vertex normals");
    const Vec3 u = up.normalized();
    const std::size_t stride = (mesh.vertices.size() + kMaxSamples - 1) / kMaxSamples;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < mesh.vertices.size(); i += stride) ids.push_back(i);

    Vec3 c = Vec3::Zero();
    for (auto i : ids) c += mesh.vertices[i];
    c /= double(ids.size());

    std::array<double, kEmbeddingDim> h{};
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t b = a + 1; b < ids.size(); ++b)
            bump(h, 0, (mesh.vertices[ids[a]] - mesh.vertices[ids[b]]).norm() / 16.0);
    for (auto i : ids) {
        const Vec3 d = mesh.vertices[i] - c;
        bump(h, 1, d.norm() / 8.0);
        bump(h, 2, (d.dot(u) + 6.0) / 12.0);
        bump(h, 3, (mesh.vertex_normals[i].dot(u) + 1.0) / 2.0);
    }
    Embedding e;
    e.values.resize(kEmbeddingDim);
    for (int blk = 0; blk < 4; ++blk) {
        double s = 0.0;
        for (int k = 0; k < kBlock; ++k) s += h[std::size_t(blk * kBlock + k)];
        for (int k = 0; k < kBlock; ++k) e.values[std::size_t(blk * kBlock + k)] = h[std::size_t(blk * kBlock + k)] / s;
    }
    return e;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
    auto s = p;
    s += ".json";
    return s;
}

}  // namespace

void save_embedding_store(const EmbeddingIndex& index, const std::filesystem::path& path) {
    std::vector<float> rows;
    nlohmann::json meta = nlohmann::json::array();
    auto push = [&](const Embedding& e) { rows.insert(rows.end(), e.values.begin(), e.values.end()); };
    for (const auto& [jaw, teeth] : index.jaws())
        for (const auto& [code, e] : teeth) {
            push(e);
            meta.push_back({{"jaw", jaw}, {"fdi", code}});
        }
    for (const auto& [id, e] : index.crowns()) {
        push(e);
        meta.push_back({{"template", id}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const std::uint32_t header[2] = {std::uint32_t(meta.size()), std::uint32_t(kEmbeddingDim)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(rows.data()), std::streamsize(rows.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());

    std::ofstream side(sidecar_path(path));
    if (!side) throw Error(ErrorKind::Io, "cannot write " + sidecar_path(path).string());
    side << nlohmann::json{{"version", 1}, {"dim", kEmbeddingDim}, {"rows", meta}}.dump(1) << '\n';
}

EmbeddingIndex load_embedding_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::uint32_t header[2];
    if (!in.read(reinterpret_cast<char*>(header), sizeof header))
        throw Error(ErrorKind::Parse, "embedding store: short header");
    if (header[1] != kEmbeddingDim)
        throw Error(ErrorKind::Parse, "embedding store: dimension " + std::to_string(header[1]) + ", expected " +
                                          std::to_string(kEmbeddingDim));
    std::vector<float> rows(std::size_t(header[0]) * kEmbeddingDim);
    if (!in.read(reinterpret_cast<char*>(rows.data()), std::streamsize(rows.size() * sizeof(float))))
        throw Error(ErrorKind::Parse, "embedding store: truncated rows");

    std::ifstream side(sidecar_path(path));
    if (!side) throw Error(ErrorKind::Io, "cannot open " + sidecar_path(path).string());
    EmbeddingIndex index;
    try {
        nlohmann::json meta;
        side >> meta;
        const auto& list = meta.at("rows");
        if (list.size() != header[0]) throw Error(ErrorKind::Parse, "embedding store: sidecar row count mismatch");
        for (std::size_t r = 0; r < list.size(); ++r) {
            Embedding e;
            e.values.assign(rows.begin() + std::ptrdiff_t(r * kEmbeddingDim),
                            rows.begin() + std::ptrdiff_t((r + 1) * kEmbeddingDim));
            const auto& m = list[r];
            if (m.contains("template")) index.add_crown(m.at("template").get<std::string>(), std::move(e));
            else index.add_tooth(m.at("jaw").get<std::string>(), m.at("fdi").get<int>(), std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "embedding store sidecar: " + std::string(e.what()));
    }
    return index;
}

}  // namespace crownfit
