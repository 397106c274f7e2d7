#include "crownfit/label_refine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "crownfit/maxflow.hpp"

namespace crownfit {

namespace {

constexpr double kProbFloor = 1e-12;

double unary(const FaceLabelProbabilities& p, std::size_t f, std::size_t c) {
    return -std::log(std::max(p.at(f, c), kProbFloor));
}

void check_inputs(const LabeledMesh& mesh, const FaceLabelProbabilities& probs) {
    if (probs.classes == 0 || probs.classes > 256) throw Error(ErrorKind::Argument, "graphcut: bad class count");
    if (probs.values.size() != mesh.faces.size() * probs.classes)
        throw Error(ErrorKind::Argument, "graphcut: probability rows do not match the face count");
    for (double v : probs.values)
        if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::Argument, "graphcut: non-finite or negative probability");
}

}  // namespace

void FaceLabelProbabilities::validate(double tolerance) const {
    if (classes == 0) throw Error(ErrorKind::Validation, "probabilities: zero classes");
    if (values.size() % classes != 0) throw Error(ErrorKind::Validation, "probabilities: ragged matrix");
    for (std::size_t f = 0; f < faces(); ++f) {
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double v = at(f, c);
            if (!std::isfinite(v) || v < 0.0)
                throw Error(ErrorKind::Validation, "probabilities: invalid entry in row " + std::to_string(f));
            s += v;
        }
        if (std::abs(s - 1.0) > tolerance)
            throw Error(ErrorKind::Validation, "probabilities: row " + std::to_string(f) + " does not sum to 1");
    }
}

std::vector<std::uint8_t> FaceLabelProbabilities::argmax() const {
    std::vector<std::uint8_t> out(faces(), 0);
    for (std::size_t f = 0; f < out.size(); ++f) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (at(f, c) > at(f, best)) best = c;
        out[f] = std::uint8_t(best);
    }
    return out;
}

std::vector<PairwiseEdge> dihedral_edges(const LabeledMesh& mesh, double beta) {
    std::vector<Vec3> normals(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Vec3 n = face_normal_unnormalized(mesh, f);
        const double len = n.norm();
        normals[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
    std::vector<PairwiseEdge> out;
    const auto adj = face_adjacency(mesh);
    for (std::uint32_t f = 0; f < adj.size(); ++f)
        for (auto g : adj[f]) {
            if (g <= f) continue;
            const bool ok = normals[f].squaredNorm() > 0.0 && normals[g].squaredNorm() > 0.0;
            const double cosine = ok ? std::clamp(normals[f].dot(normals[g]), -1.0, 1.0) : 1.0;
            out.push_back({f, g, std::exp(-beta * (1.0 - cosine))});
        }
    return out;
}

double labeling_energy(const FaceLabelProbabilities& probs, const std::vector<PairwiseEdge>& edges, double lambda,
                       const std::vector<std::uint8_t>& labels) {
    double e = 0.0;
    for (std::size_t f = 0; f < labels.size(); ++f) e += unary(probs, f, labels[f]);
    double pair = 0.0;
    for (const auto& ed : edges)
        if (labels[ed.a] != labels[ed.b]) pair += ed.weight;
    return e + lambda * pair;
}

std::vector<std::uint8_t> graphcut_refine(const LabeledMesh& mesh, const FaceLabelProbabilities& probs,
                                          const GraphCutParams& params) {
    check_inputs(mesh, probs);
    if (!(params.lambda >= 0.0)) throw Error(ErrorKind::Argument, "graphcut: lambda must be >= 0");
    std::vector<std::uint8_t> labels = probs.argmax();
    if (params.lambda == 0.0 || mesh.faces.empty()) return labels;

    const auto edges = dihedral_edges(mesh, params.beta);
    const std::size_t n = mesh.faces.size();
    double energy = labeling_energy(probs, edges, params.lambda, labels);
    for (int cycle = 0; cycle < params.max_cycles; ++cycle) {
        bool improved = false;
        for (std::size_t alpha = 0; alpha < probs.classes; ++alpha) {
            // x_f = 1 switches face f to alpha; source side keeps the label.
            std::vector<double> cost0(n), cost1(n);
            for (std::size_t f = 0; f < n; ++f) {
                cost0[f] = unary(probs, f, labels[f]);
                cost1[f] = unary(probs, f, alpha);
            }
            MaxFlow g(n + 2);
            const std::size_t s = n, t = n + 1;
            for (const auto& ed : edges) {
                const double w = params.lambda * ed.weight;
                const std::uint8_t la = labels[ed.a], lb = labels[ed.b];
                const double e00 = la != lb ? w : 0.0;
                const double e01 = la != alpha ? w : 0.0;
                const double e10 = lb != alpha ? w : 0.0;
                // E = e00 + (e10 - e00) x_a + (0 - e10) x_b + (e01 + e10 - e00) (1 - x_a) x_b
                cost1[ed.a] += e10 - e00;
                cost1[ed.b] += -e10;
                const double coupling = e01 + e10 - e00;
                if (coupling > 0.0) g.add_edge(ed.a, ed.b, coupling);
                // constant e00 is irrelevant to the cut
            }
            for (std::size_t f = 0; f < n; ++f) {
                const double m = std::min(cost0[f], cost1[f]);
                if (cost1[f] - m > 0.0) g.add_edge(s, f, cost1[f] - m);
                if (cost0[f] - m > 0.0) g.add_edge(f, t, cost0[f] - m);
            }
            g.solve(s, t);
            std::vector<std::uint8_t> next = labels;
            bool changed = false;
            for (std::size_t f = 0; f < n; ++f)
                if (!g.source_side(f) && next[f] != alpha) next[f] = std::uint8_t(alpha), changed = true;
            if (!changed) continue;
            const double e = labeling_energy(probs, edges, params.lambda, next);
            if (e < energy - 1e-12 * std::max(1.0, std::abs(energy))) {
                labels = std::move(next);
                energy = e;
                improved = true;
            }
        }
        if (!improved) break;
    }
    return labels;
}

std::vector<std::uint8_t> reassign_small_components(const std::vector<std::uint8_t>& labels, const LabeledMesh& mesh,
                                                    std::size_t min_faces) {
    if (labels.size() != mesh.faces.size())
        throw Error(ErrorKind::Argument, "reassign_small_components: label count does not match the face count");
    const auto adj = face_adjacency(mesh);
    std::vector<std::uint8_t> out = labels;
    std::vector<char> seen(labels.size(), 0);
    std::vector<std::uint32_t> stack, comp;
    for (std::uint32_t f = 0; f < labels.size(); ++f) {
        if (seen[f]) continue;
        comp.clear();
        stack.assign(1, f);
        seen[f] = 1;
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            comp.push_back(v);
            for (auto g : adj[v])
                if (!seen[g] && labels[g] == labels[f]) seen[g] = 1, stack.push_back(g);
        }
        if (comp.size() < min_faces)
            for (auto v : comp) out[v] = 0;
    }
    return out;
}

void save_probabilities(const FaceLabelProbabilities& probs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const std::uint32_t header[2] = {std::uint32_t(probs.faces()), std::uint32_t(probs.classes)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    std::vector<float> row(probs.values.begin(), probs.values.end());
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

FaceLabelProbabilities load_probabilities(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    FaceLabelProbabilities p;
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            in >> j;
            p.classes = j.at("classes").get<std::size_t>();
            for (const auto& row : j.at("rows")) {
                if (row.size() != p.classes) throw Error(ErrorKind::Parse, "probabilities: row length mismatch");
                for (const auto& v : row) p.values.push_back(v.get<double>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, "probabilities: " + std::string(e.what()));
        }
        return p;
    }
    std::uint32_t header[2];
    if (!in.read(reinterpret_cast<char*>(header), sizeof header)) throw Error(ErrorKind::Parse, "probabilities: short header");
    p.classes = header[1];
    if (p.classes == 0) throw Error(ErrorKind::Parse, "probabilities: zero classes");
    std::vector<float> raw(std::size_t(header[0]) * p.classes);
    if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(float))))
        throw Error(ErrorKind::Parse, "probabilities: truncated matrix");
    p.values.assign(raw.begin(), raw.end());
    return p;
}

FaceLabelProbabilities FileSegmenter::segment(const LabeledMesh& scan) const {
    FaceLabelProbabilities p = load_probabilities(path_);
    if (p.faces() != scan.faces.size())
        throw Error(ErrorKind::Validation, "segmentation file rows do not match the scan face count");
    return p;
}

FaceLabelProbabilities corrupt_ground_truth(const LabeledMesh& mesh, const CorruptionSpec& spec) {
    if (!mesh.has_labels()) throw Error(ErrorKind::Argument, "corrupt_ground_truth: mesh has no labels");
    if (spec.classes < 2 || spec.classes > 256) throw Error(ErrorKind::Argument, "corrupt_ground_truth: bad class count");
    if (!(spec.confidence > 0.5 && spec.confidence <= 1.0))
        throw Error(ErrorKind::Argument, "corrupt_ground_truth: confidence must lie in (0.5, 1]");
    const std::size_t n = mesh.faces.size(), k = spec.classes;
    for (auto l : mesh.face_labels)
        if (l >= k) throw Error(ErrorKind::Argument, "corrupt_ground_truth: label outside the class range");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    const auto adj = face_adjacency(mesh);

    // Wrong label per face: a neighbouring label within the boundary rings.
    std::vector<int> wrong(n, -1);
    for (std::size_t f = 0; f < n; ++f) {
        std::vector<std::uint32_t> frontier = {std::uint32_t(f)}, next;
        std::vector<std::uint32_t> visited = {std::uint32_t(f)};
        for (int ring = 0; ring < spec.boundary_rings && wrong[f] < 0; ++ring) {
            next.clear();
            for (auto v : frontier)
                for (auto g : adj[v]) {
                    if (std::find(visited.begin(), visited.end(), g) != visited.end()) continue;
                    visited.push_back(g);
                    next.push_back(g);
                    if (wrong[f] < 0 && mesh.face_labels[g] != mesh.face_labels[f]) wrong[f] = mesh.face_labels[g];
                }
            frontier.swap(next);
        }
    }

    std::vector<int> target(n);
    for (std::size_t f = 0; f < n; ++f) {
        target[f] = mesh.face_labels[f];
        if (wrong[f] >= 0 && u01(rng) < spec.boundary_flip_rate) target[f] = wrong[f];
    }
    for (std::size_t f = 0; f < n; ++f) {
        if (u01(rng) >= spec.island_rate) continue;
        int lab = int(u01(rng) * double(k - 1));
        if (lab >= mesh.face_labels[f]) ++lab;
        target[f] = lab;
        for (auto g : adj[f]) target[g] = lab;
    }

    FaceLabelProbabilities p;
    p.classes = k;
    p.values.assign(n * k, 0.0);
    std::vector<double> noise(k);
    for (std::size_t f = 0; f < n; ++f) {
        double s = 0.0;
        for (auto& v : noise) s += (v = expo(rng));
        for (std::size_t c = 0; c < k; ++c) p.at(f, c) = (1.0 - spec.confidence) * noise[c] / s;
        const std::size_t t = std::size_t(target[f]);
        p.at(f, t) += spec.confidence;
        if (t != mesh.face_labels[f]) {
            // keep the true label as runner-up so the unary still carries signal
            const double moved = 0.25 * p.at(f, t);
            p.at(f, t) -= moved;
            p.at(f, mesh.face_labels[f]) += moved;
        }
    }
    return p;
}

}  // namespace crownfit
