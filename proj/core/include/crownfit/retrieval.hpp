#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crownfit/mesh.hpp"

namespace crownfit {

inline constexpr std::size_t kEmbeddingDim = 256;

/// Opaque shape signature of one tooth or crown.
struct Embedding {
    std::vector<double> values;

    /// Throws Argument unless the dimension is kEmbeddingDim, every value is
    /// finite and the norm is positive.
    void validate() const;
};

/// Cosine similarity. Throws Argument on a dimension mismatch or a zero vector.
double cosine(const Embedding& a, const Embedding& b);

/// Reference jaws (tooth embeddings keyed by FDI) and the crown library
/// (embeddings keyed by template id). Ordered maps give the lexicographic
/// tie-break for free.
class EmbeddingIndex {
public:
    /// Throws Argument on a duplicate key, an invalid FDI code or a bad embedding.
    void add_tooth(const std::string& jaw_id, int fdi, Embedding e);
    void add_crown(const std::string& template_id, Embedding e);

    const std::map<std::string, std::map<int, Embedding>>& jaws() const { return jaws_; }
    const std::map<std::string, Embedding>& crowns() const { return crowns_; }

private:
    std::map<std::string, std::map<int, Embedding>> jaws_;
    std::map<std::string, Embedding> crowns_;
};

/// Context of the tooth to restore: embeddings of its neighbours and
/// antagonists keyed by FDI.
struct ContextQuery {
    int target_fdi = 0;
    std::map<int, Embedding> slots;

    /// Throws Argument when the target is invalid, appears among the slots, or
    /// no slot is given.
    void validate() const;
};

struct ContextMatch {
    std::string jaw_id;
    double score = 0.0;  // mean cosine over shared slots
    std::size_t shared_slots = 0;
};

struct CrownMatch {
    std::string template_id;
    double score = 0.0;
};

/// Every reference jaw holding the target tooth and at least half of the query
/// slots is scored by the mean cosine over the slots it shares. Returns the
/// best, ties going to the smaller jaw id. Throws NoMatch when no jaw qualifies.
ContextMatch match_context(const ContextQuery& query, const EmbeddingIndex& index);

/// All qualifying jaws with their scores, in jaw-id order.
std::vector<ContextMatch> score_context(const ContextQuery& query, const EmbeddingIndex& index);

/// Library crown with the highest cosine to `donor`, ties to the smaller id.
/// Throws Argument when the library is empty.
CrownMatch retrieve_crown(const Embedding& donor, const EmbeddingIndex& index);

struct RetrievalResult {
    ContextMatch context;
    int donor_fdi = 0;
    CrownMatch crown;
};

/// match_context, then the donor is the best jaw's tooth at the target
/// position, then retrieve_crown.
RetrievalResult retrieve(const ContextQuery& query, const EmbeddingIndex& index);

/// Neighbours (mesial, distal when present) and antagonists (same position,
/// mesial and distal in the opposing jaw) of a tooth.
std::vector<int> context_positions(int target_fdi);

/// Deterministic geometric signature used where a learned extractor would sit:
/// four 64-bin blocks, each normalised to unit sum, of
///   * pairwise vertex distances over [0, 16) mm,
///   * vertex distances to the centroid over [0, 8) mm,
///   * vertex heights along `up` relative to the centroid over [-6, 6) mm,
///   * the cosine between vertex normals and `up` over [-1, 1].
/// Vertices beyond 400 are subsampled with a fixed stride. Requires vertex
/// normals; throws Argument for a mesh with fewer than 4 vertices.
Embedding shape_embedding(const LabeledMesh& mesh, const Vec3& up = Vec3::UnitZ());

/// Binary store: uint32 count, uint32 dim, count x dim float32 (little-endian),
/// plus a JSON sidecar `<path>.json` whose "rows" array maps each row to
/// {"jaw": id, "fdi": code} or {"template": id}.
void save_embedding_store(const EmbeddingIndex& index, const std::filesystem::path& path);
EmbeddingIndex load_embedding_store(const std::filesystem::path& path);

}  // namespace crownfit
