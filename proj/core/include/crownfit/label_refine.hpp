#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "crownfit/mesh.hpp"

namespace crownfit {

/// Per-face probability rows over `classes` labels, row-major.
struct FaceLabelProbabilities {
    std::size_t classes = 0;
    std::vector<double> values;

    std::size_t faces() const { return classes ? values.size() / classes : 0; }
    double at(std::size_t face, std::size_t cls) const { return values[face * classes + cls]; }
    double& at(std::size_t face, std::size_t cls) { return values[face * classes + cls]; }

    /// Throws Validation unless entries are finite, non-negative and every row
    /// sums to 1 within `tolerance`.
    void validate(double tolerance = 1e-6) const;
    std::vector<std::uint8_t> argmax() const;
};

struct GraphCutParams {
    double lambda = 30.0;  // smoothness weight
    double beta = 5.0;     // dihedral sharpness
    int max_cycles = 20;   // full sweeps over all labels
};

struct PairwiseEdge {
    std::uint32_t a, b;
    double weight;  // exp(-beta (1 - cos theta))
};

/// One entry per pair of faces sharing an edge, with the dihedral weight.
std::vector<PairwiseEdge> dihedral_edges(const LabeledMesh& mesh, double beta);

/// sum_f -log max(p_f(l_f), 1e-12) + lambda * sum_edges w [l_a != l_b]
double labeling_energy(const FaceLabelProbabilities& probs, const std::vector<PairwiseEdge>& edges, double lambda,
                       const std::vector<std::uint8_t>& labels);

/// Alpha-expansion from the argmax labelling; moves are accepted only when
/// they lower the energy. Throws Argument on non-finite or negative
/// probabilities or a row count that differs from the face count.
std::vector<std::uint8_t> graphcut_refine(const LabeledMesh& mesh, const FaceLabelProbabilities& probs,
                                          const GraphCutParams& params = {});

/// Edge-connected same-label components smaller than `min_faces` become 0.
std::vector<std::uint8_t> reassign_small_components(const std::vector<std::uint8_t>& labels, const LabeledMesh& mesh,
                                                    std::size_t min_faces = 10);

/// Binary layout: uint32 face count, uint32 class count, float32 rows.
void save_probabilities(const FaceLabelProbabilities& probs, const std::filesystem::path& path);
/// Reads the binary layout, or JSON {"classes": k, "rows": [[...], ...]} for
/// .json paths. Throws Parse on malformed input.
FaceLabelProbabilities load_probabilities(const std::filesystem::path& path);

/// Synthetic segmentation output from ground-truth labels: confident one-hot
/// rows with Dirichlet-like noise, plus faces near label boundaries whose mass
/// is moved to a neighbouring label.
struct CorruptionSpec {
    double confidence = 0.85;       // mass on the true label before noise
    double boundary_flip_rate = 0.3;
    int boundary_rings = 1;
    double island_rate = 0.0005;    // faces seeding a small wrong-label island
    std::size_t classes = 18;
    std::uint64_t seed = 0;
};

FaceLabelProbabilities corrupt_ground_truth(const LabeledMesh& mesh, const CorruptionSpec& spec);

class SegmentationProvider {
public:
    virtual ~SegmentationProvider() = default;
    virtual std::string name() const = 0;
    virtual FaceLabelProbabilities segment(const LabeledMesh& scan) const = 0;
};

class CorruptedTruthSegmenter final : public SegmentationProvider {
public:
    explicit CorruptedTruthSegmenter(CorruptionSpec spec = {}) : spec_(spec) {}
    std::string name() const override { return "corrupted-truth"; }
    FaceLabelProbabilities segment(const LabeledMesh& scan) const override { return corrupt_ground_truth(scan, spec_); }

private:
    CorruptionSpec spec_;
};

class FileSegmenter final : public SegmentationProvider {
public:
    explicit FileSegmenter(std::filesystem::path path) : path_(std::move(path)) {}
    std::string name() const override { return "file"; }
    FaceLabelProbabilities segment(const LabeledMesh& scan) const override;

private:
    std::filesystem::path path_;
};

}  // namespace crownfit
