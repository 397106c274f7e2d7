#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crownfit/alignment.hpp"
#include "crownfit/classifier.hpp"
#include "crownfit/fitting.hpp"
#include "crownfit/label_refine.hpp"
#include "crownfit/registration.hpp"
#include "crownfit/retrieval.hpp"

namespace crownfit {

enum class Stage { Classification, Registration, Segmentation, Retrieval, Alignment, Fitting };
inline constexpr Stage kAllStages[] = {Stage::Classification, Stage::Registration, Stage::Segmentation,
                                       Stage::Retrieval,      Stage::Alignment,    Stage::Fitting};

const char* to_string(Stage s);
/// Accepts stage names ("registration") and subcommand verbs ("register").
Stage stage_from_string(const std::string& s);

struct PipelineConfig {
    std::uint64_t seed = 0;  // drives registration sampling and the corrupted-truth segmenter
    std::filesystem::path output_dir = "crownfit_out";
    std::filesystem::path report_path;  // empty: <output_dir>/report.json

    std::filesystem::path template_dir;     // template library (manifest.json + meshes)
    std::filesystem::path embedding_store;  // binary store with its .json sidecar
    std::filesystem::path crown_dir;        // <template id>.ply, region-labelled crowns

    std::string classifier = "baseline";         // baseline | fixed:<class> | sidecar:<path>
    std::string segmentation = "corrupted-truth";  // corrupted-truth | file:<path>

    RegistrationParams registration;
    GraphCutParams graphcut;
    std::size_t min_component_faces = 10;
    CorruptionSpec corruption;
    double tau = 0.6;
    FittingParams fitting;

    /// Checks parameter ranges and that the paths needed by stages up to
    /// `last` exist. Throws Config.
    void validate(Stage last = Stage::Fitting) const;
    std::filesystem::path resolved_report_path() const;
};

/// Relative paths are resolved against `base_dir`. Unknown keys are a
/// Config error so typos do not pass silently.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

// ---- single stages ------------------------------------------------------

std::unique_ptr<ClassifierProvider> make_classifier(const PipelineConfig& cfg);
std::unique_ptr<SegmentationProvider> make_segmenter(const PipelineConfig& cfg);

nlohmann::json to_json(const Classification& c);
nlohmann::json to_json(const RegistrationResult& r, const RoutingReport* routing = nullptr);
nlohmann::json to_json(const RetrievalResult& r);
nlohmann::json to_json(const JawTargets& t, const AlignmentResult& a);

struct SegmentationOutcome {
    std::vector<std::uint8_t> argmax;
    std::vector<std::uint8_t> refined;
    double argmax_energy = 0.0;
    double refined_energy = 0.0;
};

/// Provider probabilities, graph-cut refinement, then small-island cleanup.
SegmentationOutcome segment_and_refine(const LabeledMesh& canonical_scan, const SegmentationProvider& provider,
                                       const GraphCutParams& params, std::size_t min_component_faces);

/// Largest edge-connected component of the faces carrying `label`; empty
/// when the label is absent.
LabeledMesh label_component(const LabeledMesh& mesh, std::uint8_t label);

/// Context query for the target tooth: same-jaw slots come from the
/// segmented scan, antagonist slots from the labelled antagonist (if given).
/// Slots whose tooth is absent are left out.
ContextQuery build_context_query(const LabeledMesh& segmented_scan, const LabeledMesh* antagonist, int target_fdi);

/// Mesial and distal neighbours of the target, merged. Missing ones are skipped.
LabeledMesh neighbor_teeth(const LabeledMesh& segmented_scan, int target_fdi);

/// Region-labelled crown template from <crown_dir>/<id>.ply.
CrownTemplate load_crown_template(const std::filesystem::path& crown_dir, const std::string& id);

// ---- end-to-end ---------------------------------------------------------

struct RunInputs {
    std::filesystem::path scan;
    int target_fdi = 0;
    std::optional<std::filesystem::path> antagonist;  // same pose as the scan (bite registered)
};

inline constexpr int kReportSchemaVersion = 1;

struct RunResult {
    nlohmann::json report;
    std::vector<std::string> artifacts;  // file names inside output_dir, in write order
};

/// Runs the stages up to `stop_after`, writing artifacts and the report.
/// Report fields are deterministic for a fixed config except "timings". On
/// failure the partial report (with "error") is still written and the error
/// is rethrown tagged with its stage.
RunResult run_pipeline(const RunInputs& inputs, const PipelineConfig& cfg, Stage stop_after = Stage::Fitting);

/// The report without its timing fields, for reproducibility checks.
nlohmann::json strip_timings(nlohmann::json report);

// ---- evaluation ---------------------------------------------------------

/// Per-face labels from a mesh with face labels (.ply) or a whitespace
/// separated text file. Throws Argument when the count differs from `faces`.
std::vector<std::uint8_t> load_labels(const std::filesystem::path& path, std::size_t faces);
void save_labels(std::span<const std::uint8_t> labels, const std::filesystem::path& path);

struct EvalCase {
    std::vector<std::uint8_t> pred;
    std::vector<std::uint8_t> gt;
    const LabeledMesh* mesh = nullptr;
};

/// Overall macro metrics plus rows for the prepared tooth and its mesial and
/// distal neighbours: DSC and centroid-error summaries over the cases where
/// the region exists in the ground truth. Throws Argument on face-count mismatch.
nlohmann::json evaluate_context(std::span<const EvalCase> cases, int prep_fdi, std::size_t resamples = 10000,
                                std::uint64_t seed = 0);

// ---- synthetic fixtures -------------------------------------------------

struct FixtureSpec {
    std::uint64_t seed = 7;
    int target_fdi = 36;
    std::size_t reference_jaws = 12;
    std::size_t crown_templates = 8;
    std::size_t library_population = 3;
    double bite_overlap_mm = 1.0;  // antagonist sunk below the neighbours' highest point
};

struct FixtureSet {
    std::filesystem::path config;  // config.json inside the fixture directory
    std::filesystem::path scan;
    std::filesystem::path antagonist;
    int target_fdi = 36;
};

/// Writes a complete synthetic run directory: template library, embedding
/// store, crown templates, a posed lower scan with a prepared tooth, the
/// bite-registered antagonist and a config pointing at all of it.
FixtureSet write_fixtures(const std::filesystem::path& dir, const FixtureSpec& spec = {});

}  // namespace crownfit
