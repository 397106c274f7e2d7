#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crownfit/mesh.hpp"

namespace crownfit {

struct ClassCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
    bool operator==(const ClassCounts&) const = default;
};

/// Indexed by label; sized to the largest label seen plus one.
struct ConfusionCounts {
    std::vector<ClassCounts> per_class;

    ClassCounts at(std::size_t c) const { return c < per_class.size() ? per_class[c] : ClassCounts{}; }
};

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// nullopt marks an undefined metric (zero denominator).
std::optional<double> dsc(const ClassCounts& c);
std::optional<double> precision(const ClassCounts& c);
std::optional<double> recall(const ClassCounts& c);
inline std::optional<double> dsc(const ConfusionCounts& k, std::size_t c) { return dsc(k.at(c)); }
std::pair<std::optional<double>, std::optional<double>> precision_recall(const ConfusionCounts& k, std::size_t c);

/// Mean over defined values; nullopt when none is defined.
std::optional<double> macro_average(std::span<const std::optional<double>> values);

struct CentroidError {
    double mm = 0.0;
    bool miss = false;
};

/// Distance between the area-weighted centroids of two face sets. An empty
/// prediction returns `bbox_diag` with the miss flag. Throws Argument for an
/// empty ground-truth set.
CentroidError centroid_error(std::span<const std::size_t> pred_faces, std::span<const std::size_t> gt_faces,
                             const LabeledMesh& mesh, double bbox_diag);

struct ConfidenceInterval {
    double low = 0.0, high = 0.0;
};

/// Percentile bootstrap of the mean. Samples are sorted first so the result
/// does not depend on input order; all resamples draw, in turn, from one
/// mt19937_64 seeded through seed_seq{seed low word, seed high word}.
/// Percentiles use linear interpolation between order statistics.
ConfidenceInterval bootstrap_ci(std::span<const double> samples, std::size_t resamples = 10000, std::uint64_t seed = 0,
                                double level = 0.95);

/// Linear-interpolation percentile (q in [0, 1]) of sorted data.
double percentile_sorted(std::span<const double> sorted, double q);

struct MetricSummary {
    double mean = 0.0;
    std::optional<double> std;  // n - 1 denominator, undefined for one sample
    double median = 0.0;
    std::optional<ConfidenceInterval> ci;
    double miss_rate = 0.0;
    std::size_t n = 0;
};

MetricSummary summarize(std::span<const double> samples, std::size_t misses = 0, std::size_t resamples = 10000,
                        std::uint64_t seed = 0);

/// Per-scan segmentation and localisation results.
struct ScanEvaluation {
    ConfusionCounts counts;
    std::vector<std::optional<double>> dsc, precision, recall;  // per label
    std::optional<double> macro_dsc, macro_precision, macro_recall;
    std::vector<std::pair<std::uint8_t, CentroidError>> centroid_errors;  // per ground-truth tooth label
};

/// Labels 0..classes-1 enter the macro averages; centroid errors cover every
/// non-gingiva label present in the ground truth.
ScanEvaluation evaluate_scan(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, const LabeledMesh& mesh,
                             std::size_t classes = 18);

inline constexpr int kMetricsSchemaVersion = 1;

nlohmann::json to_json(const MetricSummary& s);
nlohmann::json to_json(const ScanEvaluation& e);

}  // namespace crownfit
