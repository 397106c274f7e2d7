#include "crownfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace crownfit {

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) throw Error(ErrorKind::Argument, "confusion: prediction and ground truth differ in length");
    ConfusionCounts k;
    std::size_t top = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) top = std::max({top, std::size_t(pred[i]) + 1, std::size_t(gt[i]) + 1});
    k.per_class.resize(top);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == gt[i]) {
            ++k.per_class[gt[i]].tp;
        } else {
            ++k.per_class[pred[i]].fp;
            ++k.per_class[gt[i]].fn;
        }
    }
    return k;
}

std::optional<double> dsc(const ClassCounts& c) {
    const std::size_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) return std::nullopt;
    return double(2 * c.tp) / double(den);
}

std::optional<double> precision(const ClassCounts& c) {
    if (c.tp + c.fp == 0) return std::nullopt;
    return double(c.tp) / double(c.tp + c.fp);
}

std::optional<double> recall(const ClassCounts& c) {
    if (c.tp + c.fn == 0) return std::nullopt;
    return double(c.tp) / double(c.tp + c.fn);
}

std::pair<std::optional<double>, std::optional<double>> precision_recall(const ConfusionCounts& k, std::size_t c) {
    return {precision(k.at(c)), recall(k.at(c))};
}

std::optional<double> macro_average(std::span<const std::optional<double>> values) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& v : values)
        if (v) s += *v, ++n;
    if (n == 0) return std::nullopt;
    return s / double(n);
}

CentroidError centroid_error(std::span<const std::size_t> pred_faces, std::span<const std::size_t> gt_faces,
                             const LabeledMesh& mesh, double bbox_diag) {
    if (gt_faces.empty()) throw Error(ErrorKind::Argument, "centroid_error: empty ground-truth region");
    if (pred_faces.empty()) return {bbox_diag, true};
    auto centroid = [&](std::span<const std::size_t> faces) {
        Vec3 s = Vec3::Zero();
        double a = 0.0;
        for (auto f : faces) {
            const double w = face_area(mesh, f);
            s += w * face_centroid(mesh, f);
            a += w;
        }
        if (a > 0.0) return Vec3(s / a);
        Vec3 m = Vec3::Zero();
        for (auto f : faces) m += face_centroid(mesh, f);
        return Vec3(m / double(faces.size()));
    };
    return {(centroid(pred_faces) - centroid(gt_faces)).norm(), false};
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error(ErrorKind::Argument, "percentile: no data");
    const double pos = q * double(sorted.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ConfidenceInterval bootstrap_ci(std::span<const double> samples, std::size_t resamples, std::uint64_t seed, double level) {
    if (samples.size() < 2) throw Error(ErrorKind::Argument, "bootstrap_ci: need at least 2 samples");
    if (resamples == 0) throw Error(ErrorKind::Argument, "bootstrap_ci: need at least one resample");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::Argument, "bootstrap_ci: level must lie in (0, 1)");
    std::vector<double> data(samples.begin(), samples.end());
    std::sort(data.begin(), data.end());
    const std::size_t n = data.size();
    std::vector<double> means(resamples);
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t b = 0; b < resamples; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += data[pick(rng)];
        means[b] = s / double(n);
    }
    std::sort(means.begin(), means.end());
    const double tail = 0.5 * (1.0 - level);
    return {percentile_sorted(means, tail), percentile_sorted(means, 1.0 - tail)};
}

MetricSummary summarize(std::span<const double> samples, std::size_t misses, std::size_t resamples, std::uint64_t seed) {
    if (samples.empty()) throw Error(ErrorKind::Argument, "summarize: no samples");
    MetricSummary s;
    s.n = samples.size();
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean = sum / double(s.n);
    if (s.n > 1) {
        double sq = 0.0;
        for (double v : samples) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / double(s.n - 1));
        s.ci = bootstrap_ci(samples, resamples, seed);
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    s.median = s.n % 2 ? sorted[s.n / 2] : 0.5 * (sorted[s.n / 2 - 1] + sorted[s.n / 2]);
    s.miss_rate = double(misses) / double(s.n);
    return s;
}

ScanEvaluation evaluate_scan(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, const LabeledMesh& mesh,
                             std::size_t classes) {
    if (gt.size() != mesh.faces.size()) throw Error(ErrorKind::Argument, "evaluate_scan: label count does not match the mesh");
    ScanEvaluation e;
    e.counts = confusion(pred, gt);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto k = e.counts.at(c);
        e.dsc.push_back(dsc(k));
        e.precision.push_back(precision(k));
        e.recall.push_back(recall(k));
    }
    e.macro_dsc = macro_average(e.dsc);
    e.macro_precision = macro_average(e.precision);
    e.macro_recall = macro_average(e.recall);
    const double diag = bounding_box_diagonal(mesh);
    std::vector<std::vector<std::size_t>> pred_faces(256), gt_faces(256);
    for (std::size_t f = 0; f < gt.size(); ++f) {
        pred_faces[pred[f]].push_back(f);
        gt_faces[gt[f]].push_back(f);
    }
    for (std::size_t c = 1; c < 256; ++c)
        if (!gt_faces[c].empty()) e.centroid_errors.emplace_back(std::uint8_t(c), centroid_error(pred_faces[c], gt_faces[c], mesh, diag));
    return e;
}

namespace {
nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
}  // namespace

nlohmann::json to_json(const MetricSummary& s) {
    nlohmann::json j;
    j["n"] = s.n;
    j["mean"] = s.mean;
    j["std"] = opt(s.std);
    j["median"] = s.median;
    j["ci_low"] = s.ci ? nlohmann::json(s.ci->low) : nlohmann::json(nullptr);
    j["ci_high"] = s.ci ? nlohmann::json(s.ci->high) : nlohmann::json(nullptr);
    j["miss_rate"] = s.miss_rate;
    return j;
}

nlohmann::json to_json(const ScanEvaluation& e) {
    nlohmann::json j;
    j["schema_version"] = kMetricsSchemaVersion;
    auto arr = [](const std::vector<std::optional<double>>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& x : v) a.push_back(opt(x));
        return a;
    };
    j["dsc"] = arr(e.dsc);
    j["precision"] = arr(e.precision);
    j["recall"] = arr(e.recall);
    j["macro_dsc"] = opt(e.macro_dsc);
    j["macro_precision"] = opt(e.macro_precision);
    j["macro_recall"] = opt(e.macro_recall);
    nlohmann::json ce = nlohmann::json::array();
    for (const auto& [lab, err] : e.centroid_errors) ce.push_back({{"label", lab}, {"error_mm", err.mm}, {"miss", err.miss}});
    j["centroid_errors"] = ce;
    return j;
}

}  // namespace crownfit
