#include "crownfit/pipeline.hpp"

#include "crownfit/fdi.hpp"
#include "crownfit/mesh_io.hpp"
#include "crownfit/metrics.hpp"
#include "crownfit/synth.hpp"
#include "crownfit/template_library.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace crownfit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- stages -------------------------------------------------------------

const char* to_string(Stage s) {
    switch (s) {
        case Stage::Classification: return "classification";
        case Stage::Registration: return "registration";
        case Stage::Segmentation: return "segmentation";
        case Stage::Retrieval: return "retrieval";
        case Stage::Alignment: return "alignment";
        case Stage::Fitting: return "fitting";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    static const std::pair<const char*, Stage> verbs[] = {
        {"classify", Stage::Classification}, {"register", Stage::Registration}, {"refine", Stage::Segmentation},
        {"segment", Stage::Segmentation},    {"retrieve", Stage::Retrieval},    {"align", Stage::Alignment},
        {"fit", Stage::Fitting}};
    for (Stage st : kAllStages)
        if (s == to_string(st)) return st;
    for (const auto& [name, st] : verbs)
        if (s == name) return st;
    throw Error(ErrorKind::Argument, "unknown stage '" + s + "'");
}

// ---- config -------------------------------------------------------------

namespace {

// Pulls known keys out of a JSON object and rejects anything left over.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw Error(ErrorKind::Config, where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Config, where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (seen_.count(item.key()) == 0) throw Error(ErrorKind::Config, where_ + ": unknown key '" + item.key() + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void PipelineConfig::validate(Stage last) const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::Config, what); };
    auto need = [&](Stage s, const fs::path& p, const char* what) {
        if (int(last) < int(s)) return;
        if (p.empty()) bad(std::string(what) + " is not set");
        if (!fs::exists(p)) bad(std::string(what) + " does not exist: " + p.string());
    };
    need(Stage::Registration, template_dir, "template library directory");
    need(Stage::Retrieval, embedding_store, "embedding store");
    need(Stage::Alignment, crown_dir, "crown template directory");
    if (output_dir.empty()) bad("output_dir is empty");

    if (classifier != "baseline" && classifier.rfind("fixed:", 0) != 0 && classifier.rfind("sidecar:", 0) != 0)
        bad("classifier must be baseline, fixed:<class> or sidecar:<path>");
    if (classifier.rfind("fixed:", 0) == 0) (void)scan_class_from_string(classifier.substr(6));
    if (classifier.rfind("sidecar:", 0) == 0 && !fs::exists(classifier.substr(8)))
        bad("classifier sidecar does not exist: " + classifier.substr(8));
    if (segmentation != "corrupted-truth" && segmentation.rfind("file:", 0) != 0)
        bad("segmentation must be corrupted-truth or file:<path>");
    if (segmentation.rfind("file:", 0) == 0 && int(last) >= int(Stage::Segmentation) &&
        !fs::exists(segmentation.substr(5)))
        bad("segmentation file does not exist: " + segmentation.substr(5));

    registration.validate();
    if (!(graphcut.lambda >= 0.0)) bad("graphcut.lambda must be >= 0");
    if (!(graphcut.beta >= 0.0)) bad("graphcut.beta must be >= 0");
    if (graphcut.max_cycles < 1) bad("graphcut.max_cycles must be >= 1");
    if (!(corruption.confidence > 0.0 && corruption.confidence <= 1.0)) bad("segmentation.confidence must lie in (0, 1]");
    if (!(corruption.boundary_flip_rate >= 0.0 && corruption.boundary_flip_rate <= 1.0))
        bad("segmentation.boundary_flip_rate must lie in [0, 1]");
    if (!(corruption.island_rate >= 0.0 && corruption.island_rate <= 1.0)) bad("segmentation.island_rate must lie in [0, 1]");
    if (corruption.boundary_rings < 0) bad("segmentation.boundary_rings must be >= 0");
    if (!(tau > -1.0 && tau < 1.0)) bad("alignment.tau must lie in (-1, 1)");
    fitting.validate();
}

fs::path PipelineConfig::resolved_report_path() const {
    return report_path.empty() ? output_dir / "report.json" : report_path;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    Reader top(j, "config");
    top.get("seed", c.seed);
    std::string out = c.output_dir.string(), report;
    top.get("output_dir", out);
    top.get("report", report);
    c.output_dir = resolve(base_dir, out);
    c.report_path = resolve(base_dir, report);

    if (const json* p = top.child("paths")) {
        Reader r(*p, "paths");
        std::string templates, embeddings, crowns;
        r.get("templates", templates);
        r.get("embeddings", embeddings);
        r.get("crowns", crowns);
        r.finish();
        c.template_dir = resolve(base_dir, templates);
        c.embedding_store = resolve(base_dir, embeddings);
        c.crown_dir = resolve(base_dir, crowns);
    }
    if (const json* p = top.child("providers")) {
        Reader r(*p, "providers");
        r.get("classifier", c.classifier);
        r.get("segmentation", c.segmentation);
        r.finish();
        // provider paths follow the same rule as everything else
        if (c.classifier.rfind("sidecar:", 0) == 0)
            c.classifier = "sidecar:" + resolve(base_dir, c.classifier.substr(8)).string();
        if (c.segmentation.rfind("file:", 0) == 0)
            c.segmentation = "file:" + resolve(base_dir, c.segmentation.substr(5)).string();
    }
    if (const json* p = top.child("registration")) {
        Reader r(*p, "registration");
        auto& g = c.registration;
        r.get("voxel", g.voxel);
        r.get("fpfh_radius_factor", g.fpfh_radius_factor);
        r.get("edge_similarity", g.edge_similarity);
        r.get("ransac_max_iters", g.ransac_max_iters);
        r.get("ransac_confidence", g.ransac_confidence);
        r.get("ransac_distance_threshold", g.ransac_distance_threshold);
        r.get("icp_max_corr_dist", g.icp_max_corr_dist);
        r.get("icp_max_iters", g.icp_max_iters);
        r.get("tukey_k", g.tukey_k);
        r.finish();
    }
    if (const json* p = top.child("graphcut")) {
        Reader r(*p, "graphcut");
        r.get("lambda", c.graphcut.lambda);
        r.get("beta", c.graphcut.beta);
        r.get("max_cycles", c.graphcut.max_cycles);
        r.get("min_component_faces", c.min_component_faces);
        r.finish();
    }
    if (const json* p = top.child("segmentation")) {
        Reader r(*p, "segmentation");
        r.get("confidence", c.corruption.confidence);
        r.get("boundary_flip_rate", c.corruption.boundary_flip_rate);
        r.get("boundary_rings", c.corruption.boundary_rings);
        r.get("island_rate", c.corruption.island_rate);
        r.finish();
    }
    if (const json* p = top.child("alignment")) {
        Reader r(*p, "alignment");
        r.get("tau", c.tau);
        r.finish();
    }
    if (const json* p = top.child("fitting")) {
        Reader r(*p, "fitting");
        auto& f = c.fitting;
        r.get("v_int_threshold", f.v_int_threshold);
        r.get("shrink", f.shrink);
        r.get("grow", f.grow);
        r.get("delta", f.delta);
        r.get("falloff_radius", f.falloff_radius);
        r.get("cusp_count", f.cusp_count);
        r.get("cusp_normal_dot_min", f.cusp_normal_dot_min);
        r.get("proximity_dist", f.proximity_dist);
        r.get("max_scale_iters", f.max_scale_iters);
        r.get("max_tap_rounds", f.max_tap_rounds);
        r.get("max_shift_iters", f.max_shift_iters);
        r.get("volume_resolution", f.volume_resolution);
        r.finish();
    }
    top.finish();
    return c;
}

json to_json(const PipelineConfig& c) {
    const auto& g = c.registration;
    const auto& f = c.fitting;
    json j = {
        {"seed", c.seed},
        {"output_dir", c.output_dir.string()},
        {"paths", {{"templates", c.template_dir.string()}, {"embeddings", c.embedding_store.string()}, {"crowns", c.crown_dir.string()}}},
        {"providers", {{"classifier", c.classifier}, {"segmentation", c.segmentation}}},
        {"registration",
         {{"voxel", g.voxel}, {"fpfh_radius_factor", g.fpfh_radius_factor}, {"edge_similarity", g.edge_similarity},
          {"ransac_max_iters", g.ransac_max_iters}, {"ransac_confidence", g.ransac_confidence},
          {"ransac_distance_threshold", g.ransac_distance_threshold}, {"icp_max_corr_dist", g.icp_max_corr_dist},
          {"icp_max_iters", g.icp_max_iters}, {"tukey_k", g.tukey_k}}},
        {"graphcut",
         {{"lambda", c.graphcut.lambda}, {"beta", c.graphcut.beta}, {"max_cycles", c.graphcut.max_cycles},
          {"min_component_faces", c.min_component_faces}}},
        {"segmentation",
         {{"confidence", c.corruption.confidence}, {"boundary_flip_rate", c.corruption.boundary_flip_rate},
          {"boundary_rings", c.corruption.boundary_rings}, {"island_rate", c.corruption.island_rate}}},
        {"alignment", {{"tau", c.tau}}},
        {"fitting",
         {{"v_int_threshold", f.v_int_threshold}, {"shrink", f.shrink}, {"grow", f.grow}, {"delta", f.delta},
          {"falloff_radius", f.falloff_radius}, {"cusp_count", f.cusp_count}, {"cusp_normal_dot_min", f.cusp_normal_dot_min},
          {"proximity_dist", f.proximity_dist}, {"max_scale_iters", f.max_scale_iters}, {"max_tap_rounds", f.max_tap_rounds},
          {"max_shift_iters", f.max_shift_iters}, {"volume_resolution", f.volume_resolution}}},
    };
    if (!c.report_path.empty()) j["report"] = c.report_path.string();
    return j;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

// ---- stage helpers ------------------------------------------------------

std::unique_ptr<ClassifierProvider> make_classifier(const PipelineConfig& cfg) {
    const auto& s = cfg.classifier;
    if (s == "baseline") return std::make_unique<BaselineClassifier>();
    if (s.rfind("fixed:", 0) == 0) return std::make_unique<FixedClassifier>(scan_class_from_string(s.substr(6)));
    if (s.rfind("sidecar:", 0) == 0) return std::make_unique<SidecarClassifier>(s.substr(8));
    throw Error(ErrorKind::Config, "unknown classifier provider '" + s + "'");
}

std::unique_ptr<SegmentationProvider> make_segmenter(const PipelineConfig& cfg) {
    const auto& s = cfg.segmentation;
    if (s == "corrupted-truth") {
        CorruptionSpec spec = cfg.corruption;
        spec.seed = cfg.seed;
        return std::make_unique<CorruptedTruthSegmenter>(spec);
    }
    if (s.rfind("file:", 0) == 0) return std::make_unique<FileSegmenter>(s.substr(5));
    throw Error(ErrorKind::Config, "unknown segmentation provider '" + s + "'");
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json transform_json(const RigidTransform& t) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) rows.push_back({t.rotation()(r, 0), t.rotation()(r, 1), t.rotation()(r, 2)});
    return {{"rotation", rows}, {"translation", vec_json(t.translation())}};
}

}  // namespace

json to_json(const Classification& c) {
    return {{"class", to_string(c.scan_class)},
            {"confidence", c.confidence},
            {"provider", c.provider},
            {"features",
             {{"azimuth_span_deg", c.azimuth_span_deg},
              {"side_angle_deg", c.side_angle_deg},
              {"z_skewness", c.z_skewness},
              {"hollowness", c.hollowness}}}};
}

json to_json(const RegistrationResult& r, const RoutingReport* routing) {
    json j = {{"chosen_template", r.chosen_template},
              {"fitness", r.fitness},
              {"inlier_rmse_mm", r.inlier_rmse},
              {"transform", transform_json(r.transform)}};
    if (routing != nullptr) {
        json attempts = json::array();
        for (const auto& a : routing->attempts) {
            json e = {{"template", a.template_key}, {"coarse_failed", a.coarse_failed}};
            if (a.coarse_failed) e["failure"] = a.failure;
            else e["fitness"] = a.result.fitness, e["inlier_rmse_mm"] = a.result.inlier_rmse;
            attempts.push_back(std::move(e));
        }
        j["attempts"] = std::move(attempts);
    }
    return j;
}

json to_json(const RetrievalResult& r) {
    return {{"context", {{"jaw", r.context.jaw_id}, {"score", r.context.score}, {"shared_slots", r.context.shared_slots}}},
            {"donor_fdi", r.donor_fdi},
            {"crown", {{"template", r.crown.template_id}, {"score", r.crown.score}}}};
}

json to_json(const JawTargets& t, const AlignmentResult& a) {
    const auto& v = t.targets;
    const auto& tr = a.trace;
    return {{"targets",
             {{"mesial_ref", vec_json(v.mesial_ref)},
              {"buccal_ref", vec_json(v.buccal_ref)},
              {"mesial_robust", vec_json(v.mesial_robust)},
              {"buccal_robust", vec_json(v.buccal_robust)},
              {"occlusal_axis", vec_json(v.occlusal_axis)},
              {"prep_centroid", vec_json(v.prep_centroid)},
              {"tau", v.tau}}},
            {"frame", {{"parameter", t.frame.parameter}, {"clamped", t.frame.clamped}, {"straight", t.frame.straight}}},
            {"admitted_normals", {{"mesial", t.mesial_admitted}, {"buccal", t.buccal_admitted}}},
            {"trace",
             {{"translation_mm", tr.translation_mm},
              {"mesial_angle_deg", tr.mesial_angle_deg},
              {"buccal_angle_deg", tr.buccal_angle_deg},
              {"occlusal_angle_deg", tr.occlusal_angle_deg},
              {"mesial_dot_after_mesial", tr.mesial_dot_after_mesial},
              {"mesial_dot_after_buccal", tr.mesial_dot_after_buccal},
              {"buccal_error_rad_after_buccal", tr.buccal_error_rad_after_buccal},
              {"occlusal_dot_after_occlusal", tr.occlusal_dot_after_occlusal}}},
            {"transform", transform_json(a.transform)}};
}

SegmentationOutcome segment_and_refine(const LabeledMesh& scan, const SegmentationProvider& provider,
                                       const GraphCutParams& params, std::size_t min_component_faces) {
    const auto probs = provider.segment(scan);
    probs.validate();
    if (probs.faces() != scan.num_faces())
        throw Error(ErrorKind::Argument, "segmentation has " + std::to_string(probs.faces()) + " faces, scan has " +
                                             std::to_string(scan.num_faces()));
    SegmentationOutcome out;
    out.argmax = probs.argmax();
    const auto edges = dihedral_edges(scan, params.beta);
    const auto cut = graphcut_refine(scan, probs, params);
    out.argmax_energy = labeling_energy(probs, edges, params.lambda, out.argmax);
    out.refined_energy = labeling_energy(probs, edges, params.lambda, cut);
    out.refined = min_component_faces > 0 ? reassign_small_components(cut, scan, min_component_faces) : cut;
    return out;
}

LabeledMesh label_component(const LabeledMesh& mesh, std::uint8_t label) {
    const auto faces = faces_with_label(mesh, label);
    if (faces.empty()) return {};
    LabeledMesh sub = submesh(mesh, faces);
    std::size_t count = 0;
    const auto comp = face_components(sub, &count);
    if (count <= 1) return sub;
    std::vector<std::size_t> size(count, 0);
    for (auto c : comp) ++size[c];
    const auto best = std::uint32_t(std::max_element(size.begin(), size.end()) - size.begin());
    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < comp.size(); ++f)
        if (comp[f] == best) keep.push_back(f);
    return submesh(sub, keep);
}

ContextQuery build_context_query(const LabeledMesh& scan, const LabeledMesh* antagonist, int target_fdi) {
    fdi::require_valid(target_fdi);
    ContextQuery q;
    q.target_fdi = target_fdi;
    for (int code : context_positions(target_fdi)) {
        const LabeledMesh* src = fdi::jaw(code) == fdi::jaw(target_fdi) ? &scan : antagonist;
        if (src == nullptr || !src->has_labels()) continue;
        LabeledMesh tooth = label_component(*src, fdi::tooth_class(code));
        if (tooth.vertices.size() < 4) continue;
        if (!tooth.has_normals()) tooth = estimate_vertex_normals(tooth);
        q.slots.emplace(code, shape_embedding(tooth, occlusal_direction(code)));
    }
    if (q.slots.empty())
        throw Error(ErrorKind::NoMatch, "no context teeth found around tooth " + std::to_string(target_fdi));
    return q;
}

LabeledMesh neighbor_teeth(const LabeledMesh& scan, int target_fdi) {
    fdi::require_valid(target_fdi);
    std::vector<LabeledMesh> parts;
    std::vector<int> codes = {fdi::mesial_neighbor(target_fdi)};
    if (auto d = fdi::distal_neighbor(target_fdi)) codes.push_back(*d);
    for (int code : codes) {
        auto tooth = label_component(scan, fdi::tooth_class(code));
        if (!tooth.faces.empty()) parts.push_back(std::move(tooth));
    }
    if (parts.empty())
        throw Error(ErrorKind::Argument, "no neighbouring teeth found around tooth " + std::to_string(target_fdi));
    return merge(parts);
}

CrownTemplate load_crown_template(const fs::path& crown_dir, const std::string& id) {
    const fs::path p = crown_dir / (id + ".ply");
    if (!fs::exists(p)) throw Error(ErrorKind::Io, "crown template not found: " + p.string());
    return make_crown_template(load_mesh(p));
}

// ---- end-to-end ---------------------------------------------------------

json strip_timings(json report) {
    report.erase("timings");
    return report;
}

namespace {

void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string error_stage(const Error& e, const std::string& current) { return e.stage().empty() ? current : e.stage(); }

}  // namespace

RunResult run_pipeline(const RunInputs& in, const PipelineConfig& cfg, Stage stop_after) {
    using clock = std::chrono::steady_clock;
    fdi::require_valid(in.target_fdi);
    cfg.validate(stop_after);
    fs::create_directories(cfg.output_dir);

    RunResult res;
    json& rep = res.report;
    rep["schema_version"] = kReportSchemaVersion;
    rep["inputs"] = {{"scan", in.scan.filename().string()},
                     {"target_fdi", in.target_fdi},
                     {"antagonist", in.antagonist ? json(in.antagonist->filename().string()) : json(nullptr)}};
    rep["settings"] = {{"seed", cfg.seed},
                       {"classifier", cfg.classifier},
                       {"segmentation", cfg.segmentation},
                       {"stop_after", to_string(stop_after)}};
    rep["stages"] = json::array();
    rep["timings"] = {{"stages", json::array()}, {"total_s", 0.0}};
    const auto run_start = clock::now();

    std::string current = "input";
    auto stage_start = clock::now();
    auto begin = [&](Stage s) {
        current = to_string(s);
        stage_start = clock::now();
    };
    // true when the run should stop after this stage
    auto end = [&](Stage s) {
        const double secs = std::chrono::duration<double>(clock::now() - stage_start).count();
        rep["stages"].push_back(current);
        rep["timings"]["stages"].push_back({{"stage", current}, {"seconds", secs}});
        return s == stop_after;
    };
    auto save = [&](const LabeledMesh& m, const std::string& name) {
        save_mesh(m, cfg.output_dir / name);
        res.artifacts.push_back(name);
    };
    auto finish = [&](const char* status) {
        rep["status"] = status;
        rep["artifacts"] = res.artifacts;
        rep["timings"]["total_s"] = std::chrono::duration<double>(clock::now() - run_start).count();
        write_json(rep, cfg.resolved_report_path());
    };
    auto stop_here = [&](Stage s) {
        if (!end(s)) return false;
        finish("ok");
        return true;
    };

    try {
        const LabeledMesh scan = load_mesh(in.scan);
        validate(scan);
        std::optional<LabeledMesh> antagonist;
        if (in.antagonist) antagonist = load_mesh(*in.antagonist);

        begin(Stage::Classification);
        const Classification cls = classify(*make_classifier(cfg), scan);
        rep["classification"] = to_json(cls);
        if (stop_here(Stage::Classification)) return res;

        begin(Stage::Registration);
        RegistrationParams rp = cfg.registration;
        rp.seed = cfg.seed;
        RoutingReport routing;
        const auto reg = register_with_routing(scan, cls.scan_class, load_library(cfg.template_dir), rp, &routing);
        const LabeledMesh canonical = transformed(scan, reg.transform);
        std::optional<LabeledMesh> opposing;
        if (antagonist) opposing = transformed(*antagonist, reg.transform);
        save(canonical, "canonical.ply");
        if (opposing) save(*opposing, "antagonist_canonical.ply");
        rep["registration"] = to_json(reg, &routing);
        if (stop_here(Stage::Registration)) return res;

        begin(Stage::Segmentation);
        const auto seg = segment_and_refine(canonical, *make_segmenter(cfg), cfg.graphcut, cfg.min_component_faces);
        LabeledMesh segmented = canonical;
        segmented.face_labels = seg.refined;
        save(segmented, "refined.ply");
        save_labels(seg.refined, cfg.output_dir / "refined_labels.txt");
        res.artifacts.push_back("refined_labels.txt");
        std::size_t changed = 0;
        for (std::size_t f = 0; f < seg.refined.size(); ++f) changed += seg.refined[f] != seg.argmax[f];
        json& sj = rep["segmentation"];
        sj = {{"provider", make_segmenter(cfg)->name()},
              {"faces", seg.refined.size()},
              {"faces_changed_by_refinement", changed},
              {"argmax_energy", seg.argmax_energy},
              {"graphcut_energy", seg.refined_energy}};
        if (canonical.has_labels()) {
            const EvalCase ec{seg.refined, canonical.face_labels, &canonical};
            sj["metrics"] = evaluate_context({&ec, 1}, in.target_fdi, 1000, cfg.seed);
        }
        if (stop_here(Stage::Segmentation)) return res;

        begin(Stage::Retrieval);
        const auto query = build_context_query(segmented, opposing ? &*opposing : nullptr, in.target_fdi);
        const auto retrieved = retrieve(query, load_embedding_store(cfg.embedding_store));
        rep["retrieval"] = to_json(retrieved);
        json slots = json::array();
        for (const auto& [code, e] : query.slots) slots.push_back(code);
        rep["retrieval"]["context_slots"] = std::move(slots);
        if (stop_here(Stage::Retrieval)) return res;

        begin(Stage::Alignment);
        const CrownTemplate crown = load_crown_template(cfg.crown_dir, retrieved.crown.template_id);
        Warnings warnings;
        const JawTargets targets = compute_targets(segmented, in.target_fdi, cfg.tau, &warnings);
        const AlignmentResult aligned = align_crown(crown, targets.targets);
        const LabeledMesh aligned_crown = transformed(crown.mesh, aligned.transform);
        save(aligned_crown, "aligned_crown.ply");
        rep["alignment"] = to_json(targets, aligned);
        rep["alignment"]["warnings"] = warnings.messages;
        if (stop_here(Stage::Alignment)) return res;

        begin(Stage::Fitting);
        FittingReport fr;
        const LabeledMesh fitted = fit_crown(aligned_crown, neighbor_teeth(segmented, in.target_fdi),
                                             opposing ? &*opposing : nullptr, in.target_fdi, cfg.fitting, &fr);
        save(fitted, "fitted_crown.ply");
        rep["fitting"] = to_json(fr);
        stop_here(Stage::Fitting);
        return res;
    } catch (const Error& e) {
        const std::string stage = error_stage(e, current);
        rep["error"] = {{"kind", to_string(e.kind())}, {"stage", stage}, {"message", e.what()}};
        finish("failed");
        throw e.with_stage(stage);
    } catch (const std::exception& e) {
        rep["error"] = {{"kind", "internal"}, {"stage", current}, {"message", e.what()}};
        finish("failed");
        throw Error(ErrorKind::Validation, e.what(), current);
    }
}

// ---- evaluation ---------------------------------------------------------

std::vector<std::uint8_t> load_labels(const fs::path& path, std::size_t faces) {
    std::vector<std::uint8_t> labels;
    const auto ext = path.extension().string();
    if (ext == ".ply" || ext == ".obj" || ext == ".stl") {
        auto mesh = load_mesh(path);
        if (!mesh.has_labels()) throw Error(ErrorKind::Argument, path.string() + " carries no face labels");
        labels = std::move(mesh.face_labels);
    } else {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
        long v = 0;
        while (in >> v) {
            if (v < 0 || v > 255) throw Error(ErrorKind::Parse, path.string() + ": label out of range: " + std::to_string(v));
            labels.push_back(std::uint8_t(v));
        }
        if (!in.eof()) throw Error(ErrorKind::Parse, path.string() + ": expected integers");
    }
    if (labels.size() != faces)
        throw Error(ErrorKind::Argument, path.string() + ": " + std::to_string(labels.size()) + " labels for " +
                                             std::to_string(faces) + " faces");
    return labels;
}

void save_labels(std::span<const std::uint8_t> labels, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    for (auto l : labels) out << int(l) << '\n';
}

namespace {

json summary_or_null(const std::vector<double>& v, std::size_t misses, std::size_t resamples, std::uint64_t seed) {
    if (v.empty()) return nullptr;
    return to_json(summarize(v, misses, resamples, seed));
}

}  // namespace

json evaluate_context(std::span<const EvalCase> cases, int prep_fdi, std::size_t resamples, std::uint64_t seed) {
    fdi::require_valid(prep_fdi);
    for (const auto& c : cases) {
        if (c.mesh == nullptr) throw Error(ErrorKind::Argument, "evaluation case without a mesh");
        if (c.pred.size() != c.gt.size() || c.gt.size() != c.mesh->num_faces())
            throw Error(ErrorKind::Argument, "face count mismatch: pred " + std::to_string(c.pred.size()) + ", gt " +
                                                 std::to_string(c.gt.size()) + ", mesh " +
                                                 std::to_string(c.mesh->num_faces()));
    }

    json out;
    out["schema_version"] = kMetricsSchemaVersion;
    out["cases"] = cases.size();
    out["prepared_fdi"] = prep_fdi;

    {
        std::vector<double> dscs, precs, recs, ces;
        std::size_t misses = 0;
        for (const auto& c : cases) {
            const auto e = evaluate_scan(c.pred, c.gt, *c.mesh);
            if (e.macro_dsc) dscs.push_back(*e.macro_dsc);
            if (e.macro_precision) precs.push_back(*e.macro_precision);
            if (e.macro_recall) recs.push_back(*e.macro_recall);
            for (const auto& [label, ce] : e.centroid_errors) {
                ces.push_back(ce.mm);
                misses += ce.miss;
            }
        }
        out["overall"] = {{"macro_dsc", summary_or_null(dscs, 0, resamples, seed)},
                          {"macro_precision", summary_or_null(precs, 0, resamples, seed)},
                          {"macro_recall", summary_or_null(recs, 0, resamples, seed)},
                          {"centroid_error_mm", summary_or_null(ces, misses, resamples, seed)}};
    }

    std::vector<std::pair<std::string, int>> regions = {{"prepared", prep_fdi}, {"mesial", fdi::mesial_neighbor(prep_fdi)}};
    if (auto d = fdi::distal_neighbor(prep_fdi)) regions.emplace_back("distal", *d);
    json rows = json::array();
    for (const auto& [name, code] : regions) {
        const std::uint8_t label = name == "prepared" ? label::kPrepared : fdi::tooth_class(code);
        std::vector<double> dscs, precs, recs, ces;
        std::size_t misses = 0, present = 0;
        for (const auto& c : cases) {
            std::vector<std::size_t> pf, gf;
            for (std::size_t f = 0; f < c.gt.size(); ++f) {
                if (c.pred[f] == label) pf.push_back(f);
                if (c.gt[f] == label) gf.push_back(f);
            }
            if (gf.empty()) continue;
            ++present;
            const auto k = confusion(c.pred, c.gt);
            if (auto v = dsc(k, label)) dscs.push_back(*v);
            const auto [p, r] = precision_recall(k, label);
            if (p) precs.push_back(*p);
            if (r) recs.push_back(*r);
            const auto ce = centroid_error(pf, gf, *c.mesh, bounding_box_diagonal(*c.mesh));
            ces.push_back(ce.mm);
            misses += ce.miss;
        }
        json row = {{"region", name}, {"fdi", code}, {"label", label}, {"cases", present}};
        if (present == 0) row["absent"] = true;
        else
            row.update({{"dsc", summary_or_null(dscs, 0, resamples, seed)},
                        {"precision", summary_or_null(precs, 0, resamples, seed)},
                        {"recall", summary_or_null(recs, 0, resamples, seed)},
                        {"centroid_error_mm", summary_or_null(ces, misses, resamples, seed)}});
        rows.push_back(std::move(row));
    }
    out["regions"] = std::move(rows);
    return out;
}

// ---- synthetic fixtures -------------------------------------------------

namespace {

// extreme height of a tooth along `dir` (max or min)
double tooth_extreme(const LabeledMesh& jaw, int code, const Vec3& dir, bool highest) {
    const auto tooth = label_component(jaw, fdi::tooth_class(code));
    if (tooth.vertices.empty()) throw Error(ErrorKind::Argument, "fixture jaw lacks tooth " + std::to_string(code));
    double best = highest ? -1e300 : 1e300;
    for (const auto& v : tooth.vertices) best = highest ? std::max(best, v.dot(dir)) : std::min(best, v.dot(dir));
    return best;
}

// Reference jaws vary tooth size too; a draw whose teeth collide is redrawn.
synth::SyntheticArch varied_arch(ScanClass cls, Jaw jaw, std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        auto as = synth::arch_spec_for_class(cls, jaw, seed + attempt, 0.3);
        as.size_jitter = 0.05;
        try {
            return synth::generate_arch(as);
        } catch (const Error&) {
            if (attempt >= 50) throw;
        }
    }
}

}  // namespace

FixtureSet write_fixtures(const fs::path& dir, const FixtureSpec& spec) {
    fdi::require_valid(spec.target_fdi);
    if (fdi::position(spec.target_fdi) > 7)
        throw Error(ErrorKind::Argument, "fixture arches hold positions 1-7 only");
    fs::create_directories(dir / "crowns");
    fs::create_directories(dir / "case");
    const Jaw jaw = fdi::jaw(spec.target_fdi);
    const Jaw other = jaw == Jaw::Upper ? Jaw::Lower : Jaw::Upper;
    auto full = [](Jaw j) { return j == Jaw::Upper ? ScanClass::FullUpper : ScanClass::FullLower; };

    {  // template library from a small jittered population
        std::vector<LabeledMesh> up, lo;
        for (std::size_t i = 0; i < spec.library_population; ++i) {
            up.push_back(synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullUpper, Jaw::Upper, 500 + i, 0.3)).mesh);
            lo.push_back(synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 500 + i, 0.3)).mesh);
        }
        save_library(build_library(up, lo), dir / "templates");
    }

    EmbeddingIndex index;
    for (std::size_t r = 0; r < spec.reference_jaws; ++r) {
        char id[32];
        std::snprintf(id, sizeof id, "ref-%02zu", r);
        for (Jaw j : {Jaw::Upper, Jaw::Lower}) {
            const auto arch = varied_arch(full(j), j, spec.seed * 1000 + 100 * r);
            for (const auto& [label, code] : arch.truth.label_fdi)
                index.add_tooth(id, code, shape_embedding(label_component(arch.mesh, label), occlusal_direction(code)));
        }
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t k = 0; k < spec.crown_templates; ++k) {
        synth::CrownDims d;
        const bool anterior = k % 4 == 3;
        if (anterior) {
            d.half_mesiodistal = 2.8 + 0.8 * u(rng);
            d.half_buccolingual = 2.8 + 0.6 * u(rng);
            d.height = 8.0 + 1.5 * u(rng);
        } else {
            d.half_mesiodistal = 4.4 + 1.2 * u(rng);
            d.half_buccolingual = 4.2 + 0.8 * u(rng);
            d.height = 7.5 + 1.5 * u(rng);
            d.cusp_count = 4 + int(u(rng) * 2.0);
        }
        const auto f = synth::generate_crown_fixture(anterior ? synth::CrownKind::SmoothAnterior : synth::CrownKind::BumpedPosterior, d);
        char id[32];
        std::snprintf(id, sizeof id, "crown-%02zu", k);
        save_mesh(f.crown.mesh, dir / "crowns" / (std::string(id) + ".ply"));
        index.add_crown(id, shape_embedding(f.crown.mesh, Vec3::UnitZ()));
    }
    save_embedding_store(index, dir / "embeddings.bin");

    // the case: a prepared tooth in a full arch, antagonist resting on the neighbours
    auto as = synth::arch_spec_for_class(full(jaw), jaw, spec.seed, 0.15);
    for (auto& t : as.teeth)
        if (t.fdi == spec.target_fdi) t.prepared = true;
    const auto arch = synth::generate_arch(as);
    // antagonist on the same arch ellipse: cusp-to-cusp contact over the prepared tooth
    auto os = synth::arch_spec_for_class(full(other), other, spec.seed + 1, 0.15);
    os.arch_half_width = as.arch_half_width;
    os.arch_depth = as.arch_depth;
    auto opp = synth::generate_arch(os).mesh;
    const Vec3 dir_up = occlusal_direction(spec.target_fdi);
    double neighbour_top = tooth_extreme(arch.mesh, fdi::mesial_neighbor(spec.target_fdi), dir_up, true);
    if (auto d = fdi::distal_neighbor(spec.target_fdi); d && fdi::position(*d) <= 7)
        neighbour_top = std::max(neighbour_top, tooth_extreme(arch.mesh, *d, dir_up, true));
    const int antagonist_code = fdi::make(other, fdi::side(spec.target_fdi), fdi::position(spec.target_fdi));
    const double antagonist_low = tooth_extreme(opp, antagonist_code, dir_up, false);
    const Vec3 bite = (neighbour_top - spec.bite_overlap_mm - antagonist_low) * dir_up;
    for (auto& v : opp.vertices) v += bite;

    synth::PerturbSpec ps;
    ps.rotation_deg = Vec3(0, 0, 180);
    ps.translation_mm = Vec3(20, 20, 20);
    ps.seed = spec.seed;
    const auto pose = synth::sample_perturbation(ps);
    FixtureSet out;
    out.target_fdi = spec.target_fdi;
    out.scan = dir / "case" / "scan.ply";
    out.antagonist = dir / "case" / "antagonist.ply";
    save_mesh(synth::apply_perturbation(arch.mesh, pose), out.scan);
    save_mesh(synth::apply_perturbation(opp, pose), out.antagonist);

    const auto& t = pose.transform;
    write_json({{"target_fdi", spec.target_fdi},
                {"scan_class", to_string(arch.truth.scan_class)},
                {"pose", transform_json(t)},
                {"bite_offset_mm", bite.dot(dir_up)},
                {"bite_overlap_mm", spec.bite_overlap_mm}},
               dir / "case" / "truth.json");

    json cfg = {{"seed", spec.seed},
                {"output_dir", "out"},
                {"paths", {{"templates", "templates"}, {"embeddings", "embeddings.bin"}, {"crowns", "crowns"}}},
                {"providers", {{"classifier", "baseline"}, {"segmentation", "corrupted-truth"}}}};
    out.config = dir / "config.json";
    write_json(cfg, out.config);
    return out;
}

}  // namespace crownfit
