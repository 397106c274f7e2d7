// Command-line front end: one subcommand per pipeline stage plus `run`,
// `evaluate` and `fixtures`. Results go to stdout as JSON.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "crownfit/mesh_io.hpp"
#include "crownfit/pipeline.hpp"
#include "crownfit/template_library.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crownfit;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string stop_after = "fitting";
    std::string report;
};

PipelineConfig load(const Globals& g) {
    PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void emit(const json& j, const Globals& g) {
    std::cout << j.dump(2) << '\n';
    if (!g.report.empty()) {
        std::ofstream out(g.report);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + g.report);
        out << j.dump(2) << '\n';
    }
}

LabeledMesh load_scan(const std::string& path) {
    LabeledMesh m = load_mesh(path);
    validate(m);
    if (!m.has_normals()) m = estimate_vertex_normals(m);
    return m;
}

int exit_code(ErrorKind k) {
    return k == ErrorKind::Argument || k == ErrorKind::Config || k == ErrorKind::Parse ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crown design pipeline: scan classification, template registration, label refinement, "
                 "crown retrieval, alignment and fitting"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_option("--stop-after", g.stop_after, "Last stage to run (run only)");
    app.add_option("--report", g.report, "Also write the JSON result to this file");

    std::string scan, out, antagonist, crown, crown_id, labels_out, scan_class;
    int fdi_code = 0;

    auto* fixtures = app.add_subcommand("fixtures", "Write a synthetic run directory");
    FixtureSpec fspec;
    fixtures->add_option("--out", out, "Target directory")->required();
    fixtures->add_option("--target", fspec.target_fdi, "Prepared tooth (FDI)");
    fixtures->add_option("--fixture-seed", fspec.seed, "Generator seed");

    auto* classify_cmd = app.add_subcommand("classify", "Classify a scan");
    classify_cmd->add_option("--scan", scan, "Scan mesh")->required()->check(CLI::ExistingFile);

    auto* register_cmd = app.add_subcommand("register", "Register a scan to the canonical frame");
    register_cmd->add_option("--scan", scan, "Scan mesh")->required()->check(CLI::ExistingFile);
    register_cmd->add_option("--class", scan_class, "Skip classification and use this class");
    register_cmd->add_option("--out", out, "Canonical-pose mesh to write")->required();

    auto* refine_cmd = app.add_subcommand("refine", "Segment and refine face labels");
    refine_cmd->add_option("--scan", scan, "Canonical-pose scan")->required()->check(CLI::ExistingFile);
    refine_cmd->add_option("--out", out, "Mesh with refined labels")->required();
    refine_cmd->add_option("--labels-out", labels_out, "Refined labels as text");

    auto* retrieve_cmd = app.add_subcommand("retrieve", "Retrieve a crown template for the prepared tooth");
    retrieve_cmd->add_option("--scan", scan, "Segmented canonical scan")->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--fdi", fdi_code, "Prepared tooth (FDI)")->required();
    retrieve_cmd->add_option("--antagonist", antagonist, "Labelled antagonist in the same frame")->check(CLI::ExistingFile);

    auto* align_cmd = app.add_subcommand("align", "Align a crown template to the prepared tooth");
    align_cmd->add_option("--scan", scan, "Segmented canonical scan")->required()->check(CLI::ExistingFile);
    align_cmd->add_option("--fdi", fdi_code, "Prepared tooth (FDI)")->required();
    auto* crown_path_opt = align_cmd->add_option("--crown", crown, "Region-labelled crown mesh")->check(CLI::ExistingFile);
    align_cmd->add_option("--crown-id", crown_id, "Crown template id from the configured library")->excludes(crown_path_opt);
    align_cmd->add_option("--out", out, "Aligned crown mesh")->required();

    auto* fit_cmd = app.add_subcommand("fit", "Fit an aligned crown between its neighbours");
    fit_cmd->add_option("--crown", crown, "Aligned crown mesh")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--scan", scan, "Segmented canonical scan")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--fdi", fdi_code, "Prepared tooth (FDI)")->required();
    fit_cmd->add_option("--antagonist", antagonist, "Antagonist in the same frame")->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", out, "Fitted crown mesh")->required();

    auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline");
    run_cmd->add_option("--scan", scan, "Scan mesh")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--fdi", fdi_code, "Prepared tooth (FDI)")->required();
    run_cmd->add_option("--antagonist", antagonist, "Bite-registered antagonist")->check(CLI::ExistingFile);
    run_cmd->add_option("--out", out, "Output directory (overrides the config)");

    auto* eval_cmd = app.add_subcommand("evaluate", "Segmentation metrics around the prepared tooth");
    std::vector<std::string> preds, gts, meshes;
    std::size_t resamples = 10000;
    eval_cmd->add_option("--pred", preds, "Predicted labels (mesh or text), repeatable")->required();
    eval_cmd->add_option("--gt", gts, "Ground-truth labels (mesh or text), repeatable")->required();
    eval_cmd->add_option("--mesh", meshes, "Mesh of each case, repeatable")->required();
    eval_cmd->add_option("--fdi", fdi_code, "Prepared tooth (FDI)")->required();
    eval_cmd->add_option("--resamples", resamples, "Bootstrap resamples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*fixtures) {
            const auto set = write_fixtures(out, fspec);
            emit({{"config", set.config.string()},
                  {"scan", set.scan.string()},
                  {"antagonist", set.antagonist.string()},
                  {"target_fdi", set.target_fdi}},
                 g);
        } else if (*classify_cmd) {
            const auto cfg = load(g);
            emit(to_json(classify(*make_classifier(cfg), load_scan(scan))), g);
        } else if (*register_cmd) {
            auto cfg = load(g);
            cfg.validate(Stage::Registration);
            const auto mesh = load_scan(scan);
            const ScanClass cls = scan_class.empty() ? classify(*make_classifier(cfg), mesh).scan_class
                                                     : scan_class_from_string(scan_class);
            RegistrationParams rp = cfg.registration;
            rp.seed = cfg.seed;
            RoutingReport routing;
            const auto reg = register_with_routing(mesh, cls, load_library(cfg.template_dir), rp, &routing);
            save_mesh(transformed(mesh, reg.transform), out);
            json j = to_json(reg, &routing);
            j["class"] = to_string(cls);
            emit(j, g);
        } else if (*refine_cmd) {
            const auto cfg = load(g);
            cfg.validate(Stage::Classification);
            auto mesh = load_scan(scan);
            const auto provider = make_segmenter(cfg);
            const auto seg = segment_and_refine(mesh, *provider, cfg.graphcut, cfg.min_component_faces);
            json j = {{"provider", provider->name()},
                      {"faces", seg.refined.size()},
                      {"argmax_energy", seg.argmax_energy},
                      {"graphcut_energy", seg.refined_energy}};
            mesh.face_labels = seg.refined;
            save_mesh(mesh, out);
            if (!labels_out.empty()) save_labels(seg.refined, labels_out);
            emit(j, g);
        } else if (*retrieve_cmd) {
            auto cfg = load(g);
            cfg.validate(Stage::Classification);
            if (!fs::exists(cfg.embedding_store)) throw Error(ErrorKind::Config, "config names no existing embedding store");
            const auto mesh = load_scan(scan);
            std::optional<LabeledMesh> opp;
            if (!antagonist.empty()) opp = load_scan(antagonist);
            const auto query = build_context_query(mesh, opp ? &*opp : nullptr, fdi_code);
            emit(to_json(retrieve(query, load_embedding_store(cfg.embedding_store))), g);
        } else if (*align_cmd) {
            const auto cfg = load(g);
            if (crown.empty() && crown_id.empty()) throw Error(ErrorKind::Argument, "give --crown or --crown-id");
            const CrownTemplate tpl = crown.empty() ? load_crown_template(cfg.crown_dir, crown_id)
                                                    : make_crown_template(load_mesh(crown));
            const auto mesh = load_scan(scan);
            Warnings w;
            const auto targets = compute_targets(mesh, fdi_code, cfg.tau, &w);
            const auto aligned = align_crown(tpl, targets.targets);
            save_mesh(transformed(tpl.mesh, aligned.transform), out);
            json j = to_json(targets, aligned);
            j["warnings"] = w.messages;
            emit(j, g);
        } else if (*fit_cmd) {
            const auto cfg = load(g);
            const auto mesh = load_scan(scan);
            std::optional<LabeledMesh> opp;
            if (!antagonist.empty()) opp = load_scan(antagonist);
            FittingReport rep;
            const auto fitted = fit_crown(load_scan(crown), neighbor_teeth(mesh, fdi_code), opp ? &*opp : nullptr, fdi_code,
                                          cfg.fitting, &rep);
            save_mesh(fitted, out);
            emit(to_json(rep), g);
        } else if (*run_cmd) {
            auto cfg = load(g);
            if (!out.empty()) cfg.output_dir = out;
            if (!g.report.empty()) cfg.report_path = g.report;
            RunInputs in{scan, fdi_code, {}};
            if (!antagonist.empty()) in.antagonist = antagonist;
            const auto result = run_pipeline(in, cfg, stage_from_string(g.stop_after));
            std::cout << result.report.dump(2) << '\n';
        } else if (*eval_cmd) {
            if (preds.size() != gts.size() || gts.size() != meshes.size())
                throw Error(ErrorKind::Argument, "--pred, --gt and --mesh must be given the same number of times");
            std::vector<LabeledMesh> ms;
            ms.reserve(meshes.size());
            for (const auto& m : meshes) ms.push_back(load_mesh(m));
            std::vector<EvalCase> cases;
            for (std::size_t i = 0; i < ms.size(); ++i)
                cases.push_back({load_labels(preds[i], ms[i].num_faces()), load_labels(gts[i], ms[i].num_faces()), &ms[i]});
            emit(evaluate_context(cases, fdi_code, resamples, load(g).seed), g);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error%s%s [%s]: %s\n", e.stage().empty() ? "" : " in ", e.stage().c_str(),
                     to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
