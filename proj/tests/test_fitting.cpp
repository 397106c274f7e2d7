#include <doctest.h>

#include <cmath>

#include "crownfit/fitting.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;
using synth::BumpSpec;

namespace {

LabeledMesh walls(double half_gap, double height = 12.0) {
    const LabeledMesh parts[2] = {synth::make_box(Vec3(-half_gap - 3, -6, -height / 2), Vec3(-half_gap, 6, height / 2), 6),
                                  synth::make_box(Vec3(half_gap, -6, -height / 2), Vec3(half_gap + 3, 6, height / 2), 6)};
    return merge(parts);
}

double max_abs_x(const LabeledMesh& m) {
    double r = 0;
    for (const auto& v : m.vertices) r = std::max(r, std::abs(v.x()));
    return r;
}

}  // namespace

TEST_CASE("fitting parameters") {
    CHECK_NOTHROW(FittingParams{}.validate());
    FittingParams p;
    p.shrink = 1.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.grow = 0.99;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.delta = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK(occlusal_direction(36) == Vec3::UnitZ());
    CHECK(occlusal_direction(16) == -Vec3::UnitZ());
}

TEST_CASE("cusp detection") {
    SUBCASE("five bumps") {
        std::vector<std::uint32_t> apex;
        const std::vector<BumpSpec> bumps = {{-2, -2, 1.0, 0.5}, {2, -2, 0.9, 0.5}, {-2, 2, 0.8, 0.5}, {2, 2, 0.7, 0.5}, {0, 0, 0.6, 0.5}};
        const auto plate = synth::bump_plate(4, 0.2, 1.0, bumps, &apex);
        const auto c = detect_cusps(plate, Vec3::UnitZ());
        CHECK(c.vertices == apex);  // generator order is already by height
        for (std::size_t k = 1; k < c.size(); ++k) CHECK(c.heights[k] < c.heights[k - 1]);
    }
    SUBCASE("monotone surfaces have none") {
        const auto ramp = synth::heightfield_solid(3, 3, 0.25, 0.0, [](double x, double y) { return 2 + 0.3 * x + 0.2 * y; });
        CHECK(detect_cusps(ramp, Vec3::UnitZ()).empty());
        const auto dome_down = synth::heightfield_solid(3, 3, 0.25, 0.0, [](double x, double y) { return 1 + 0.1 * (x * x + y * y); });
        CHECK(detect_cusps(dome_down, Vec3::UnitZ()).empty());
        // open top surface: the high corner sits on the border
        LabeledMesh open = ramp;
        std::vector<std::size_t> top;
        for (std::size_t f = 0; f < open.faces.size(); ++f)
            if (open.face_labels[f] == region::kOcclusal) top.push_back(f);
        CHECK(detect_cusps(submesh(open, top), Vec3::UnitZ()).empty());
    }
    SUBCASE("seven bumps, five tallest") {
        const auto f = synth::generate_crown_fixture(synth::CrownKind::BumpedPosterior, {.cusp_count = 7});
        const auto c = detect_cusps(f.crown.mesh, Vec3::UnitZ());
        REQUIRE(c.size() == 5);
        CHECK(c.vertices == std::vector<std::uint32_t>(f.apex_vertices.begin(), f.apex_vertices.begin() + 5));
        FittingParams all;
        all.cusp_count = 10;
        CHECK(detect_cusps(f.crown.mesh, Vec3::UnitZ(), all).vertices == f.apex_vertices);
    }
    SUBCASE("normal gate and direction") {
        std::vector<std::uint32_t> apex;
        const auto plate = synth::bump_plate(4, 0.2, 1.0, {{0, 0, 1.0, 0.5}}, &apex);
        CHECK(detect_cusps(plate, -Vec3::UnitZ()).empty());
        auto tilted = plate;
        for (auto& n : tilted.vertex_normals) n = Vec3::UnitX();
        CHECK(detect_cusps(tilted, Vec3::UnitZ()).empty());
    }
}

TEST_CASE("interproximal scaling: sphere between walls") {
    SUBCASE("gap: grow to touch then shrink once") {
        const auto sphere = synth::make_icosphere(Vec3::Zero(), 4.0, 4);
        const auto out = interproximal_adapt(sphere, walls(5.0));
        const auto& r = out.report;
        CHECK_FALSE(r.initial_collision);
        // touching happens once the extreme vertex passes the wall
        const double reach = max_abs_x(sphere);
        const int k = int(std::ceil(std::log(5.0 / reach) / std::log(1.01)));
        CHECK(r.scale_trace.size() == std::size_t(k + 1));
        CHECK(r.final_scale == doctest::Approx(std::pow(1.01, k) * 0.99).epsilon(1e-12));
        CHECK(std::abs(r.final_scale - 1.25 * 0.99) <= 1.25 * 0.01);
        for (std::size_t i = 1; i + 1 < r.scale_trace.size(); ++i) CHECK(r.scale_trace[i] > r.scale_trace[i - 1]);
        CHECK(r.final_volume <= 1e-6);
        CHECK((vertex_mean(out.mesh.vertices) - vertex_mean(sphere.vertices)).norm() <= 1e-9);
    }
    SUBCASE("collision: shrink until clear") {
        const auto sphere = synth::make_icosphere(Vec3(0.01, 0, 0), 5.0, 4);
        const auto out = interproximal_adapt(sphere, walls(4.95));
        const auto& r = out.report;
        CHECK(r.initial_collision);
        CHECK(r.initial_volume > 0.01);
        for (std::size_t i = 1; i < r.scale_trace.size(); ++i) CHECK(r.scale_trace[i] < r.scale_trace[i - 1]);
        CHECK(r.final_volume <= 1e-6);
        CHECK_FALSE(meshes_touch(TriangleBvh(out.mesh), TriangleBvh(walls(4.95))));
        CHECK(max_abs_x(out.mesh) < 4.95);
        CHECK((vertex_mean(out.mesh.vertices) - vertex_mean(sphere.vertices)).norm() <= 1e-9);
    }
    SUBCASE("just touching") {
        auto sphere = synth::make_icosphere(Vec3::Zero(), 4.0, 3);
        const double reach = max_abs_x(sphere);
        const auto out = interproximal_adapt(sphere, walls(reach));
        // touching counts as no volume: one grow finds overlap, then the gap shrink
        CHECK_FALSE(out.report.initial_collision);
        CHECK(out.report.scale_trace.size() == 2);
        CHECK(out.report.final_scale == doctest::Approx(1.01 * 0.99));
        CHECK(out.report.final_volume <= 1e-6);
    }
    SUBCASE("non-convergence carries the trace") {
        FittingParams p;
        p.max_scale_iters = 5;
        try {
            interproximal_adapt(synth::make_icosphere(Vec3::Zero(), 1.0, 2), walls(20.0), p);
            FAIL("expected non-convergence");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NonConvergence);
            CHECK(std::string(e.what()).find("1.05101") != std::string::npos);
        }
    }
}

TEST_CASE("centering between neighbours") {
    const LabeledMesh parts[2] = {synth::make_box(Vec3(-7, -1, 0), Vec3(-3, 1, 2)), synth::make_box(Vec3(3, -1, 0), Vec3(7, 1, 2))};
    const auto nb = merge(parts);
    const auto crown = synth::make_box(Vec3(0, -1, 5), Vec3(2, 1, 7), 2);  // centroid x = 1
    Vec3 shift;
    const auto moved = center_between_neighbors(crown, nb, &shift);
    CHECK(vertex_mean(moved.vertices).x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(vertex_mean(moved.vertices).z() == vertex_mean(crown.vertices).z());
    CHECK(shift.x() == doctest::Approx(-1.0));
    const auto again = center_between_neighbors(moved, nb, &shift);
    CHECK(shift.norm() < 1e-12);
    CHECK_THROWS_AS(center_between_neighbors(crown, parts[0]), Error);
}

TEST_CASE("posterior tap-down") {
    std::vector<std::uint32_t> apex;
    const auto crown = synth::bump_plate(4, 0.1, 2.0, {{0, 0, 1.0, 0.5}}, &apex);
    const double top = crown.vertices[apex[0]].z();

    SUBCASE("one bump 0.15 mm into a slab") {
        const auto slab = synth::make_box(Vec3(-6, -6, top - 0.15), Vec3(6, 6, top + 3), 4);
        TapReport rep;
        const auto out = occlusal_correct_posterior(crown, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(rep.colliding_per_round.size() == 2);
        CHECK_FALSE(rep.proximity_pass);
        CHECK(crown.vertices[apex[0]].z() - out.vertices[apex[0]].z() == doctest::Approx(0.2).epsilon(1e-9));
        for (std::size_t v = 0; v < crown.vertices.size(); ++v)
            if ((crown.vertices[v] - crown.vertices[apex[0]]).norm() > 1.0) CHECK(out.vertices[v] == crown.vertices[v]);
        CHECK(vertices_inside(out, TriangleBvh(slab)).empty());
    }
    SUBCASE("nothing near") {
        const auto slab = synth::make_box(Vec3(-6, -6, top + 1), Vec3(6, 6, top + 3));
        TapReport rep;
        const auto out = occlusal_correct_posterior(crown, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(out.vertices == crown.vertices);
        CHECK(rep.colliding_per_round.empty());
    }
    SUBCASE("near collision gets one round") {
        const auto slab = synth::make_box(Vec3(-6, -6, top + 0.1), Vec3(6, 6, top + 3));
        TapReport rep;
        const auto out = occlusal_correct_posterior(crown, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(rep.proximity_pass);
        CHECK(rep.colliding_per_round == std::vector<std::size_t>{1});
        CHECK(crown.vertices[apex[0]].z() - out.vertices[apex[0]].z() == doctest::Approx(0.1));
    }
    SUBCASE("five colliding cusps") {
        std::vector<std::uint32_t> ap5;
        const std::vector<BumpSpec> bumps = {{-2, -2, 1.0, 0.4}, {2, -2, 1.0, 0.4}, {-2, 2, 1.0, 0.4}, {2, 2, 1.0, 0.4}, {0, 0, 1.0, 0.4}};
        const auto five = synth::bump_plate(4, 0.1, 2.0, bumps, &ap5);
        const double t5 = five.vertices[ap5[0]].z();
        const auto slab = synth::make_box(Vec3(-6, -6, t5 - 0.12), Vec3(6, 6, t5 + 3), 4);
        TapReport rep;
        const auto out = occlusal_correct_posterior(five, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(rep.cusps.size() == 5);
        CHECK(rep.colliding_per_round.front() == 5);
        std::size_t within = 0;
        for (const auto& v : five.vertices) {
            bool near = false;
            for (auto a : ap5) near = near || (v - five.vertices[a]).norm() <= 1.0;
            within += near;
        }
        CHECK(rep.displaced_vertices.size() <= within);
        for (auto a : ap5) CHECK(out.vertices[a].z() < t5 - 0.12);
        CHECK(vertices_inside(out, TriangleBvh(slab)).empty());
    }
}

TEST_CASE("anterior shift") {
    const auto crown = synth::make_icosphere(Vec3(0, 0, 0), 2.0, 3);
    const double top = 2.0;
    SUBCASE("0.25 mm penetration takes three steps") {
        const auto slab = synth::make_box(Vec3(-4, -4, top - 0.25), Vec3(4, 4, top + 2), 3);
        ShiftReport rep;
        const auto out = occlusal_correct_anterior(crown, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(rep.shifts == 3);
        CHECK(rep.total_shift_mm == doctest::Approx(0.3));
        double worst = 0;
        for (std::size_t i = 0; i < crown.vertices.size(); i += 7)
            for (std::size_t j = 0; j < crown.vertices.size(); j += 5)
                worst = std::max(worst, std::abs((out.vertices[i] - out.vertices[j]).norm() -
                                                 (crown.vertices[i] - crown.vertices[j]).norm()));
        CHECK(worst <= 1e-12);
    }
    SUBCASE("no interference") {
        ShiftReport rep;
        const auto slab = synth::make_box(Vec3(-4, -4, top + 0.5), Vec3(4, 4, top + 2));
        const auto out = occlusal_correct_anterior(crown, slab, Vec3::UnitZ(), {}, &rep);
        CHECK(rep.shifts == 0);
        CHECK(out.vertices == crown.vertices);
    }
    SUBCASE("upper tooth moves up") {
        const auto slab = synth::make_box(Vec3(-4, -4, -4), Vec3(4, 4, -top + 0.15), 3);
        ShiftReport rep;
        const auto out = occlusal_correct_anterior(crown, slab, -Vec3::UnitZ(), {}, &rep);
        CHECK(rep.shifts == 2);
        CHECK(vertex_mean(out.vertices).z() == doctest::Approx(vertex_mean(crown.vertices).z() + 0.2));
    }
}

TEST_CASE("full fitting") {
    SUBCASE("posterior scene") {
        const auto c = synth::generate_fitting_case(7, true);
        FittingReport rep;
        const auto out = fit_crown(c.crown, c.neighbors, &c.opposing, c.fdi, {}, &rep);
        CHECK(rep.mode == OcclusalMode::Posterior);
        CHECK(intersection_volume(out, c.neighbors, 0.05) <= 1e-6);
        CHECK(vertices_inside(out, TriangleBvh(c.opposing)).empty());
        CHECK(rep.vertices_inside_opposing == 0);
        const auto j = to_json(rep);
        CHECK(j["mode"] == "posterior");
        CHECK(j["scaling"]["scale_trace"].size() == rep.scaling.scale_trace.size());
    }
    SUBCASE("anterior scene") {
        const auto c = synth::generate_fitting_case(8, false);
        FittingReport rep;
        const auto out = fit_crown(c.crown, c.neighbors, &c.opposing, c.fdi, {}, &rep);
        CHECK(rep.mode == OcclusalMode::Anterior);
        CHECK(vertices_inside(out, TriangleBvh(c.opposing)).empty());
        CHECK(intersection_volume(out, c.neighbors, 0.05) <= 1e-6);
    }
    SUBCASE("no antagonist") {
        const auto c = synth::generate_fitting_case(9, true);
        FittingReport rep;
        fit_crown(c.crown, c.neighbors, nullptr, c.fdi, {}, &rep);
        CHECK(rep.antagonist_missing);
        CHECK(rep.mode == OcclusalMode::Skipped);
        CHECK(to_json(rep)["antagonist_missing"] == true);
    }
    SUBCASE("errors carry the stage") {
        const auto c = synth::generate_fitting_case(9, true);
        try {
            fit_crown(c.crown, c.neighbors, nullptr, 19, {}, nullptr);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.stage() == "fitting");
        }
    }
}

TEST_CASE("centering that re-creates contact is cleared") {
    // unequal neighbours: the centroid midpoint (x = -2) is not the gap midpoint (x = 0)
    const LabeledMesh parts[2] = {synth::make_box(Vec3(-13, -4, -4), Vec3(-3, 4, 4), 6), synth::make_box(Vec3(3, -4, -4), Vec3(5, 4, 4), 6)};
    const auto nb = merge(parts);
    const auto crown = synth::make_icosphere(Vec3::Zero(), 2.0, 3);
    FittingReport rep;
    const auto out = fit_crown(crown, nb, nullptr, 36, {}, &rep);
    CHECK(rep.centering_shift.x() == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(rep.recentre_shrinks > 0);
    CHECK(rep.recentre_scale == doctest::Approx(std::pow(0.99, double(rep.recentre_shrinks))));
    CHECK(rep.residual_neighbor_volume <= 1e-6);
    CHECK_FALSE(meshes_touch(TriangleBvh(out), TriangleBvh(nb)));
    CHECK(vertex_mean(out.vertices).x() == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("rim contact away from the cusps is cleared rigidly") {
    std::vector<std::uint32_t> apex;
    const auto plate = synth::bump_plate(4, 0.2, 2.0, {{0, 0, 1.0, 0.5}}, &apex);
    const LabeledMesh walls2[2] = {synth::make_box(Vec3(-8, -5, -1), Vec3(-4.3, 5, 5), 4), synth::make_box(Vec3(4.3, -5, -1), Vec3(8, 5, 5), 4)};
    const auto nb = merge(walls2);
    // a corner block dipping into the plate's top, far from the single bump
    const auto block = synth::make_box(Vec3(2.5, 2.5, 1.7), Vec3(7, 7, 6), 4);
    FittingReport rep;
    const auto out = fit_crown(plate, nb, &block, 36, {}, &rep);
    CHECK(rep.mode == OcclusalMode::Posterior);
    CHECK(rep.tap.colliding_per_round.empty());
    CHECK(rep.clearance_shifts >= 1);
    CHECK(rep.vertices_inside_opposing == 0);
    CHECK(vertices_inside(out, TriangleBvh(block)).empty());
    CHECK(to_json(rep)["clearance_shifts"] == rep.clearance_shifts);
}
