#include <doctest.h>

#include <cmath>
#include <set>

#include "crownfit/synth.hpp"

using namespace crownfit;
using namespace crownfit::synth;

TEST_CASE("tooth sets per class") {
    CHECK(teeth_for_class(ScanClass::FullLower, Jaw::Lower).size() == 14);
    CHECK(teeth_for_class(ScanClass::PartialLeft, Jaw::Upper) == std::vector<int>{23, 24, 25, 26, 27});
    CHECK(teeth_for_class(ScanClass::PartialRight, Jaw::Lower) == std::vector<int>{47, 46, 45, 44, 43});
    CHECK(teeth_for_class(ScanClass::PartialCenter, Jaw::Lower) == std::vector<int>{43, 42, 41, 31, 32, 33});
    for (auto cls : kAllScanClasses)
        for (auto jaw : {Jaw::Upper, Jaw::Lower}) {
            const auto spec = arch_spec_for_class(cls, jaw);
            std::vector<int> fdis;
            for (const auto& t : spec.teeth) fdis.push_back(t.fdi);
            const auto got = classify_tooth_set(spec.jaw, fdis);
            CHECK(got == cls);
        }
}

TEST_CASE("generated arch structure") {
    for (auto cls : kAllScanClasses) {
        const auto spec = arch_spec_for_class(cls, Jaw::Upper, 7);
        const auto arch = generate_arch(spec);
        const auto& m = arch.mesh;
        CHECK_NOTHROW(validate_scan_labels(m));
        CHECK(is_closed(m));
        std::size_t comps = 0;
        face_components(m, &comps);
        CHECK(comps == spec.teeth.size() + 1);
        for (int chi : euler_characteristics(m)) CHECK(chi == 2);
        CHECK(signed_volume(m) > 0);
        std::set<std::uint8_t> labels(m.face_labels.begin(), m.face_labels.end());
        CHECK(labels.size() == spec.teeth.size() + 1);
        CHECK(arch.truth.scan_class == cls);
        CHECK(arch.truth.jaw == spec.jaw);
        for (const auto& [lab, c] : arch.truth.centroids) CHECK(c.allFinite());
    }
}

TEST_CASE("jaw orientation and arch shape") {
    const auto lower = generate_arch(arch_spec_for_class(ScanClass::FullLower, Jaw::Lower));
    const auto upper = generate_arch(arch_spec_for_class(ScanClass::FullUpper, Jaw::Upper));
    // crowns stick out toward the occlusal side: lower +z, upper -z
    CHECK(lower.truth.centroids.at(fdi::tooth_class(36)).z() > lower.truth.centroids.at(label::kGingiva).z() + 3);
    CHECK(upper.truth.centroids.at(fdi::tooth_class(26)).z() < upper.truth.centroids.at(label::kGingiva).z() - 3);
    // incisors anterior (-y), left side +x
    CHECK(lower.truth.tooth_centers.at(31).y() < lower.truth.tooth_centers.at(36).y());
    CHECK(lower.truth.tooth_centers.at(36).x() > 0);
    CHECK(lower.truth.tooth_centers.at(46).x() < 0);
    CHECK(upper.truth.tooth_centers.at(26).x() > lower.truth.tooth_centers.at(36).x());
}

TEST_CASE("prepared tooth and validation") {
    auto spec = arch_spec_for_class(ScanClass::PartialLeft, Jaw::Lower);
    spec.teeth[2].prepared = true;
    const auto arch = generate_arch(spec);
    CHECK(arch.truth.label_fdi.at(label::kPrepared) == spec.teeth[2].fdi);
    CHECK(std::count(arch.mesh.face_labels.begin(), arch.mesh.face_labels.end(), label::kPrepared) > 0);

    auto bad = spec;
    bad.teeth.push_back(bad.teeth.front());
    CHECK_THROWS_AS(generate_arch(bad), Error);
    bad = spec;
    bad.teeth.push_back(standard_tooth(11));
    CHECK_THROWS_AS(generate_arch(bad), Error);
}

TEST_CASE("generation is deterministic") {
    const auto a = generate_arch(arch_spec_for_class(ScanClass::PartialRight, Jaw::Lower, 5, 0.3));
    const auto b = generate_arch(arch_spec_for_class(ScanClass::PartialRight, Jaw::Lower, 5, 0.3));
    CHECK(a.mesh.vertices == b.mesh.vertices);
    const auto c = generate_arch(arch_spec_for_class(ScanClass::PartialRight, Jaw::Lower, 6, 0.3));
    CHECK(a.mesh.vertices != c.mesh.vertices);
}

TEST_CASE("pose perturbation") {
    const auto p = sample_perturbation(PerturbSpec::augmentation(3));
    CHECK(std::abs(p.angles_deg.x()) <= 5);
    CHECK(std::abs(p.angles_deg.z()) <= 15);
    CHECK(p.scale >= 0.9);
    CHECK(p.scale <= 1.1);
    CHECK(std::abs(p.transform.translation().z()) <= 2);
    const Vec3 r = p.angles_deg * M_PI / 180;
    const Mat3 want = (Eigen::AngleAxisd(r.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(r.y(), Vec3::UnitY()) *
                       Eigen::AngleAxisd(r.x(), Vec3::UnitX()))
                          .toRotationMatrix();
    CHECK(p.transform.rotation().isApprox(want, 1e-12));

    const auto box = make_box(Vec3::Zero(), Vec3::Ones());
    const auto [moved, q] = perturb_pose(box, PerturbSpec::augmentation(3));
    for (std::size_t i = 0; i < box.vertices.size(); ++i)
        CHECK((moved.vertices[i] - (q.transform.rotation() * (q.scale * box.vertices[i]) + q.transform.translation())).norm() < 1e-12);

    PerturbSpec bad;
    bad.scale_min = 0;
    CHECK_THROWS_AS(sample_perturbation(bad), Error);
}

TEST_CASE("crown fixture") {
    const auto f = generate_crown_fixture(CrownKind::BumpedPosterior, {.cusp_count = 7});
    CHECK(is_closed(f.crown.mesh));
    CHECK(f.apex_vertices.size() == 7);
    for (std::size_t i = 1; i < f.apex_heights.size(); ++i) CHECK(f.apex_heights[i] < f.apex_heights[i - 1]);
    CHECK(signed_volume(f.crown.mesh) > 0);
}

TEST_CASE("simple solids") {
    const auto s = make_icosphere(Vec3(1, 2, 3), 2.0, 3);
    CHECK(is_closed(s));
    CHECK(signed_volume(s) == doctest::Approx(4.0 / 3.0 * M_PI * 8).epsilon(0.02));
    const auto b = make_box(Vec3::Zero(), Vec3(1, 2, 3), 3);
    CHECK(is_closed(b));
    CHECK(signed_volume(b) == doctest::Approx(6.0));
    auto flipped = b;
    for (auto& f : flipped.faces) std::swap(f[1], f[2]);
    orient_outward(flipped);
    CHECK(signed_volume(flipped) == doctest::Approx(6.0));
}
