#include <doctest.h>

#include <random>

#include "crownfit/registration.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;

namespace {

const LabeledMesh& lower_arch() {
    static const LabeledMesh m =
        synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 0, 0.3)).mesh;
    return m;
}

PointCloud lower_cloud() { return voxel_downsample(oriented_cloud(lower_arch()), 0.8); }

double rot_err(const RigidTransform& a, const RigidTransform& b) {
    return rotation_distance_deg(a.rotation(), b.rotation());
}
double trans_err(const RigidTransform& a, const RigidTransform& b, const Vec3& at) {
    return (a.apply(at) - b.apply(at)).norm();
}

const TemplateLibrary& small_library() {
    static const TemplateLibrary lib = [] {
        std::vector<LabeledMesh> up, lo;
        for (int i = 0; i < 3; ++i) {
            up.push_back(synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullUpper, Jaw::Upper, 500 + i, 0.3)).mesh);
            lo.push_back(synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 500 + i, 0.3)).mesh);
        }
        return build_library(up, lo);
    }();
    return lib;
}

}  // namespace

TEST_CASE("edge length gate") {
    const std::array<Vec3, 3> s = {Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 10, 0)};
    std::array<Vec3, 3> d = s;
    CHECK(edge_lengths_compatible(s, d, 0.95));
    d[1] = Vec3(9.0, 0, 0);  // one edge at ratio 0.90
    CHECK(!edge_lengths_compatible(s, d, 0.95));
    d[1] = Vec3(9.6, 0, 0);
    CHECK(edge_lengths_compatible(s, d, 0.95));
    CHECK(edge_lengths_compatible(s, s, 1.0));
}

TEST_CASE("kabsch recovers a known motion") {
    std::mt19937 rng(3);
    std::normal_distribution<double> g;
    std::vector<Vec3> a(20), b(20);
    const RigidTransform t(Eigen::AngleAxisd(2.0, Vec3(1, -1, 2).normalized()).toRotationMatrix(), Vec3(3, 4, -5));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = Vec3(g(rng), g(rng), g(rng)) * 5, b[i] = t.apply(a[i]);
    const auto k = kabsch(a, b);
    CHECK(rot_err(k, t) < 1e-9);
    CHECK((k.translation() - t.translation()).norm() < 1e-9);
    CHECK_THROWS_AS(kabsch(std::span(a.data(), 2), std::span(b.data(), 2)), Error);
}

TEST_CASE("coarse registration") {
    RegistrationParams p;
    const PointCloud c = oriented_cloud(lower_arch());
    SUBCASE("self") {
        const auto r = coarse_register(c, c, p);
        CHECK(r.transform.rotation_angle_deg() < 0.1);
        CHECK(r.transform.translation().norm() < 1e-3);
        CHECK(r.fitness >= 0.99);
    }
    SUBCASE("90 degrees about z and 10 mm") {
        const RigidTransform m(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()).toRotationMatrix(), Vec3(10, 0, 0));
        const PointCloud moved = transformed(c, m);
        const auto r = coarse_register(moved, c, p);
        const auto f = fine_register(voxel_downsample(moved, p.voxel), voxel_downsample(c, p.voxel), r.transform, p);
        const Vec3 centre = vertex_mean(c.points);
        CHECK(rot_err(f.transform, m.inverse()) < 2.0);
        CHECK(trans_err(f.transform * m, RigidTransform(), centre) < 1.0);
    }
    SUBCASE("deterministic under a fixed seed") {
        const RigidTransform m(Eigen::AngleAxisd(1.0, Vec3::UnitZ()).toRotationMatrix(), Vec3(0, 5, 0));
        const PointCloud moved = transformed(c, m);
        const auto a = coarse_register(moved, c, p);
        const auto b = coarse_register(moved, c, p);
        CHECK(a.transform.matrix() == b.transform.matrix());
        CHECK(a.fitness == b.fitness);
    }
    SUBCASE("failure when no triple passes the gate") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> u(-10, 10);
        PointCloud noise;
        for (int i = 0; i < 400; ++i) {
            noise.points.emplace_back(u(rng), u(rng), u(rng));
            noise.normals.push_back(Vec3(u(rng), u(rng), u(rng)).normalized());
        }
        auto strict = p;
        strict.edge_similarity = 1.0;
        strict.ransac_max_iters = 2000;
        try {
            coarse_register(noise, c, strict);
            FAIL("expected coarse failure");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::CoarseFailure);
        }
    }
}

TEST_CASE("fine registration") {
    RegistrationParams p;
    const PointCloud tgt = lower_cloud();
    const Vec3 centre = vertex_mean(tgt.points);
    SUBCASE("fixed point") {
        IcpTrace trace;
        const auto r = fine_register(tgt, tgt, RigidTransform(), p, &trace);
        CHECK(r.transform.rotation_angle_deg() < 1e-6);
        CHECK(r.transform.translation().norm() < 1e-6);
        CHECK(trace.iterations == 1);
    }
    SUBCASE("5 degrees and 2 mm, with and without outliers") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> u(0, 1);
        for (int trial = 0; trial < 5; ++trial) {
            const Vec3 axis = Vec3(g(rng), g(rng), g(rng)).normalized();
            const RigidTransform truth(Eigen::AngleAxisd(5 * M_PI / 180, axis).toRotationMatrix(),
                                       Vec3(g(rng), g(rng), g(rng)).normalized() * 2);
            PointCloud clean = transformed(tgt, truth.inverse());
            IcpTrace trace;
            const auto rc = fine_register(clean, tgt, RigidTransform(), p, &trace);
            CHECK(rot_err(rc.transform, truth) < 0.2);
            CHECK(trans_err(rc.transform, truth, centre) < 0.1);
            for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1]);

            auto wide = p;
            wide.icp_max_corr_dist = 20.0;
            const auto rc_wide = fine_register(clean, tgt, RigidTransform(), wide);
            PointCloud dirty = clean;
            for (std::size_t i = 0; i < dirty.points.size(); ++i)
                if (i % 5 == 0) dirty.points[i] += dirty.normals[i] * (6.0 + 4.0 * u(rng));
            const auto rd = fine_register(dirty, tgt, RigidTransform(), wide);
            CHECK(rot_err(rd.transform, rc_wide.transform) < 0.5);
            CHECK(trans_err(rd.transform, rc_wide.transform, centre) < 0.3);
        }
    }
    SUBCASE("planar data is rank deficient") {
        PointCloud plane;
        for (int i = -10; i <= 10; ++i)
            for (int j = -10; j <= 10; ++j) {
                plane.points.emplace_back(i * 0.5, j * 0.5, 0.0);
                plane.normals.push_back(Vec3::UnitZ());
            }
        try {
            fine_register(transformed(plane, RigidTransform::translation_only(Vec3(0, 0, 0.1))), plane, RigidTransform(), p);
            FAIL("expected rank deficiency");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::RankDeficient);
        }
    }
    SUBCASE("equivariance under a source pre-rotation") {
        const RigidTransform truth(Eigen::AngleAxisd(0.05, Vec3::UnitZ()).toRotationMatrix(), Vec3(0.5, -0.3, 0.2));
        const PointCloud src = transformed(tgt, truth.inverse());
        const RigidTransform q(Eigen::AngleAxisd(0.8, Vec3(0, 1, 1).normalized()).toRotationMatrix(), Vec3(1, 2, 3));
        const auto a = fine_register(src, tgt, RigidTransform(), p);
        const auto b = fine_register(transformed(src, q), tgt, q.inverse(), p);
        CHECK(rot_err(b.transform * q, a.transform) < 0.01);
        CHECK(trans_err(b.transform * q, a.transform, centre) < 0.01);
    }
}

TEST_CASE("parameter validation") {
    RegistrationParams p;
    CHECK_NOTHROW(p.validate());
    p.edge_similarity = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.tukey_k = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.voxel = -1;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("partials register back onto their master") {
    const auto& lib = small_library();
    RegistrationParams p;
    for (Jaw j : {Jaw::Upper, Jaw::Lower})
        for (Side s : {Side::Left, Side::Right, Side::Center}) {
            const auto src = voxel_downsample(oriented_cloud(lib.partial(j, s)), p.voxel);
            const auto tgt = voxel_downsample(oriented_cloud(lib.master(j)), p.voxel);
            const auto r = fine_register(src, tgt, RigidTransform(), p);
            CHECK(r.fitness >= 0.99);
        }
}

TEST_CASE("routing") {
    const auto& lib = small_library();
    RegistrationParams p;
    const PreparedLibrary prepared(lib, p);
    SUBCASE("lower-left partial picks the lower template") {
        const auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::PartialLeft, Jaw::Lower, 77, 0.15));
        RoutingReport report;
        const auto r = register_with_routing(arch.mesh, ScanClass::PartialLeft, prepared, &report);
        CHECK(r.chosen_template == "lower_left");
        REQUIRE(report.attempts.size() == 2);
        CHECK(report.attempts[1].result.fitness > report.attempts[0].result.fitness + 0.05);
        CHECK(r.fitness >= 0.0);
        CHECK(r.fitness <= 1.0);
    }
    SUBCASE("full scans make one attempt") {
        const auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullUpper, Jaw::Upper, 78, 0.15));
        RoutingReport report;
        const auto r = register_with_routing(arch.mesh, ScanClass::FullUpper, prepared, &report);
        CHECK(report.attempts.size() == 1);
        CHECK(r.chosen_template == "upper");
        CHECK(r.transform.rotation_angle_deg() < 2.0);
    }
    SUBCASE("ties go to the upper template") {
        TemplateLibrary twin = lib;
        for (Side s : {Side::Left, Side::Right, Side::Center})
            twin.partials[TemplateKey::partial(Jaw::Lower, s)] = twin.partials[TemplateKey::partial(Jaw::Upper, s)];
        const PreparedLibrary tp(twin, p);
        const auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::PartialRight, Jaw::Upper, 79, 0.15));
        RoutingReport report;
        const auto r = register_with_routing(arch.mesh, ScanClass::PartialRight, tp, &report);
        CHECK(report.attempts[0].result.fitness == report.attempts[1].result.fitness);
        CHECK(r.chosen_template == "upper_right");
    }
}
