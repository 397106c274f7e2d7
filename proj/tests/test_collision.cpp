#include <doctest.h>

#include <cmath>
#include <random>

#include "crownfit/collision.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;
using synth::make_box;
using synth::make_icosphere;

TEST_CASE("intersection volume of boxes") {
    const auto a = make_box(Vec3::Zero(), Vec3::Ones(), 2);
    CHECK(intersection_volume(a, make_box(Vec3(11, 0, 0), Vec3(12, 1, 1)), 0.02) == 0.0);
    const auto slab = intersection_volume(a, make_box(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1), 3), 0.02);
    CHECK(slab == doctest::Approx(0.5).epsilon(0.05));
    CHECK(intersection_volume(a, a, 0.02) == doctest::Approx(1.0).epsilon(0.05));
    // rotated copy: the columns no longer line up with faces
    const RigidTransform r(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3::Zero());
    const auto big = make_box(Vec3::Constant(-2), Vec3::Constant(2), 4);
    CHECK(intersection_volume(transformed(a, r), big, 0.02) == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS_AS(intersection_volume(a, a, 0.0), Error);
}

TEST_CASE("sphere lens volume matches the analytic formula") {
    const double r = 2.0;
    for (double d : {1.0, 2.0, 3.0}) {
        const auto s1 = make_icosphere(Vec3::Zero(), r, 5);
        const auto s2 = make_icosphere(Vec3(d, 0.1, -0.2), r, 5);
        const double lens = M_PI * (4 * r + d) * (2 * r - d) * (2 * r - d) / 12.0;
        CHECK(intersection_volume(s1, s2, 0.02) == doctest::Approx(lens).epsilon(0.03));
    }
}

TEST_CASE("open meshes need proximity mode") {
    auto open = make_box(Vec3::Zero(), Vec3::Ones());
    open.faces.pop_back();
    const auto closed = make_box(Vec3::Zero(), Vec3::Ones());
    try {
        intersection_volume(open, closed, 0.05, IntersectionMode::Volumetric);
        FAIL("expected a mode error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Mode);
    }
    CHECK(intersection_volume(open, make_box(Vec3::Constant(5), Vec3::Constant(6)), 0.05) == 0.0);
    CHECK(intersection_volume(open, make_box(Vec3::Constant(0.5), Vec3::Constant(1.5)), 0.05) > 0.0);
}

TEST_CASE("point containment and distance") {
    const auto s = make_icosphere(Vec3(1, 2, 3), 2.0, 4);
    const TriangleBvh bvh(s);
    CHECK(bvh.closed());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3, 3);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const Vec3 p = Vec3(1, 2, 3) + Vec3(u(rng), u(rng), u(rng));
        const double dist = (p - Vec3(1, 2, 3)).norm();
        if (std::abs(dist - 2.0) < 0.01) continue;  // inscribed polyhedron band
        CHECK(bvh.inside(p) == (dist < 2.0));
        ++checked;
        // brute-force nearest triangle distance
        if (i % 100 == 0) {
            double best = 1e300;
            for (std::size_t f = 0; f < s.faces.size(); ++f) {
                const LabeledMesh one = submesh(s, std::vector<std::size_t>{f});
                best = std::min(best, TriangleBvh(one).closest(p).distance);
            }
            CHECK(bvh.closest(p).distance == best);
        }
    }
    CHECK(checked > 1900);

    // grid-aligned box with vertices exactly on the query axes
    const TriangleBvh box(make_box(Vec3::Zero(), Vec3::Ones(), 4));
    CHECK(box.inside(Vec3(0.5, 0.5, 0.5)));
    CHECK(box.inside(Vec3(0.25, 0.25, 0.25)));
    CHECK_FALSE(box.inside(Vec3(1.25, 0.5, 0.5)));
    CHECK(box.signed_distance(Vec3(0.5, 0.5, 0.9)) == doctest::Approx(-0.1));
    CHECK(box.signed_distance(Vec3(0.5, 0.5, 1.3)) == doctest::Approx(0.3));
}

TEST_CASE("contact predicate") {
    const TriangleBvh a(make_box(Vec3::Zero(), Vec3::Ones(), 2));
    CHECK_FALSE(meshes_touch(a, TriangleBvh(make_box(Vec3(1.001, 0, 0), Vec3(2, 1, 1)))));
    CHECK(meshes_touch(a, TriangleBvh(make_box(Vec3(0.999, 0.2, 0.2), Vec3(2, 0.8, 0.8)))));
    // containment without crossing
    CHECK(meshes_touch(a, TriangleBvh(make_box(Vec3::Constant(0.4), Vec3::Constant(0.6)))));
    CHECK(meshes_touch(TriangleBvh(make_box(Vec3::Constant(0.4), Vec3::Constant(0.6))), a));
    // a sliver overlap thinner than the grid is still seen after refinement
    const TriangleBvh sliver(make_box(Vec3(0.9995, 0.3, 0.3), Vec3(2, 0.7, 0.7)));
    const double v = contact_volume(a, sliver, 0.05);
    CHECK(v > 0.0);
    CHECK(v == doctest::Approx(0.0005 * 0.16).epsilon(0.3));
    CHECK(contact_volume(a, TriangleBvh(make_box(Vec3(1.001, 0, 0), Vec3(2, 1, 1))), 0.05) == 0.0);

    const auto inside = vertices_inside(make_box(Vec3::Constant(0.5), Vec3::Constant(1.5)), a);
    CHECK(inside == std::vector<std::uint32_t>{0});
}
