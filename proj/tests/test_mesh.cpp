#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <tuple>

#include "crownfit/mesh.hpp"
#include "crownfit/mesh_io.hpp"
#include "crownfit/spatial_index.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "crownfit_tests";
    fs::create_directories(dir);
    return dir / name;
}

LabeledMesh unit_cube() { return synth::make_box(Vec3::Zero(), Vec3::Ones(), 1); }

}  // namespace

TEST_CASE("rigid transform validates and composes") {
    CHECK_THROWS_AS(RigidTransform(Mat3::Identity() * 2.0, Vec3::Zero()), Error);
    Mat3 reflect = Mat3::Identity();
    reflect(0, 0) = -1;
    CHECK_THROWS_AS(RigidTransform(reflect, Vec3::Zero()), Error);

    const Mat3 r = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    const RigidTransform a(r, Vec3(1, -2, 3));
    const RigidTransform id = a * a.inverse();
    CHECK(id.rotation().isApprox(Mat3::Identity(), 1e-12));
    CHECK(id.translation().norm() < 1e-12);
    CHECK(a.rotation_angle_deg() == doctest::Approx(0.7 * 180 / M_PI));
    CHECK(rotation_distance_deg(r, Mat3::Identity()) == doctest::Approx(0.7 * 180 / M_PI));
}

TEST_CASE("load unit cube and hand-authored label") {
    const auto m = load_mesh(fs::path(CROWNFIT_TEST_DATA_DIR) / "cube_label17.ply");
    CHECK(m.num_vertices() == 8);
    CHECK(m.num_faces() == 12);
    REQUIRE(m.has_labels());
    CHECK(std::count(m.face_labels.begin(), m.face_labels.end(), 17) == 1);
    CHECK(is_closed(m));
}

TEST_CASE("malformed and invalid files") {
    try {
        load_mesh(fs::path(CROWNFIT_TEST_DATA_DIR) / "truncated.ply");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    try {
        load_mesh(fs::path(CROWNFIT_TEST_DATA_DIR) / "bad_index.ply");
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
    CHECK_THROWS_AS(load_mesh("/nonexistent/file.ply"), Error);
}

TEST_CASE("save/load round trips") {
    auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::PartialLeft, Jaw::Lower, 3)).mesh;
    SUBCASE("binary PLY is bit-identical") {
        const auto p = temp_path("arch.ply");
        save_mesh(arch, p);
        const auto back = load_mesh(p);
        CHECK(back.vertices == arch.vertices);
        CHECK(back.faces == arch.faces);
        CHECK(back.face_labels == arch.face_labels);
    }
    SUBCASE("ascii PLY keeps counts and labels") {
        const auto p = temp_path("arch_ascii.ply");
        save_mesh(arch, p, MeshFormat::Ply, {.binary = false});
        const auto back = load_mesh(p);
        CHECK(back.num_vertices() == arch.num_vertices());
        CHECK(back.faces == arch.faces);
        CHECK(back.face_labels == arch.face_labels);
        for (std::size_t i = 0; i < arch.vertices.size(); ++i) CHECK((back.vertices[i] - arch.vertices[i]).norm() < 1e-9);
    }
    SUBCASE("OBJ drops labels with a warning") {
        const auto p = temp_path("arch.obj");
        Warnings w;
        save_mesh(arch, p, MeshFormat::Obj, {}, &w);
        CHECK(w.size() == 1);
        const auto back = load_mesh(p);
        CHECK(!back.has_labels());
        CHECK(back.faces == arch.faces);
    }
    SUBCASE("STL refuses labels and welds on load") {
        const auto p = temp_path("cube.stl");
        auto cube = unit_cube();
        CHECK_THROWS_AS(save_mesh(cube, p, MeshFormat::Stl), Error);
        save_mesh(cube, p, MeshFormat::Stl, {.write_labels = false});
        const auto back = load_mesh(p);
        CHECK(back.num_vertices() == 8);
        CHECK(back.num_faces() == 12);
        CHECK(is_closed(back));
    }
    SUBCASE("empty mesh") {
        const auto p = temp_path("empty.ply");
        save_mesh(LabeledMesh{}, p);
        const auto back = load_mesh(p);
        CHECK(back.num_vertices() == 0);
        CHECK(back.num_faces() == 0);
    }
    SUBCASE("unwritable path") {
        try {
            save_mesh(arch, "/nonexistent-dir/x.ply");
            FAIL("expected io error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Io);
        }
    }
}

TEST_CASE("vertex normals") {
    SUBCASE("flat square") {
        LabeledMesh sq;
        sq.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
        sq.faces = {{0, 1, 2}, {0, 2, 3}};
        const auto m = estimate_vertex_normals(sq);
        for (const auto& n : m.vertex_normals) CHECK((n - Vec3::UnitZ()).norm() < 1e-12);
    }
    SUBCASE("cube corner") {
        // every face diagonal runs through corner 0 or corner 6, so those two
        // corners see equal triangle area from each of their three faces
        LabeledMesh cube;
        cube.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
        cube.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                      {1, 2, 6}, {1, 6, 5}, {2, 3, 6}, {3, 7, 6}, {0, 4, 7}, {0, 7, 3}};
        REQUIRE(is_closed(cube));
        const auto m = estimate_vertex_normals(cube);
        CHECK((m.vertex_normals[0] - Vec3(-1, -1, -1).normalized()).norm() < 1e-6);
        CHECK((m.vertex_normals[6] - Vec3(1, 1, 1).normalized()).norm() < 1e-6);
    }
    SUBCASE("sphere") {
        const auto m = synth::make_icosphere(Vec3::Zero(), 1.0, 4);
        double worst = 0;
        for (std::size_t i = 0; i < m.vertices.size(); ++i)
            worst = std::max(worst, std::acos(std::clamp(m.vertex_normals[i].dot(m.vertices[i].normalized()), -1.0, 1.0)));
        CHECK(worst * 180 / M_PI < 2.0);
    }
    SUBCASE("isolated vertex falls back with a warning") {
        LabeledMesh m;
        m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
        m.faces = {{0, 1, 2}};
        Warnings w;
        const auto out = estimate_vertex_normals(m, &w);
        CHECK(out.vertex_normals[3] == Vec3::UnitZ());
        CHECK(!w.empty());
    }
    SUBCASE("all outputs unit length") {
        const auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::PartialCenter, Jaw::Upper, 1)).mesh;
        for (const auto& n : arch.vertex_normals) CHECK(std::abs(n.norm() - 1.0) <= 1e-6);
    }
}

TEST_CASE("voxel downsample") {
    SUBCASE("close pair merges to midpoint") {
        PointCloud c;
        c.points = {{0.1, 0.1, 0.1}, {0.2, 0.1, 0.1}};
        const auto d = voxel_downsample(c, 0.8);
        REQUIRE(d.size() == 1);
        CHECK((d.points[0] - Vec3(0.15, 0.1, 0.1)).norm() < 1e-12);
    }
    SUBCASE("sparse grid unchanged") {
        PointCloud c;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) c.points.emplace_back(2.0 * i + 0.1, 2.0 * j + 0.1, 0.1);
        CHECK(voxel_downsample(c, 0.8).size() == c.size());
    }
    SUBCASE("matches hash-grid oracle") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(0.0, 10.0);
        PointCloud c;
        for (int i = 0; i < 10000; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
        std::set<std::tuple<long, long, long>> cells;
        for (const auto& p : c.points)
            cells.insert({long(std::floor(p.x())), long(std::floor(p.y())), long(std::floor(p.z()))});
        CHECK(voxel_downsample(c, 1.0).size() == cells.size());
    }
    CHECK_THROWS_AS(voxel_downsample(PointCloud{}, 0.0), Error);
}

TEST_CASE("bounding box diagonal") {
    CHECK(bounding_box_diagonal(unit_cube()) == doctest::Approx(std::sqrt(3.0)));
    const std::vector<Vec3> one = {{1, 2, 3}};
    CHECK(bounding_box_diagonal(one) == 0.0);
    CHECK_THROWS_AS(bounding_box_diagonal(LabeledMesh{}), Error);
    const auto arch = synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 2)).mesh;
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const auto& v : arch.vertices) lo = lo.cwiseMin(v), hi = hi.cwiseMax(v);
    CHECK(bounding_box_diagonal(arch) == doctest::Approx((hi - lo).norm()).epsilon(1e-15));
}

TEST_CASE("spatial index matches linear scan") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<Vec3> pts(1000);
    for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
    // duplicates exercise the tie rule
    pts[500] = pts[10];
    const auto index = build_spatial_index(pts);
    CHECK(index.nearest(pts[3]).index == 3);
    CHECK(index.nearest(pts[3]).distance_sq == 0.0);
    const auto zero = index.radius(pts[10], 0.0);
    REQUIRE(zero.size() == 2);
    CHECK(zero[0].index == 10);
    CHECK(zero[1].index == 500);
    for (int q = 0; q < 100; ++q) {
        const Vec3 p(u(rng), u(rng), u(rng));
        std::vector<Neighbor> all;
        for (std::uint32_t i = 0; i < pts.size(); ++i) all.push_back({i, (pts[i] - p).squaredNorm()});
        std::sort(all.begin(), all.end());
        CHECK(index.nearest(p).index == all[0].index);
        const auto k = index.knn(p, 7);
        for (int i = 0; i < 7; ++i) CHECK(k[i].index == all[i].index);
        const double r = 3.0;
        std::vector<std::uint32_t> expect;
        for (const auto& n : all)
            if (n.distance_sq <= r * r) expect.push_back(n.index);
        const auto got = index.radius(p, r);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].index == expect[i]);
    }
    CHECK_THROWS_AS(build_spatial_index(std::vector<Vec3>{}), Error);
}

TEST_CASE("topology helpers") {
    const auto cube = unit_cube();
    CHECK(is_closed(cube));
    CHECK(euler_characteristics(cube) == std::vector<int>{2});
    auto open = cube;
    open.faces.pop_back();
    open.face_labels.pop_back();
    CHECK(!is_closed(open));
    std::size_t n = 0;
    const std::vector<LabeledMesh> parts = {cube, synth::make_box(Vec3(3, 0, 0), Vec3(4, 1, 1))};
    face_components(merge(parts), &n);
    CHECK(n == 2);
    const std::vector<std::size_t> keep = {0, 1};
    const auto sub = submesh(cube, keep);
    CHECK(sub.num_faces() == 2);
    CHECK(sub.num_vertices() == 4);
}

TEST_CASE("scan label validation") {
    auto cube = unit_cube();
    cube.face_labels[0] = 18;
    CHECK_NOTHROW(validate(cube));
    CHECK_THROWS_AS(validate_scan_labels(cube), Error);
    cube.vertex_normals[0] *= 2.0;
    CHECK_THROWS_AS(validate(cube), Error);
}
