#include <doctest.h>

#include <cmath>
#include <random>

#include "crownfit/features.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;

namespace {

// Straightforward O(n^2) reference: Darboux frame on the pair ordered so the
// source normal is closer to the connecting line, 11 equal bins per feature.
std::vector<std::array<double, 33>> brute_fpfh(const PointCloud& c, double radius) {
    const std::size_t n = c.size();
    auto bin = [](double v, double lo, double hi) {
        int b = int(std::floor(11.0 * (v - lo) / (hi - lo)));
        return b < 0 ? 0 : (b > 10 ? 10 : b);
    };
    std::vector<std::array<double, 33>> spfh(n), out(n);
    std::vector<std::vector<std::size_t>> nb(n);
    for (std::size_t i = 0; i < n; ++i) {
        spfh[i].fill(0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && (c.points[j] - c.points[i]).norm() <= radius) nb[i].push_back(j);
        for (std::size_t j : nb[i]) {
            Vec3 ps = c.points[i], ns = c.normals[i], pt = c.points[j], nt = c.normals[j];
            Vec3 d = pt - ps;
            const double len = d.norm();
            d /= len;
            const double ang_s = std::acos(std::min(1.0, std::abs(ns.dot(d))));
            const double ang_t = std::acos(std::min(1.0, std::abs(nt.dot(d))));
            double phi;
            if (ang_s > ang_t) {
                std::swap(ps, pt);
                std::swap(ns, nt);
                d = -d;
            }
            phi = ns.dot(d);
            const Vec3 u = ns;
            const Vec3 v = d.cross(u).normalized();
            const Vec3 w = u.cross(v);
            const double alpha = v.dot(nt);
            const double theta = std::atan2(w.dot(nt), u.dot(nt));
            const double inc = 100.0 / double(nb[i].size());
            spfh[i][bin(theta, -M_PI, M_PI)] += inc;
            spfh[i][11 + bin(alpha, -1, 1)] += inc;
            spfh[i][22 + bin(phi, -1, 1)] += inc;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i].fill(0.0);
        if (nb[i].empty()) continue;
        for (int b = 0; b < 33; ++b) {
            double acc = 0.0;
            for (std::size_t j : nb[i]) acc += spfh[j][b] / (c.points[j] - c.points[i]).norm();
            out[i][b] = spfh[i][b] + acc / double(nb[i].size());
        }
        for (int s = 0; s < 3; ++s) {
            double sum = 0.0;
            for (int b = 0; b < 11; ++b) sum += out[i][s * 11 + b];
            for (int b = 0; b < 11; ++b) out[i][s * 11 + b] *= 100.0 / sum;
        }
    }
    return out;
}

PointCloud random_surface_cloud(int n, unsigned seed) {
    const auto sphere = synth::make_icosphere(Vec3::Zero(), 4.0, 3);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, sphere.vertices.size() - 1);
    PointCloud c;
    for (int i = 0; i < n; ++i) {
        const auto k = pick(rng);
        c.points.push_back(sphere.vertices[k] + Vec3(0.3 * std::sin(i), 0.0, 0.2 * std::cos(3 * i)));
        c.normals.push_back(sphere.vertex_normals[k]);
    }
    return c;
}

}  // namespace

TEST_CASE("point features") {
    PointCloud c;
    c.points = {{3, 4, 0}, {-3, -4, 0}};
    c.normals = {Vec3::UnitZ(), Vec3::UnitZ()};
    auto f = compute_point_features(c);
    CHECK(f.points[0].radius == doctest::Approx(5.0));
    CHECK(f.points[0].azimuth == doctest::Approx(std::atan2(4.0, 3.0)));
    CHECK(f.points[0].azimuth == doctest::Approx(0.9273).epsilon(1e-4));

    PointCloud single;
    single.points = {{1, 1, 1}};
    single.normals = {Vec3::UnitX()};
    const auto g = compute_point_features(single);
    CHECK(g.points[0].radius == 0.0);
    CHECK(g.points[0].azimuth == 0.0);
    CHECK(g.points[0].normal == Vec3::UnitX());

    CHECK_THROWS_AS(compute_point_features(PointCloud{{{0, 0, 0}}, {}}), Error);
    CHECK(azimuth_of(-1.0, -0.0) == doctest::Approx(M_PI));

    SUBCASE("rotation about z shifts azimuth and keeps radius") {
        const auto cloud = random_surface_cloud(200, 2);
        const auto a = compute_point_features(cloud);
        const double theta = 0.8;
        const RigidTransform rz(Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix(), Vec3(1, 2, 3));
        const auto b = compute_point_features(transformed(cloud, rz));
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            CHECK(std::abs(a.points[i].radius - b.points[i].radius) < 1e-9);
            if (a.points[i].radius < 1e-6) continue;
            const double d = std::remainder(b.points[i].azimuth - a.points[i].azimuth - theta, 2 * M_PI);
            CHECK(std::abs(d) < 1e-9);
        }
    }
    SUBCASE("unit-sphere scaling") {
        const auto s = compute_point_features(random_surface_cloud(100, 4), FeatureScaling::UnitSphere);
        double rmax = 0;
        for (const auto& p : s.points) rmax = std::max(rmax, p.position.norm());
        CHECK(rmax == doctest::Approx(1.0));
    }
}

TEST_CASE("fpfh matches brute force reference") {
    const auto cloud = random_surface_cloud(50, 9);
    const double radius = 5.6;
    const auto got = compute_fpfh(cloud, radius);
    const auto want = brute_fpfh(cloud, radius);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int b = 0; b < kFpfhDims; ++b) CHECK(std::abs(got.histograms[i][b] - want[i][b]) < 1e-6);
}

TEST_CASE("fpfh properties") {
    CHECK(7 * 0.8 == doctest::Approx(5.6));
    const auto cloud = random_surface_cloud(300, 3);
    const auto a = compute_fpfh(cloud, 2.5);
    for (const auto& h : a.histograms)
        for (int s = 0; s < 3; ++s) {
            double sum = 0.0;
            for (int b = 0; b < kFpfhBins; ++b) {
                CHECK(h[s * kFpfhBins + b] >= 0.0);
                sum += h[s * kFpfhBins + b];
            }
            CHECK(sum == doctest::Approx(100.0).epsilon(1e-8));
        }

    SUBCASE("rigid invariance") {
        std::mt19937 rng(1);
        std::uniform_real_distribution<double> u(-1, 1);
        for (int t = 0; t < 3; ++t) {
            const Mat3 r = Eigen::AngleAxisd(3 * u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
            const auto b = compute_fpfh(transformed(cloud, RigidTransform(r, Vec3(u(rng), u(rng), u(rng)) * 20)), 2.5);
            for (std::size_t i = 0; i < cloud.size(); ++i)
                for (int k = 0; k < kFpfhDims; ++k) CHECK(std::abs(a.histograms[i][k] - b.histograms[i][k]) < 1e-5);
        }
    }
    SUBCASE("coplanar identical normals concentrate mass") {
        PointCloud plane;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                plane.points.emplace_back(0.5 * i, 0.5 * j, 0.0);
                plane.normals.push_back(Vec3::UnitZ());
            }
        const auto h = compute_fpfh(plane, 1.2);
        for (const auto& x : h.histograms) {
            CHECK(*std::max_element(x.begin(), x.begin() + 11) == doctest::Approx(100.0));
            CHECK(*std::max_element(x.begin() + 11, x.begin() + 22) == doctest::Approx(100.0));
            CHECK(*std::max_element(x.begin() + 22, x.end()) == doctest::Approx(100.0));
        }
    }
    SUBCASE("isolated point gets zero histogram and a warning") {
        PointCloud c = cloud;
        c.points.push_back(Vec3(100, 100, 100));
        c.normals.push_back(Vec3::UnitZ());
        Warnings w;
        const auto h = compute_fpfh(c, 2.5, &w);
        CHECK(h.points_without_neighbors == 1);
        CHECK(!w.empty());
        for (double v : h.histograms.back()) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(compute_fpfh(cloud, 0.0), Error);
}
