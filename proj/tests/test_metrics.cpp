#include <doctest.h>

#include <algorithm>
#include <random>

#include "crownfit/metrics.hpp"

using namespace crownfit;

namespace {

struct NaiveCounts {
    std::size_t tp, fp, fn;
};

NaiveCounts naive(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, std::uint8_t c) {
    NaiveCounts k{0, 0, 0};
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (i != j) continue;
            if (pred[i] == c && gt[j] == c) ++k.tp;
            if (pred[i] == c && gt[j] != c) ++k.fp;
            if (pred[i] != c && gt[j] == c) ++k.fn;
        }
    return k;
}

LabeledMesh two_squares() {
    // square A centred at the origin, square B centred at (3, 4, 0)
    LabeledMesh m;
    for (double ox : {0.0, 3.0}) {
        const double oy = ox == 0.0 ? 0.0 : 4.0;
        const auto b = std::uint32_t(m.vertices.size());
        m.vertices.insert(m.vertices.end(), {{ox - 1, oy - 1, 0}, {ox + 1, oy - 1, 0}, {ox + 1, oy + 1, 0}, {ox - 1, oy + 1, 0}});
        m.faces.push_back({b, b + 1, b + 2});
        m.faces.push_back({b, b + 2, b + 3});
    }
    m.face_labels = {1, 1, 2, 2};
    return m;
}

}  // namespace

TEST_CASE("confusion counts") {
    const std::vector<std::uint8_t> a = {0, 1, 2, 2, 1};
    const auto same = confusion(a, a);
    for (const auto& c : same.per_class) {
        CHECK(c.fp == 0);
        CHECK(c.fn == 0);
    }
    const std::vector<std::uint8_t> zeros(10, 0), ones(10, 1);
    const auto k = confusion(zeros, ones);
    CHECK(k.at(1).fn == 10);
    CHECK(k.at(0).fp == 10);
    CHECK_THROWS_AS(confusion(a, zeros), Error);
}

TEST_CASE("metrics match a naive reference on random label maps") {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> len(1, 60), lab(0, 5);
        const int n = len(rng);
        std::vector<std::uint8_t> pred(n), gt(n);
        for (int i = 0; i < n; ++i) pred[i] = std::uint8_t(lab(rng)), gt[i] = std::uint8_t(lab(rng));
        const auto k = confusion(pred, gt);
        for (std::uint8_t c = 0; c <= 5; ++c) {
            const auto r = naive(pred, gt, c);
            CHECK(k.at(c) == ClassCounts{r.tp, r.fp, r.fn});
            const auto d = dsc(k, c);
            if (2 * r.tp + r.fp + r.fn == 0) CHECK(!d.has_value());
            else CHECK(*d == 2.0 * double(r.tp) / double(2 * r.tp + r.fp + r.fn));
            // symmetry under swapping prediction and ground truth
            CHECK(dsc(confusion(gt, pred), c) == d);
        }
    }
}

TEST_CASE("hand examples") {
    CHECK(*dsc(ClassCounts{5, 0, 0}) == 1.0);
    CHECK(*dsc(ClassCounts{3, 1, 2}) == 6.0 / 9.0);
    CHECK(*dsc(ClassCounts{0, 4, 4}) == 0.0);
    CHECK(*precision(ClassCounts{3, 1, 2}) == 0.75);
    CHECK(*recall(ClassCounts{3, 1, 2}) == 0.6);
    CHECK(*precision(ClassCounts{0, 5, 0}) == 0.0);
    CHECK(!recall(ClassCounts{0, 5, 0}).has_value());
    CHECK(!dsc(ClassCounts{}).has_value());

    const std::vector<std::optional<double>> vals = {1.0, std::nullopt, 0.5};
    CHECK(*macro_average(vals) == 0.75);
    CHECK(!macro_average(std::vector<std::optional<double>>{std::nullopt}).has_value());
}

TEST_CASE("centroid error") {
    const auto m = two_squares();
    const std::vector<std::size_t> a = {0, 1}, b = {2, 3}, none;
    CHECK(centroid_error(a, a, m, 42.0).mm == 0.0);
    const auto e = centroid_error(b, a, m, 42.0);
    CHECK(e.mm == 5.0);
    CHECK(!e.miss);
    const auto miss = centroid_error(none, a, m, 42.0);
    CHECK(miss.mm == 42.0);
    CHECK(miss.miss);
    CHECK_THROWS_AS(centroid_error(a, none, m, 42.0), Error);

    const RigidTransform t(Eigen::AngleAxisd(1.1, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(5, -6, 7));
    CHECK(centroid_error(b, a, transformed(m, t), 42.0).mm == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("bootstrap") {
    const std::vector<double> same(20, 3.5);
    const auto c = bootstrap_ci(same, 1000, 1);
    CHECK(c.low == 3.5);
    CHECK(c.high == 3.5);
    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{1.0}), Error);

    std::vector<double> half(1000);
    for (std::size_t i = 0; i < half.size(); ++i) half[i] = double(i % 2);
    const auto h = bootstrap_ci(half, 10000, 77);
    CHECK(h.low >= 0.45);
    CHECK(h.high <= 0.55);

    // independent re-implementation of the documented scheme
    std::vector<double> data = half;
    std::sort(data.begin(), data.end());
    std::vector<double> means;
    std::seed_seq seq{std::uint32_t(77), std::uint32_t(0)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (std::uint64_t b = 0; b < 10000; ++b) {
        double s = 0;
        for (std::size_t i = 0; i < data.size(); ++i) s += data[pick(rng)];
        means.push_back(s / double(data.size()));
    }
    std::sort(means.begin(), means.end());
    auto pct = [&](double q) {
        const double pos = q * double(means.size() - 1);
        const auto lo = std::size_t(pos);
        return means[lo] + (pos - double(lo)) * (means[std::min(lo + 1, means.size() - 1)] - means[lo]);
    };
    CHECK(h.low == pct(0.025));
    CHECK(h.high == pct(0.975));

    // order invariance and determinism
    std::vector<double> shuffled = half;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(3));
    const auto s = bootstrap_ci(shuffled, 10000, 77);
    CHECK(s.low == h.low);
    CHECK(s.high == h.high);

    // small coverage study (the full one is an acceptance check)
    std::mt19937_64 study(99);
    std::normal_distribution<double> g(1.0, 1.0);
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> x(50);
        for (auto& v : x) v = g(study);
        const auto ci = bootstrap_ci(x, 2000, std::uint64_t(rep));
        covered += ci.low <= 1.0 && 1.0 <= ci.high;
    }
    CHECK(covered >= 85);
}

TEST_CASE("summary statistics") {
    const std::vector<double> v = {1, 2, 3};
    const auto s = summarize(v);
    CHECK(s.mean == 2.0);
    CHECK(*s.std == 1.0);
    CHECK(s.median == 2.0);
    CHECK(s.ci->low <= s.ci->high);
    const auto one = summarize(std::vector<double>{4.0});
    CHECK(!one.std.has_value());
    CHECK(one.mean == 4.0);
    CHECK(one.median == 4.0);
    CHECK(summarize(std::vector<double>{4, 1, 3, 2}).median == 2.5);
    const std::vector<double> many(41, 1.0);
    CHECK(summarize(many, 2).miss_rate == doctest::Approx(0.0488).epsilon(1e-3));
    CHECK(summarize(many, 2).miss_rate == 2.0 / 41.0);
    CHECK_THROWS_AS(summarize(std::vector<double>{}), Error);

    const auto j = to_json(one);
    CHECK(j["std"].is_null());
    CHECK(j["mean"] == 4.0);
}

TEST_CASE("scan evaluation") {
    const auto m = two_squares();
    const std::vector<std::uint8_t> gt = {1, 1, 2, 2}, pred = {1, 1, 1, 2};
    const auto e = evaluate_scan(pred, gt, m, 3);
    CHECK(!e.dsc[0].has_value());
    CHECK(*e.dsc[1] == 2.0 * 2 / (2 * 2 + 1));
    CHECK(*e.macro_dsc == (*e.dsc[1] + *e.dsc[2]) / 2);
    CHECK(e.centroid_errors.size() == 2);
    const auto j = to_json(e);
    CHECK(j["schema_version"] == kMetricsSchemaVersion);
    CHECK(j["dsc"][0].is_null());
}
