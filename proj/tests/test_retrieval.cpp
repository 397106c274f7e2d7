#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "crownfit/retrieval.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;

namespace {

Embedding random_embedding(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Embedding e;
    e.values.resize(kEmbeddingDim);
    for (auto& v : e.values) v = g(rng);
    return e;
}

Embedding perturbed(const Embedding& base, double level, std::mt19937_64& rng) {
    Embedding e = random_embedding(rng);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) e.values[i] = base.values[i] + level * e.values[i];
    return e;
}

Embedding axis(std::size_t i, double scale = 1.0) {
    Embedding e;
    e.values.assign(kEmbeddingDim, 0.0);
    e.values[i] = scale;
    return e;
}

// Straight reimplementation of the scoring rule used as an oracle.
std::pair<std::string, double> brute_force_context(const ContextQuery& q, const EmbeddingIndex& index) {
    std::string best;
    double best_score = -2.0;
    for (const auto& [jaw, teeth] : index.jaws()) {
        if (!teeth.count(q.target_fdi)) continue;
        std::vector<double> s;
        for (const auto& [code, e] : q.slots)
            if (teeth.count(code)) s.push_back(cosine(e, teeth.at(code)));
        if (s.empty() || 2 * s.size() < q.slots.size()) continue;
        double m = 0;
        for (double v : s) m += v;
        m /= double(s.size());
        if (m > best_score || (m == best_score && jaw < best)) best = jaw, best_score = m;
    }
    return {best, best_score};
}

}  // namespace

TEST_CASE("cosine") {
    std::mt19937_64 rng(1);
    const auto a = random_embedding(rng);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine(axis(0), axis(1)) == 0.0);
    Embedding p = axis(0), q = axis(0);
    p.values[0] = 1, p.values[1] = 2, p.values[2] = 2;
    q.values[0] = 2, q.values[1] = 1, q.values[2] = 2;
    CHECK(cosine(p, q) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
    Embedding zero;
    zero.values.assign(kEmbeddingDim, 0.0);
    CHECK_THROWS_AS(cosine(a, zero), Error);
    CHECK_THROWS_AS(zero.validate(), Error);
    Embedding short_one;
    short_one.values = {1.0, 2.0};
    CHECK_THROWS_AS(cosine(a, short_one), Error);
    CHECK_THROWS_AS(short_one.validate(), Error);
}

TEST_CASE("index keys") {
    EmbeddingIndex index;
    index.add_tooth("jaw_a", 36, axis(0));
    CHECK_THROWS_AS(index.add_tooth("jaw_a", 36, axis(1)), Error);
    CHECK_THROWS_AS(index.add_tooth("jaw_a", 19, axis(1)), Error);
    index.add_crown("c1", axis(0));
    CHECK_THROWS_AS(index.add_crown("c1", axis(1)), Error);
}

TEST_CASE("context positions") {
    CHECK(context_positions(36) == std::vector<int>{35, 37, 26, 25, 27});
    CHECK(context_positions(11) == std::vector<int>{21, 12, 41, 31, 42});
    CHECK(context_positions(18) == std::vector<int>{17, 48, 47});
    CHECK_THROWS_AS(context_positions(19), Error);
}

TEST_CASE("context matching") {
    std::mt19937_64 rng(5);
    ContextQuery q;
    q.target_fdi = 36;
    for (int code : context_positions(36)) q.slots[code] = random_embedding(rng);
    const ContextQuery empty_query{36, {}};
    CHECK_THROWS_AS(empty_query.validate(), Error);
    auto bad = q;
    bad.slots[36] = axis(0);
    CHECK_THROWS_AS(bad.validate(), Error);

    SUBCASE("identical jaw") {
        EmbeddingIndex index;
        for (const auto& [code, e] : q.slots) index.add_tooth("twin", code, e);
        index.add_tooth("twin", 36, axis(3));
        for (const auto& [code, e] : q.slots) index.add_tooth("other", code, random_embedding(rng));
        index.add_tooth("other", 36, axis(4));
        const auto m = match_context(q, index);
        CHECK(m.jaw_id == "twin");
        CHECK(m.score == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(m.shared_slots == q.slots.size());
    }
    SUBCASE("least perturbed of ten, against brute force") {
        for (int trial = 0; trial < 20; ++trial) {
            EmbeddingIndex index;
            std::vector<int> order(10);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            for (int j = 0; j < 10; ++j) {
                const std::string id = "jaw_" + std::to_string(j);
                const double level = 0.2 + 0.3 * order[j];
                for (const auto& [code, e] : q.slots) index.add_tooth(id, code, perturbed(e, level, rng));
                index.add_tooth(id, 36, random_embedding(rng));
            }
            const auto m = match_context(q, index);
            const auto oracle = brute_force_context(q, index);
            CHECK(m.jaw_id == oracle.first);
            CHECK(m.score == oracle.second);
            const auto least = std::find(order.begin(), order.end(), 0) - order.begin();
            CHECK(m.jaw_id == "jaw_" + std::to_string(least));
        }
    }
    SUBCASE("ties and gating") {
        EmbeddingIndex index;
        for (const std::string id : {"b", "a", "c"}) {
            for (const auto& [code, e] : q.slots) index.add_tooth(id, code, e);
            index.add_tooth(id, 36, axis(0));
        }
        CHECK(match_context(q, index).jaw_id == "a");

        EmbeddingIndex sparse;
        sparse.add_tooth("few", 36, axis(0));
        sparse.add_tooth("few", 35, q.slots.at(35));
        sparse.add_tooth("few", 37, q.slots.at(37));
        CHECK_THROWS_AS(match_context(q, sparse), Error);
        try {
            match_context(q, sparse);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NoMatch);
        }
        sparse.add_tooth("few", 26, q.slots.at(26));  // 3 of 5 shared
        CHECK(match_context(q, sparse).jaw_id == "few");

        EmbeddingIndex no_target;
        for (const auto& [code, e] : q.slots) no_target.add_tooth("x", code, e);
        CHECK_THROWS_AS(match_context(q, no_target), Error);
    }
}

TEST_CASE("crown retrieval") {
    std::mt19937_64 rng(9);
    EmbeddingIndex index;
    CHECK_THROWS_AS(retrieve_crown(axis(0), index), Error);
    std::vector<Embedding> lib;
    for (int i = 0; i < 100; ++i) {
        lib.push_back(random_embedding(rng));
        char id[32];
        std::snprintf(id, sizeof id, "crown_%03d", i);
        index.add_crown(id, lib.back());
    }
    CHECK(retrieve_crown(lib[42], index).template_id == "crown_042");
    for (int trial = 0; trial < 50; ++trial) {
        const auto donor = random_embedding(rng);
        int best = 0;
        for (int i = 1; i < 100; ++i)
            if (cosine(donor, lib[i]) > cosine(donor, lib[best])) best = i;
        const auto m = retrieve_crown(donor, index);
        char id[32];
        std::snprintf(id, sizeof id, "crown_%03d", best);
        CHECK(m.template_id == id);
        // positive rescaling of everything keeps the argmax
        EmbeddingIndex scaled;
        std::uniform_real_distribution<double> s(0.01, 100.0);
        for (const auto& [k, e] : index.crowns()) {
            Embedding x = e;
            const double f = s(rng);
            for (auto& v : x.values) v *= f;
            scaled.add_crown(k, x);
        }
        Embedding d = donor;
        const double fd = s(rng);
        for (auto& v : d.values) v *= fd;
        CHECK(retrieve_crown(d, scaled).template_id == m.template_id);
    }

    EmbeddingIndex ortho;
    for (std::size_t i = 0; i < 10; ++i) ortho.add_crown("t" + std::to_string(i), axis(i, 1.0 + double(i)));
    CHECK(retrieve_crown(axis(7, 0.5), ortho).template_id == "t7");
    EmbeddingIndex tie;
    tie.add_crown("z", axis(0));
    tie.add_crown("m", axis(0, 3.0));
    CHECK(retrieve_crown(axis(0), tie).template_id == "m");
}

TEST_CASE("end-to-end retrieval picks the donor tooth") {
    std::mt19937_64 rng(3);
    EmbeddingIndex index;
    ContextQuery q;
    q.target_fdi = 46;
    for (int code : context_positions(46)) q.slots[code] = random_embedding(rng);
    for (int j = 0; j < 3; ++j) {
        const std::string id = "j" + std::to_string(j);
        for (const auto& [code, e] : q.slots) index.add_tooth(id, code, perturbed(e, 0.3 * (j + 1), rng));
        index.add_tooth(id, 46, axis(std::size_t(j)));
        index.add_crown("crown_for_" + id, axis(std::size_t(j)));
    }
    const auto r = retrieve(q, index);
    CHECK(r.context.jaw_id == "j0");
    CHECK(r.crown.template_id == "crown_for_j0");
}

TEST_CASE("shape embedding") {
    const auto arch_a = synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 1, 0.2));
    const auto arch_b = synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 2, 0.2));
    auto tooth = [](const synth::SyntheticArch& a, int code) {
        return submesh_by_label(a.mesh, fdi::tooth_class(code));
    };
    const auto m1 = shape_embedding(tooth(arch_a, 36));
    CHECK_NOTHROW(m1.validate());
    CHECK(shape_embedding(tooth(arch_a, 36)).values == m1.values);
    const auto m2 = shape_embedding(tooth(arch_b, 36));
    const auto inc = shape_embedding(tooth(arch_a, 31));
    CHECK(cosine(m1, m2) > cosine(m1, inc));
    for (int b = 0; b < 4; ++b) {
        double s = 0;
        for (int k = 0; k < 64; ++k) s += m1.values[std::size_t(b * 64 + k)];
        CHECK(s == doctest::Approx(1.0));
    }
    LabeledMesh tiny;
    tiny.vertices = {Vec3::Zero(), Vec3::UnitX()};
    tiny.vertex_normals = {Vec3::UnitZ(), Vec3::UnitZ()};
    CHECK_THROWS_AS(shape_embedding(tiny), Error);
}

TEST_CASE("embedding store round trip") {
    std::mt19937_64 rng(11);
    EmbeddingIndex index;
    index.add_tooth("jaw one", 36, random_embedding(rng));
    index.add_tooth("jaw one", 37, random_embedding(rng));
    index.add_tooth("jaw_2", 11, random_embedding(rng));
    index.add_crown("molar_a", random_embedding(rng));
    const auto dir = std::filesystem::temp_directory_path() / "crownfit_store_test";
    std::filesystem::create_directories(dir);
    save_embedding_store(index, dir / "store.bin");
    const auto back = load_embedding_store(dir / "store.bin");
    REQUIRE(back.jaws().size() == 2);
    REQUIRE(back.crowns().size() == 1);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i)
        CHECK(back.jaws().at("jaw one").at(37).values[i] == double(float(index.jaws().at("jaw one").at(37).values[i])));
    CHECK_THROWS_AS(load_embedding_store(dir / "missing.bin"), Error);
    std::filesystem::remove(dir / "store.bin.json");
    CHECK_THROWS_AS(load_embedding_store(dir / "store.bin"), Error);
    std::filesystem::remove_all(dir);
}
