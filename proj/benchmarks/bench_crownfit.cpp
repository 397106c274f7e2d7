// Timing for the hot paths: fine registration, graph-cut refinement,
// bootstrap intervals, crown retrieval and crown fitting.

#include <benchmark/benchmark.h>

#include <random>

#include "crownfit/fitting.hpp"
#include "crownfit/label_refine.hpp"
#include "crownfit/metrics.hpp"
#include "crownfit/registration.hpp"
#include "crownfit/retrieval.hpp"
#include "crownfit/synth.hpp"

using namespace crownfit;

namespace {

const synth::SyntheticArch& arch() {
    static const auto a = synth::generate_arch(synth::arch_spec_for_class(ScanClass::FullLower, Jaw::Lower, 0, 0.3));
    return a;
}

void BM_FineRegister(benchmark::State& state) {
    const PointCloud target = voxel_downsample(oriented_cloud(arch().mesh), 0.8);
    const RigidTransform pose(Eigen::AngleAxisd(0.09, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(1.2, -0.8, 1.0));
    const PointCloud source = transformed(target, pose);
    const RegistrationParams params;
    for (auto _ : state) benchmark::DoNotOptimize(fine_register(source, target, RigidTransform(), params));
    state.counters["points"] = double(target.points.size());
}
BENCHMARK(BM_FineRegister)->Unit(benchmark::kMillisecond);

void BM_GraphCut(benchmark::State& state) {
    const auto& m = arch().mesh;
    const auto probs = corrupt_ground_truth(m, {.island_rate = 0.002, .seed = 4});
    for (auto _ : state) benchmark::DoNotOptimize(graphcut_refine(m, probs));
    state.counters["faces"] = double(m.num_faces());
}
BENCHMARK(BM_GraphCut)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.9, 0.05);
    std::vector<double> xs(std::size_t(state.range(0)));
    for (auto& x : xs) x = g(rng);
    for (auto _ : state) benchmark::DoNotOptimize(bootstrap_ci(xs, 10000, 7));
}
BENCHMARK(BM_Bootstrap)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_RetrieveCrown(benchmark::State& state) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    auto draw = [&] {
        Embedding e;
        e.values.resize(kEmbeddingDim);
        for (auto& v : e.values) v = g(rng);
        return e;
    };
    EmbeddingIndex index;
    for (int i = 0; i < state.range(0); ++i) index.add_crown("c" + std::to_string(i), draw());
    const Embedding donor = draw();
    for (auto _ : state) benchmark::DoNotOptimize(retrieve_crown(donor, index));
}
BENCHMARK(BM_RetrieveCrown)->Arg(100)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_FitCrown(benchmark::State& state) {
    const auto c = synth::generate_fitting_case(900, true);
    const FittingParams params;
    for (auto _ : state) benchmark::DoNotOptimize(fit_crown(c.crown, c.neighbors, &c.opposing, c.fdi, params));
}
BENCHMARK(BM_FitCrown)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
