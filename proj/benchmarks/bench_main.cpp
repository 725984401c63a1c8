#include <benchmark/benchmark.h>

#include "colm/codec.hpp"
#include "colm/error.hpp"
#include "colm/extract.hpp"
#include "colm/net.hpp"
#include "colm/pose.hpp"
#include "colm/rng.hpp"
#include "colm/synth.hpp"

namespace {

using namespace colm;

synth::ScenePair scene_pair(std::size_t objects) {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = objects;
    synth::PerturbConfig pc;
    pc.jitter = 0.05;
    pc.drop_rate = 0.1;
    return synth::make_pair(sc, pc, 1);
}

void BM_Forward(benchmark::State& state) {
    const auto pair = scene_pair(static_cast<std::size_t>(state.range(0)));
    const auto cfg = net::NetConfig::paper();
    const auto params = net::init_params(cfg, 1);
    for (auto _ : state) benchmark::DoNotOptimize(net::forward(pair.source, pair.target, params, cfg, 60));
}
BENCHMARK(BM_Forward)->Arg(30)->Arg(105)->Arg(238)->Unit(benchmark::kMillisecond);

void BM_StructureEmbedding(benchmark::State& state) {
    const auto pair = scene_pair(static_cast<std::size_t>(state.range(0)));
    const auto cfg = net::NetConfig::paper();
    for (auto _ : state) benchmark::DoNotOptimize(net::geometric_structure_embedding(pair.source.centroids(), cfg));
}
BENCHMARK(BM_StructureEmbedding)->Arg(105)->Arg(238)->Unit(benchmark::kMillisecond);

void BM_Ransac(benchmark::State& state) {
    const auto pair = scene_pair(105);
    const auto corr = synth::gt_correspondences(pair.source, pair.target, pair.t_gt, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ransac_register(corr, pair.source, pair.target, RansacConfig{}));
    }
}
BENCHMARK(BM_Ransac)->Unit(benchmark::kMillisecond);

void BM_Icp(benchmark::State& state) {
    const auto pair = scene_pair(105);
    const auto init = compose(RigidTransform::from_yaw(0.02, Vec3(0.3, -0.2, 0)), pair.t_gt);
    for (auto _ : state) benchmark::DoNotOptimize(icp_refine(pair.source, pair.target, init, IcpConfig{}));
}
BENCHMARK(BM_Icp)->Unit(benchmark::kMicrosecond);

void BM_Dbscan(benchmark::State& state) {
    Rng rng(3);
    std::vector<Vec3> points;
    const auto n = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 centre(static_cast<double>(rng.uniform_int(40)) * 3.0, static_cast<double>(rng.uniform_int(40)) * 3.0, 0);
        points.push_back(centre + Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.3);
    }
    for (auto _ : state) benchmark::DoNotOptimize(cluster_dbscan(points, 0.5, 5));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Dbscan)->Arg(2000)->Arg(24000)->Unit(benchmark::kMillisecond);

void BM_EncodeDecode(benchmark::State& state) {
    const auto pair = scene_pair(238);
    for (auto _ : state) {
        const auto bytes = codec::encode_scan(pair.source);
        benchmark::DoNotOptimize(codec::decode_scan(bytes));
    }
}
BENCHMARK(BM_EncodeDecode)->Unit(benchmark::kMicrosecond);

}  // namespace
