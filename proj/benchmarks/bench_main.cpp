#include <benchmark/benchmark.h>

#include "stalign/embedding.hpp"
#include "stalign/harness.hpp"
#include "stalign/matching.hpp"
#include "stalign/pipeline.hpp"
#include "stalign/rng.hpp"

using namespace stalign;

namespace {

PointSet2D points(Rng& rng, int n) {
  PointSet2D pts;
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20)});
  return pts;
}

DetectionFrame frame_of(const PointSet2D& pts) {
  DetectionFrame f;
  f.agent_id = "a";
  for (size_t i = 0; i < pts.size(); ++i)
    f.boxes.push_back({pts[i].x, pts[i].y, 0.0, static_cast<int>(i)});
  return f;
}

void BM_rigid_fit(benchmark::State& state) {
  Rng rng(1);
  const PointSet2D src = points(rng, static_cast<int>(state.range(0)));
  const RigidTransform2D t{0.8, 3.0, -2.0};
  const PointSet2D dst = apply_transform(t, src);
  for (auto _ : state) benchmark::DoNotOptimize(rigid_fit(src, dst));
}
BENCHMARK(BM_rigid_fit)->Arg(8)->Arg(64);

void BM_build_graph(benchmark::State& state) {
  Rng rng(2);
  const DetectionFrame f = frame_of(points(rng, static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(f));
}
BENCHMARK(BM_build_graph)->Arg(12)->Arg(32);

void BM_subgraph_search(benchmark::State& state) {
  Rng rng(3);
  const int n = static_cast<int>(state.range(0));
  const PointSet2D base = points(rng, n);
  const SalientObjectGraph a = build_graph(frame_of(base));
  PointSet2D moved = apply_transform({0.5, 4.0, 1.0}, base);
  for (Point2D& p : moved) {
    p.x += rng.normal(0.1);
    p.y += rng.normal(0.1);
  }
  const SalientObjectGraph b = build_graph(frame_of(moved));
  MatchConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(find_common_subgraph(a, b, cfg));
}
BENCHMARK(BM_subgraph_search)->Arg(8)->Arg(12)->Arg(16);

void BM_embed_edges(benchmark::State& state) {
  Rng rng(4);
  const SalientObjectGraph g = build_graph(frame_of(points(rng, static_cast<int>(state.range(0)))));
  const EmbeddingParams params = EmbeddingParams::init(32, 2, 8, 16, 1.0, 4);
  for (auto _ : state) benchmark::DoNotOptimize(embed_edges(params, g));
}
BENCHMARK(BM_embed_edges)->Arg(8)->Arg(16);

void BM_align_frame(benchmark::State& state) {
  ScenarioConfig scfg;
  scfg.seed = 5;
  scfg.num_objects = 12;
  scfg.world_extent = 40;
  scfg.fov_radius = 50;
  scfg.duration = 16;
  const Scenario sc = generate_scenario(scfg);
  PipelineConfig cfg;
  GraphBuffer buffer(cfg.buffer_length + 1, scfg.sample_interval_tau);
  const int rf = scfg.duration - 1;
  for (int k = rf - cfg.buffer_length; k <= rf; ++k)
    buffer.push(sc.frames[0][k].local_time_ms, featured_graph(sc.frames[0][k], cfg, nullptr),
                k == rf - cfg.buffer_length ? RigidTransform2D::identity()
                                            : sc.odometry[0].increments[k - 1]);
  for (auto _ : state)
    benchmark::DoNotOptimize(align_frame(buffer, sc.frames[1][rf - 2], 200.0, cfg));
}
BENCHMARK(BM_align_frame);

}  // namespace

BENCHMARK_MAIN();
