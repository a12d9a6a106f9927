// Serial vs OpenMP throughput for the hot kernels: the Monte Carlo IoU
// oracle and full-report scoring on generated data.

#include <benchmark/benchmark.h>

#include <random>

#include "vql/data.hpp"
#include "vql/geometry.hpp"
#include "vql/metrics.hpp"

namespace {

vql::Box9 random_box(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0), s(0.3, 2.0),
      a(-M_PI, M_PI);
  return vql::Box9({c(rng), c(rng), c(rng)}, {s(rng), s(rng), s(rng)},
                   {a(rng), a(rng), a(rng)});
}

void BM_McOracle(benchmark::State &state) {
  std::mt19937_64 rng(5);
  const vql::Box9 a = random_box(rng), b = random_box(rng);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(vql::mc_iou_oracle(a, b, 1000000, 7, workers));
  }
}
BENCHMARK(BM_McOracle)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Score(benchmark::State &state) {
  vql::GeneratorConfig cfg;
  cfg.num_sequences = 32;
  cfg.noise.center_jitter = 0.1;
  const auto data = vql::generate_synthetic(123, cfg);
  vql::TrackSet gts;
  for (const auto &a : data.annotations) gts[a.sequence_id] = a.to_gt_track();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        vql::score(data.degraded_predictions, gts, workers));
  }
}
BENCHMARK(BM_Score)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ExactIou(benchmark::State &state) {
  std::mt19937_64 rng(9);
  std::vector<std::pair<vql::Box9, vql::Box9>> pairs;
  for (int i = 0; i < 1000; ++i)
    pairs.emplace_back(random_box(rng), random_box(rng));
  for (auto _ : state) {
    double acc = 0;
    for (const auto &[a, b] : pairs) acc += vql::iou3d(a, b);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_ExactIou)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
