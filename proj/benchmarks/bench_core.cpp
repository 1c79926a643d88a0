#include <benchmark/benchmark.h>

#include <vector>

#include "fkm/assoc.hpp"
#include "fkm/fourier.hpp"
#include "fkm/lloyd.hpp"
#include "fkm/spline.hpp"
#include "fkm/tracking.hpp"

using namespace fkm;

static void BM_SplineFit(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  CounterRng rng(1);
  std::vector<WeightedPoint> pts(m);
  for (auto& p : pts) p = {10.0 * rng.uniform(), rng.uniform(), 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(fit_smoothing_spline(pts, 1.0, m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SplineFit)->RangeMultiplier(10)->Range(10, 100000)->Complexity();

static void BM_AssociationMultistart(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GenModel model = GenModel::figure1();
  CounterRng rng(2);
  const auto data = sample_dataset(model, n, rng);
  const AssociationProblem problem(1.0);
  LloydConfig cfg;
  cfg.k = model.k();
  cfg.seed = 3;
  for (auto _ : state)
    benchmark::DoNotOptimize(multistart(problem, std::span<const Observation2D>(data.observations), cfg, 10));
}
BENCHMARK(BM_AssociationMultistart)->Arg(300)->Arg(1200)->Unit(benchmark::kMillisecond);

static void BM_Dft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const DftMethod method = state.range(1) == 0 ? DftMethod::direct : DftMethod::fast;
  CounterRng rng(4);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(dft(x, method));
  state.SetLabel(state.range(1) == 0 ? "direct" : "fast");
}
BENCHMARK(BM_Dft)->ArgsProduct({{101, 1001, 10001}, {0, 1}});

static void BM_FitTrack(benchmark::State& state) {
  const SensorNet net = SensorNet::reference(static_cast<double>(state.range(0)));
  const auto tracks = reference_tracks();
  CounterRng rng(5);
  const PulseData data = generate_pulses(tracks, net, rng);
  std::vector<PulseObservation> cluster;
  for (std::size_t i = 0; i < data.observations.size(); ++i)
    if (data.labels[i] == 0) cluster.push_back(data.observations[i]);
  TrackFitOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(fit_track(cluster, net, opts, CounterRng(6)));
}
BENCHMARK(BM_FitTrack)->Arg(60)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
