// Serial reference against the OpenMP path for each parallel kernel.
#include <benchmark/benchmark.h>

#include "bharp/harness.hpp"

using namespace bharp;

namespace {

const ChainDraws& s6_draws() {
  static const ChainDraws draws = [] {
    const auto sc = builtin_scenario("S6");
    ChainConfig cfg;
    cfg.n_iter = 6000;
    cfg.n_burnin = 1000;
    return run_chain(generate_fixed_dataset(sc, 7), Hyperparameters{}, cfg, MoveConfig{});
  }();
  return draws;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::kParallel : Exec::kSerial; }

void BM_Coclustering(benchmark::State& st) {
  const auto& d = s6_draws();
  for (auto _ : st) benchmark::DoNotOptimize(coclustering(d, 0, exec_of(st)));
}

void BM_PointEstimates(benchmark::State& st) {
  const ThetaSamples t = theta_samples(s6_draws());
  for (auto _ : st) benchmark::DoNotOptimize(point_estimates(t, exec_of(st)));
}

void BM_SummarizePosterior(benchmark::State& st) {
  const auto& d = s6_draws();
  for (auto _ : st) benchmark::DoNotOptimize(summarize_posterior(d, exec_of(st)));
}

void BM_SimulationReplicates(benchmark::State& st) {
  RunConfig c;
  c.scenario = "S3";
  c.methods = {Method::kBharp};
  c.n_replicates = 8;
  c.chain.n_iter = 1000;
  c.chain.n_burnin = 500;
  c.finalize();
  for (auto _ : st) benchmark::DoNotOptimize(run_simulation(c, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_Coclustering)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PointEstimates)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SummarizePosterior)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulationReplicates)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
