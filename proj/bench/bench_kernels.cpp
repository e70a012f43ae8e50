// Serial vs OpenMP MVCE kernels.
//   bench_kernels --benchmark_filter=Fused
#include <benchmark/benchmark.h>

#include <vector>

#include "mbct/kernels.hpp"
#include "mbct/rng.hpp"

using namespace mbct;

namespace {

struct Inputs {
  kernels::Residuals residuals;
  std::vector<std::uint64_t> seeds;
};

Inputs make_inputs(std::size_t n, std::size_t divisions) {
  Rng rng(1);
  std::vector<double> cal(n), labels(n), weights(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    cal[i] = rng.uniform();
    labels[i] = rng.bernoulli(cal[i]) ? 1.0 : 0.0;
  }
  Inputs in{kernels::make_residuals(cal, labels, weights), {}};
  for (std::size_t d = 0; d < divisions; ++d) in.seeds.push_back(rng.next_u64());
  return in;
}

void run_fused(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = make_inputs(n, 100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::shuffled_division_mean_pce(in.residuals, n / 32, in.seeds, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * in.seeds.size()));
}

void BM_FusedSerial(benchmark::State& state) { run_fused(state, kernels::Exec::Serial); }
void BM_FusedParallel(benchmark::State& state) { run_fused(state, kernels::Exec::Parallel); }

void BM_Reference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = make_inputs(n, 100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::shuffled_division_mean_pce(in.residuals, n / 32, in.seeds));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * in.seeds.size()));
}

// Precomputed assignments reused across candidates, as in tree growth.
void run_materialized(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = make_inputs(n, 100);
  const kernels::ShuffledDivisions divs(n, n / 32, in.seeds, exec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::division_mean_pce(divs, in.residuals, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * in.seeds.size()));
}

void BM_MaterializedSerial(benchmark::State& state) { run_materialized(state, kernels::Exec::Serial); }
void BM_MaterializedParallel(benchmark::State& state) { run_materialized(state, kernels::Exec::Parallel); }

}  // namespace

BENCHMARK(BM_Reference)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FusedSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FusedParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaterializedSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaterializedParallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
