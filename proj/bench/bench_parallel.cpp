// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "msplit/evaluation.hpp"
#include "msplit/multisplit.hpp"

using namespace msplit;

namespace {

Dataset bench_data(int n, int p) {
    SimulationConfig c;
    c.n = n;
    c.p = p;
    c.s = 5;
    c.snr = 4;
    return simulate_rep(c, RngSpec{123}).data;
}

MultiSplitOptions options(benchmark::State& state) {
    MultiSplitOptions o;
    o.B = 50;
    o.screen.kind = static_cast<ScreenerKind>(state.range(0));
    return o;
}

void BM_MatrixSerial(benchmark::State& state) {
    const Dataset d = bench_data(100, 200);
    const MultiSplitOptions o = options(state);
    for (auto _ : state) benchmark::DoNotOptimize(multi_split_pvalues_serial(d, o, RngSpec{1}).values.sum());
    state.SetLabel(to_string(o.screen.kind));
}

void BM_MatrixParallel(benchmark::State& state) {
    const Dataset d = bench_data(100, 200);
    const MultiSplitOptions o = options(state);
    for (auto _ : state) benchmark::DoNotOptimize(multi_split_pvalues(d, o, RngSpec{1}).values.sum());
    state.SetLabel(to_string(o.screen.kind));
}

SimulationConfig experiment() {
    SimulationConfig c;
    c.reps = 8;
    c.B = 20;
    c.screen.kind = ScreenerKind::Fixed;
    c.methods = {Method::MultiFwer, Method::MultiFdr, Method::SingleSplit};
    return c;
}

void BM_ExperimentSerial(benchmark::State& state) {
    const SimulationConfig c = experiment();
    for (auto _ : state) benchmark::DoNotOptimize(run_experiment_serial(c, RngSpec{2}).records.size());
}

void BM_ExperimentParallel(benchmark::State& state) {
    const SimulationConfig c = experiment();
    for (auto _ : state) benchmark::DoNotOptimize(run_experiment(c, RngSpec{2}).records.size());
}

} // namespace

BENCHMARK(BM_MatrixSerial)->Arg(static_cast<int>(ScreenerKind::Fixed))->Arg(static_cast<int>(ScreenerKind::Adap))
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatrixParallel)->Arg(static_cast<int>(ScreenerKind::Fixed))->Arg(static_cast<int>(ScreenerKind::Adap))
    ->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ExperimentSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExperimentParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
