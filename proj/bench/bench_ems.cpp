#include <benchmark/benchmark.h>

#include <vector>

#include "dpmv3/ems.hpp"

namespace {

dpmv3::ModelSpec mixture()
{
    dpmv3::GaussianMixture m;
    m.weights = {0.3, 0.7};
    m.means = {dpmv3::Vec::LinSpaced(4, 1.0, -0.5), dpmv3::Vec::LinSpaced(4, -1.0, 0.6)};
    m.stds = {0.4, 0.6};
    return dpmv3::ModelSpec(m);
}

void run(benchmark::State& state, dpmv3::Execution execution)
{
    const auto model = mixture();
    const auto sched = dpmv3::Schedule::vp_linear();
    dpmv3::EmsConfig cfg;
    cfg.num_intervals = static_cast<std::size_t>(state.range(0));
    cfg.num_datapoints = static_cast<std::size_t>(state.range(1));
    cfg.lam_min = sched.lambda_of_t(1.0);
    cfg.lam_max = sched.lambda_of_t(1e-3);
    cfg.execution = execution;
    for (auto _ : state)
        benchmark::DoNotOptimize(dpmv3::estimate_table(model, sched, cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_EmsSerial(benchmark::State& state)
{
    run(state, dpmv3::Execution::Serial);
}

void BM_EmsParallel(benchmark::State& state)
{
    run(state, dpmv3::Execution::Parallel);
}

} // namespace

BENCHMARK(BM_EmsSerial)->Args({120, 256})->Args({480, 1024})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmsParallel)->Args({120, 256})->Args({480, 1024})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
