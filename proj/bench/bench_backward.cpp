#include "immc/generator.hpp"
#include "immc/sampler.hpp"

#include <benchmark/benchmark.h>

using namespace immc;

namespace {

const ConcatenatedStream& mid_stream()
{
    static const ConcatenatedStream stream =
        concatenate(generate_corpus(default_spec(TestCaseId::III, SizePreset::mid, 1)).corpus);
    return stream;
}

ModelParams prior(std::size_t L)
{
    Hyperparams h;
    h.L = L;
    Rng rng(2);
    return init_priors(h, mid_stream().num_codes(), rng);
}

void BM_backward_pass(benchmark::State& state)
{
    Hyperparams h;
    h.L = static_cast<std::size_t>(state.range(0));
    const ModelParams p = prior(h.L);
    for (auto _ : state)
        benchmark::DoNotOptimize(backward_pass(mid_stream(), p, h));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mid_stream().size()));
}

void BM_backward_pass_reference(benchmark::State& state)
{
    Hyperparams h;
    h.L = static_cast<std::size_t>(state.range(0));
    const ModelParams p = prior(h.L);
    for (auto _ : state)
        benchmark::DoNotOptimize(backward_pass_reference(mid_stream(), p, h));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mid_stream().size()));
}

void BM_gibbs_iteration(benchmark::State& state)
{
    Hyperparams h;
    h.L = static_cast<std::size_t>(state.range(0));
    const ModelParams p = prior(h.L);
    Rng rng(3);
    for (auto _ : state)
        benchmark::DoNotOptimize(gibbs_iteration(mid_stream(), p, h, rng));
}

}  // namespace

BENCHMARK(BM_backward_pass)->Arg(5)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_backward_pass_reference)->Arg(5)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gibbs_iteration)->Arg(20)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
