#include <benchmark/benchmark.h>

#include "rmtcorr/lsd.hpp"

namespace {

void BM_solve_stieltjes(benchmark::State& state) {
    const rmtcorr::AtomicMeasure h({1.0, 3.0}, {0.5, 0.5});
    for (auto _ : state) {
        auto s = rmtcorr::solve_stieltjes(0.5, h, {2.0, 0.01});
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_solve_stieltjes);

void BM_law_from_stieltjes_mp(benchmark::State& state) {
    const auto h = rmtcorr::AtomicMeasure::dirac(1.0);
    const auto grid = rmtcorr::default_grid(rmtcorr::LawKind::mp, 0.5, h,
                                            static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto law = rmtcorr::law_from_stieltjes(rmtcorr::LawKind::mp, 0.5, h, grid);
        benchmark::DoNotOptimize(law.total_mass);
    }
}
BENCHMARK(BM_law_from_stieltjes_mp)->Arg(512)->Arg(2001)->Unit(benchmark::kMillisecond);

void BM_law_general(benchmark::State& state) {
    const rmtcorr::AtomicMeasure h({1.0, 3.0}, {0.5, 0.5});
    const auto grid = rmtcorr::default_grid(rmtcorr::LawKind::general, 0.5, h, 256);
    for (auto _ : state) {
        auto law = rmtcorr::law_from_stieltjes(rmtcorr::LawKind::general, 0.5, h, grid);
        benchmark::DoNotOptimize(law.total_mass);
    }
}
BENCHMARK(BM_law_general)->Unit(benchmark::kMillisecond);

} // namespace
