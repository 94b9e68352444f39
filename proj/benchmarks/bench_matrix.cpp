#include <benchmark/benchmark.h>

#include "rmtcorr/matrix.hpp"
#include "rmtcorr/random.hpp"

namespace {

rmtcorr::SymmetricMatrix random_symmetric(int p, uint64_t seed) {
    rmtcorr::RandomStream rng(seed);
    rmtcorr::SymmetricMatrix m(p);
    for (int i = 0; i < p; ++i)
        for (int j = i; j < p; ++j) m.set(i, j, rng.next_gaussian());
    return m;
}

void BM_sym_eigen(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const auto m = random_symmetric(p, 42);
    for (auto _ : state) {
        auto ed = rmtcorr::sym_eigen(m);
        benchmark::DoNotOptimize(ed.eigenvalues.data());
    }
}
BENCHMARK(BM_sym_eigen)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_spectral_norm(benchmark::State& state) {
    const int p = static_cast<int>(state.range(0));
    const auto m = random_symmetric(p, 43);
    for (auto _ : state) {
        double v = rmtcorr::spectral_norm(m);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_spectral_norm)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
