#include <benchmark/benchmark.h>

#include <cmath>

#include "rmtcorr/datagen.hpp"
#include "rmtcorr/estimators.hpp"

namespace {

void BM_moment_estimate(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int p = 64;
    rmtcorr::RandomStream rng(5);
    const rmtcorr::Matrix x = rmtcorr::sample_Z(rmtcorr::EntryLaw::gaussian(), p, n, rng);
    const std::vector<double> b(p, 1.0);
    for (auto _ : state) {
        double m = rmtcorr::moment_estimate(x, b, 4);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(BM_moment_estimate)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_reconstruct_spectrum(benchmark::State& state) {
    rmtcorr::MomentVector m;
    m.ell = 6;
    // exact power sums of {1.5 x2, 0.5 x2} scaled to p = 100
    const double lam[] = {1.5, 1.5, 0.5, 0.5};
    m.values.assign(6, 0.0);
    for (int k = 1; k <= 6; ++k) {
        double s = 0.0;
        for (double v : lam) s += std::pow(v, k);
        m.values[k - 1] = 25.0 * s;
    }
    for (auto _ : state) {
        auto est = rmtcorr::reconstruct_spectrum(m, 100);
        benchmark::DoNotOptimize(est.eigenvalues.data());
    }
}
BENCHMARK(BM_reconstruct_spectrum)->Unit(benchmark::kMillisecond);

} // namespace
