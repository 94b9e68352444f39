#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "rmtcorr/datagen.hpp"
#include "rmtcorr/estimators.hpp"
#include "rmtcorr/matrix.hpp"

using namespace rmtcorr;

namespace {

SymmetricMatrix worked_3x3() {
    SymmetricMatrix m(3);
    m.set(0, 0, 1.0);
    m.set(0, 1, 2.0);
    m.set(0, 2, 3.0);
    m.set(1, 1, 4.0);
    m.set(1, 2, 5.0);
    m.set(2, 2, 6.0);
    return m;
}

SymmetricMatrix random_gram(int n, RandomStream& rng) {
    SymmetricMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) m.set(i, j, 2.0 * rng.next_uniform() - 1.0);
    return m;
}

// Exhaustive 2-atom moment matching on the reconstruction grid: the
// independent oracle for the 4-point spectrum case.
struct TwoAtomFit {
    double lo, hi, w_hi;
    double err;
};

TwoAtomFit two_atom_bruteforce(const std::vector<double>& mu, double grid_hi, double res) {
    TwoAtomFit best{0, 0, 0, 1e300};
    const int count = static_cast<int>(grid_hi / res + 0.5) + 1;
    for (int ia = 0; ia < count; ++ia) {
        for (int ib = ia; ib < count; ++ib) {
            const double a = ia * res;
            const double b = ib * res;
            for (int iw = 0; iw <= 100; ++iw) {
                const double w = iw / 100.0; // weight on b
                double err = 0.0;
                for (size_t k = 1; k < mu.size(); ++k) {
                    const double fit = (1.0 - w) * std::pow(a, k) + w * std::pow(b, k);
                    err = std::max(err, std::abs(fit - mu[k]));
                }
                if (err < best.err) best = {a, b, w, err};
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("default threshold arithmetic") {
    CHECK(default_threshold(100, 100, 2.1) == doctest::Approx(0.45069).epsilon(1e-4));
    // quadrupling n halves the threshold
    CHECK(default_threshold(100, 400, 2.1) ==
          doctest::Approx(0.5 * default_threshold(100, 100, 2.1)));
    // at ln p = 2, n = 4 the rule evaluates to 2.1 sqrt(2/4)
    CHECK(2.1 * std::sqrt(std::log(std::exp(2.0)) / 4.0) == doctest::Approx(1.4849).epsilon(1e-4));
    CHECK_THROWS_AS(default_threshold(1, 10, 2.1), std::invalid_argument);
    CHECK(ThresholdRule::from_dims(100, 100, 1.5).m_below_theory);
    CHECK(!ThresholdRule::from_dims(100, 100, 2.1).m_below_theory);
}

TEST_CASE("threshold_estimate") {
    const ThresholdRule rule{2.1, 0.45, false};
    SUBCASE("identity passes through") {
        const SymmetricMatrix r = threshold_estimate(SymmetricMatrix::identity(4), rule);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(r(i, j) == (i == j ? 1.0 : 0.0));
    }
    SUBCASE("small off-diagonals vanish, large survive, diagonal kept") {
        SymmetricMatrix m(3);
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
        m.set(2, 2, 0.2); // diagonal below t_p must survive
        m.set(0, 1, 0.6);
        m.set(0, 2, 0.44);
        m.set(1, 2, -0.1);
        const SymmetricMatrix r = threshold_estimate(m, rule);
        CHECK(r(0, 1) == 0.6);
        CHECK(r(0, 2) == 0.0);
        CHECK(r(1, 2) == 0.0);
        CHECK(r(2, 2) == 0.2);
    }
    SUBCASE("idempotence") {
        RandomStream rng(6);
        const SymmetricMatrix m = random_gram(8, rng);
        const SymmetricMatrix once = threshold_estimate(m, rule);
        const SymmetricMatrix twice = threshold_estimate(once, rule);
        CHECK(once.packed() == twice.packed());
    }
}

TEST_CASE("path_product hand cases") {
    const SymmetricMatrix m = worked_3x3();
    const std::array<int, 1> self = {1};
    CHECK(path_product(m, self) == doctest::Approx(4.0)); // M_11 self-loop
    const std::array<int, 2> pair = {0, 1};
    CHECK(path_product(m, pair) == doctest::Approx(4.0)); // M_01 * M_10 = 2*2
    const std::array<int, 3> tri = {0, 1, 2};
    CHECK(path_product(m, tri) == doctest::Approx(30.0)); // 2*5*3
    const std::array<int, 2> bad = {0, 3};
    CHECK_THROWS_AS(path_product(m, bad), std::invalid_argument);
}

TEST_CASE("increasing path average by enumeration") {
    const SymmetricMatrix m = worked_3x3();
    // increasing 2-paths: (0,1), (0,2), (1,2) -> (4 + 9 + 25)/3
    CHECK(increasing_path_average_bruteforce(m, 2) == doctest::Approx(38.0 / 3.0));
    CHECK(increasing_path_average_bruteforce(m, 1) == doctest::Approx(m.trace() / 3.0));
    CHECK(increasing_path_average_bruteforce(m, 3) == doctest::Approx(30.0)); // C(3,3) = 1
    CHECK_THROWS_AS(increasing_path_average_bruteforce(SymmetricMatrix::identity(15), 2),
                    std::invalid_argument);
}

TEST_CASE("moment_from_gram reproduces the worked case via tr(G M)") {
    const SymmetricMatrix m = worked_3x3();
    // G = strict upper of M; diag(G M) = (13, 25, 0); tr / C(3,2) = 38/3
    CHECK(moment_from_gram(m, 2) == doctest::Approx(38.0 / 3.0).epsilon(1e-14));
    CHECK(moment_from_gram(m, 1) == doctest::Approx(m.trace() / 3.0));
    CHECK_THROWS_AS(moment_from_gram(m, 4), std::invalid_argument); // k > n
    CHECK_THROWS_AS(moment_from_gram(SymmetricMatrix::identity(20), 9), std::invalid_argument);
}

TEST_CASE("path identity: trace formula equals enumeration on random grams") {
    RandomStream rng(33);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_u64() % 8); // 3..10
        const SymmetricMatrix m = random_gram(n, rng);
        for (int k = 1; k <= std::min(4, n); ++k) {
            const double brute = increasing_path_average_bruteforce(m, k);
            const double fast = moment_from_gram(m, k);
            CHECK(std::abs(fast - brute) <= 1e-10 * std::max(1.0, std::abs(brute)));
        }
    }
}

TEST_CASE("moment_estimate wraps the gram formula over X' B^{-1} X") {
    RandomStream rng(44);
    const int p = 4;
    const int n = 7;
    const Matrix x = sample_Z(EntryLaw::gaussian(), p, n, rng);
    std::vector<double> b(p);
    for (double& v : b) v = 0.5 + rng.next_uniform();

    SymmetricMatrix gram(n);
    for (int s = 0; s < n; ++s)
        for (int t = s; t < n; ++t) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += x(i, s) * x(i, t) / b[i];
            gram.set(s, t, acc);
        }
    for (int k = 1; k <= 4; ++k) {
        const double via_x = moment_estimate(x, b, k);
        const double brute = increasing_path_average_bruteforce(gram, k);
        CHECK(via_x == doctest::Approx(brute).epsilon(1e-10));
    }
    CHECK(moment_estimate(x, b, 1) == doctest::Approx(gram.trace() / n));
    CHECK_THROWS_AS(moment_estimate(x, b, n + 1), std::invalid_argument);
    std::vector<double> bad_b(p, 1.0);
    bad_b[2] = 0.0;
    CHECK_THROWS_AS(moment_estimate(x, bad_b, 2), std::invalid_argument);
}

TEST_CASE("unbiasedness: Monte Carlo mean of m_hat_2 meets the exact trace") {
    // B = diag(Sigma) fixed; target tr((B^{-1/2} Sigma B^{-1/2})^2) with
    // Sigma the ar1(0.5) Toeplitz matrix (unit diagonal, so B = I).
    const int p = 3;
    const int n = 6;
    const MixingMatrices mats = build_A(MixingSpec::ar1(p, 0.5));
    double target = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) target += mats.Sigma(i, j) * mats.Sigma(j, i);

    const std::vector<double> b(p, 1.0);
    const int reps = 100000;
    double sum = 0.0;
    double sumsq = 0.0;
    DataModel model;
    model.law = EntryLaw::gaussian();
    model.mixing = MixingSpec::ar1(p, 0.5);
    model.p = p;
    model.n = n;
    for (int r = 0; r < reps; ++r) {
        model.seed = RandomStream::substream_seed(1303, r);
        const Matrix x = generate(model, mats);
        const double v = moment_estimate(x, b, 2);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
    CHECK(std::abs(mean - target) <= 3.0 * se);
}

TEST_CASE("estimate_correlation_moments") {
    SUBCASE("minimal ell returns (p, m2)") {
        RandomStream rng(3);
        const Matrix x = sample_Z(EntryLaw::gaussian(), 5, 20, rng);
        const MomentVector m = estimate_correlation_moments(x, 2);
        CHECK(m.ell == 2);
        CHECK(m.at(1) == 5.0);
        CHECK(std::isfinite(m.at(2)));
    }
    SUBCASE("identity population: m2 near p") {
        DataModel model;
        model.law = EntryLaw::gaussian();
        model.mixing = MixingSpec::identity(50);
        model.p = 50;
        model.n = 500;
        double mean = 0.0;
        const int reps = 10;
        for (int r = 0; r < reps; ++r) {
            model.seed = RandomStream::substream_seed(17, r);
            mean += estimate_correlation_moments(generate(model), 3).at(2);
        }
        mean /= reps;
        // tr(Gamma^2) = 50; band from pilot spread (se ~ 0.45 at 10 reps)
        CHECK(std::abs(mean - 50.0) < 2.0);
    }
    SUBCASE("spiked population: m2 near tr(Gamma^2) = 5.28") {
        SymmetricMatrix lam(2);
        lam.set(0, 0, 1.0);
        lam.set(1, 1, 1.0);
        lam.set(0, 1, 0.8);
        DataModel model;
        model.law = EntryLaw::gaussian();
        model.mixing = MixingSpec::spiked(lam, 4);
        model.p = 4;
        model.n = 4000;
        const MixingMatrices mats = build_A(model.mixing);
        double mean = 0.0;
        const int reps = 8;
        for (int r = 0; r < reps; ++r) {
            model.seed = RandomStream::substream_seed(29, r);
            mean += estimate_correlation_moments(generate(model, mats), 2).at(2);
        }
        mean /= reps;
        CHECK(std::abs(mean - 5.28) < 0.2);
    }
    SUBCASE("validation") {
        RandomStream rng(9);
        const Matrix x = sample_Z(EntryLaw::gaussian(), 3, 4, rng);
        CHECK_THROWS_AS(estimate_correlation_moments(x, 1), std::invalid_argument);
        CHECK_THROWS_AS(estimate_correlation_moments(x, 5), std::invalid_argument);
    }
}

TEST_CASE("reconstruct_spectrum: Dirac moments give the flat spectrum") {
    MomentVector m;
    m.ell = 4;
    m.values = {6.0, 6.0, 6.0, 6.0}; // power sums of six ones
    const SpectrumEstimate est = reconstruct_spectrum(m, 6);
    for (double v : est.eigenvalues) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(est.residual_moment_error <= 1e-9);
    double trace = 0.0;
    for (double v : est.eigenvalues) trace += v;
    CHECK(trace == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("reconstruct_spectrum recovers the two-atom case, cross-checked") {
    MomentVector m;
    m.ell = 4;
    m.values = {4.0, 5.0, 7.0, 10.25}; // power sums of {1.5, 1.5, 0.5, 0.5}
    const SpectrumEstimate est = reconstruct_spectrum(m, 4);
    REQUIRE(est.eigenvalues.size() == 4);
    CHECK(est.eigenvalues[0] == doctest::Approx(1.5).epsilon(0.02));
    CHECK(est.eigenvalues[1] == doctest::Approx(1.5).epsilon(0.02));
    CHECK(est.eigenvalues[2] == doctest::Approx(0.5).epsilon(0.02));
    CHECK(est.eigenvalues[3] == doctest::Approx(0.5).epsilon(0.02));

    // independent oracle: exhaustive 2-atom fit on the same grid
    const std::vector<double> mu = {1.0, 1.0, 1.25, 1.75, 2.5625};
    const TwoAtomFit fit = two_atom_bruteforce(mu, 4.0, 0.02);
    CHECK(fit.lo == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(fit.hi == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(fit.w_hi == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(fit.err <= 1e-9);
}

TEST_CASE("reconstruct_spectrum recovers small atomic spectra from exact moments") {
    RandomStream rng(555);
    for (int trial = 0; trial < 12; ++trial) {
        // correlation-style spectra keep the mean at 1: atoms {1-d, 1, 1+d}
        // on the grid with balanced counts, p <= 12
        const int p = 6 + 2 * static_cast<int>(rng.next_u64() % 4);
        const double res = 0.01;
        const double d = res * (10 + static_cast<int>(rng.next_u64() % 60));
        const int side = 1 + static_cast<int>(rng.next_u64() % (p / 2 - 1));
        std::vector<double> truth;
        for (int i = 0; i < side; ++i) truth.push_back(1.0 + d);
        for (int i = 0; i < p - 2 * side; ++i) truth.push_back(1.0);
        for (int i = 0; i < side; ++i) truth.push_back(1.0 - d);

        MomentVector m;
        m.ell = 6;
        m.values.assign(6, 0.0);
        for (int k = 1; k <= 6; ++k) {
            double s = 0.0;
            for (double t : truth) s += std::pow(t, k);
            m.values[k - 1] = s;
        }
        REQUIRE(std::abs(m.values[0] - p) <= 1e-12);

        const SpectrumEstimate est = reconstruct_spectrum(m, p, ReconstructionGrid{res, 0.0});
        for (int i = 0; i < p; ++i) CHECK(std::abs(est.eigenvalues[i] - truth[i]) <= res + 1e-9);
    }
}

TEST_CASE("reconstruct_spectrum rejects infeasible moments") {
    MomentVector m;
    m.ell = 2;
    m.values = {4.0, 2.0}; // m2 = 2 < m1^2 / p = 4 violates Cauchy-Schwarz
    CHECK_THROWS_WITH_AS(reconstruct_spectrum(m, 4), doctest::Contains("infeasible"),
                         std::invalid_argument);

    MomentVector h;
    h.ell = 4;
    h.values = {4.0, 8.0, 4.0, 8.0}; // mu4 < mu2^2: Hankel eigenvalue ~ -0.6
    CHECK_THROWS_WITH_AS(reconstruct_spectrum(h, 4), doctest::Contains("Hankel"),
                         std::invalid_argument);
}

TEST_CASE("spectrum estimate export formats") {
    MomentVector m;
    m.ell = 2;
    m.values = {3.0, 3.0};
    const SpectrumEstimate est = reconstruct_spectrum(m, 3);
    const std::string csv = est.csv();
    CHECK(csv.rfind("index,estimate\n", 0) == 0);
    CHECK(est.metadata_json(2).find("\"ell\": 2") != std::string::npos);
}

TEST_CASE("dense CSV ingestion round trip") {
    const char* path = "test_estimators_data.csv";
    {
        std::ofstream out(path);
        out << "1.5,-2.25,3\n0.125,4.75,-6\n";
    }
    const Matrix x = read_dense_csv(path);
    CHECK(x.rows() == 2);
    CHECK(x.cols() == 3);
    CHECK(x(0, 1) == -2.25);
    CHECK(x(1, 2) == -6.0);
    std::remove(path);
    CHECK_THROWS_AS(read_dense_csv("does_not_exist.csv"), std::runtime_error);
}
