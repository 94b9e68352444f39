#include <cmath>
#include <complex>
#include <stdexcept>

#include "doctest.h"

#include "rmtcorr/lsd.hpp"

using namespace rmtcorr;
using cplx = std::complex<double>;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("atomic measure validation and queries") {
    CHECK_THROWS_AS(AtomicMeasure({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(AtomicMeasure({1.0}, {0.5}), std::invalid_argument);
    CHECK_THROWS_AS(AtomicMeasure({1.0, 2.0}, {0.5, -0.5}), std::invalid_argument);

    const AtomicMeasure h({3.0, 1.0}, {0.25, 0.75});
    CHECK(h.locations().front() == 1.0); // sorted ascending
    CHECK(h.cdf(0.5) == 0.0);
    CHECK(h.cdf(1.0) == doctest::Approx(0.75)); // right-continuous
    CHECK(h.cdf(2.9) == doctest::Approx(0.75));
    CHECK(h.cdf(3.0) == doctest::Approx(1.0));
    CHECK(h.moment(1) == doctest::Approx(1.5));
    CHECK(h.distance_to_support(2.0) == doctest::Approx(1.0));
}

TEST_CASE("MP density closed form") {
    CHECK(mp_density(1.0, 2.0) == doctest::Approx(1.0 / (2.0 * kPi)));
    CHECK(mp_density(0.25, 3.0) == 0.0); // outside [0.25, 2.25]
    CHECK(mp_density(0.25, mp_edge_lower(0.25)) == 0.0);
    CHECK(mp_density(0.25, mp_edge_upper(0.25)) == 0.0);
    CHECK(mp_density(0.7, mp_edge_upper(0.7)) == 0.0);
    CHECK_THROWS_AS(mp_density(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(mp_density(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("MP closed transform maps C+ to C+ and has the -1/z tail") {
    for (double gamma : {0.25, 0.5, 1.0, 2.0}) {
        for (int k = 0; k < 100; ++k) {
            const double re = -1.0 + 8.0 * k / 99.0;
            const cplx z(re, 0.05 + (k % 7) * 0.3);
            CHECK(mp_stieltjes_closed(gamma, z).imag() > 0.0);
        }
    }
    const double x = 2000.0; // far beyond b: the next tail term is m1/x^2 = 1/x^2
    const cplx s = mp_stieltjes_closed(0.5, cplx(x, 1e-6));
    CHECK(std::abs(s - cplx(-1.0 / x, 0.0)) <= 1e-3 / x);
    CHECK_THROWS_AS(mp_stieltjes_closed(0.5, cplx(1.0, -0.1)), std::invalid_argument);
}

TEST_CASE("semicircle closed forms") {
    CHECK(semicircle_density(0.0) == doctest::Approx(1.0 / kPi));
    CHECK(semicircle_density(2.0) == 0.0);
    CHECK(semicircle_density(-2.0) == 0.0);
    const cplx s = semicircle_stieltjes(cplx(0.0, 1.0));
    CHECK(s.real() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.imag() == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0)); // 0.61803...
    CHECK_THROWS_AS(semicircle_stieltjes(cplx(0.0, 0.0)), std::invalid_argument);
}

TEST_CASE("fixed-point solver reduces to the MP closed form for H = delta_1") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    for (double gamma : {0.25, 0.5, 1.0, 2.0}) {
        for (int k = 0; k < 25; ++k) {
            const cplx z(-0.5 + 6.0 * k / 24.0, 0.05 + 0.1 * (k % 3));
            const cplx solved = solve_stieltjes(gamma, h, z);
            const cplx closed = mp_stieltjes_closed(gamma, z);
            CHECK(std::abs(solved - closed) <= 1e-8);
        }
    }
}

TEST_CASE("solver obeys the dilation rule s_H(z) = s_MP(z/c)/c for H = delta_c") {
    const double c = 2.5;
    const AtomicMeasure h = AtomicMeasure::dirac(c);
    for (double gamma : {0.25, 0.5}) {
        for (int k = 0; k < 10; ++k) {
            const cplx z(0.5 + k, 0.2);
            const cplx solved = solve_stieltjes(gamma, h, z);
            const cplx scaled = mp_stieltjes_closed(gamma, z / c) / c;
            CHECK(std::abs(solved - scaled) <= 1e-8);
        }
    }
}

TEST_CASE("solver degenerates to the raw resolvent as gamma -> 0") {
    const AtomicMeasure h({0.5, 1.0, 2.0}, {0.2, 0.5, 0.3});
    const cplx z(2.0, 1.0);
    const cplx s = solve_stieltjes(1e-6, h, z);
    cplx direct(0.0, 0.0);
    for (int j = 0; j < h.size(); ++j)
        direct += h.weights()[j] / (h.locations()[j] - z);
    CHECK(std::abs(s - direct) <= 1e-4);
}

TEST_CASE("zero-gamma solver matches the semicircle for H = delta_1") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    for (int k = 0; k < 30; ++k) {
        const cplx z(-2.5 + 5.0 * k / 29.0, 0.05 + 0.2 * (k % 2));
        CHECK(std::abs(solve_stieltjes_zero_gamma(h, z) - semicircle_stieltjes(z)) <= 1e-8);
    }
}

TEST_CASE("zero-gamma solver scales the semicircle for H = delta_c") {
    const double c = 1.7;
    const AtomicMeasure h = AtomicMeasure::dirac(c);
    for (int k = 0; k < 10; ++k) {
        const cplx z(-3.0 + 0.7 * k, 0.3);
        const cplx solved = solve_stieltjes_zero_gamma(h, z);
        const cplx scaled = semicircle_stieltjes(z / c) / c;
        CHECK(std::abs(solved - scaled) <= 1e-8);
    }
}

TEST_CASE("zero-gamma solver has the -1/z tail") {
    const AtomicMeasure h({0.5, 1.5}, {0.5, 0.5});
    const cplx z(0.0, 1000.0);
    const cplx s = solve_stieltjes_zero_gamma(h, z);
    CHECK(std::abs(s - (-1.0 / z)) <= 1e-3 * std::abs(1.0 / z));
}

TEST_CASE("solver outputs stay in C+ on a random upper-half grid") {
    const AtomicMeasure h({0.4, 1.0, 2.2}, {0.3, 0.4, 0.3});
    for (int k = 0; k < 40; ++k) {
        const cplx z(-1.0 + 0.2 * k, 0.05 + 0.07 * (k % 5));
        CHECK(solve_stieltjes(0.7, h, z).imag() > 0.0);
        CHECK(solve_stieltjes_zero_gamma(h, z).imag() > 0.0);
    }
}

TEST_CASE("underline transform satisfies the companion equation") {
    const AtomicMeasure h({1.0, 3.0}, {0.5, 0.5});
    const double gamma = 0.5;
    for (int k = 0; k < 20; ++k) {
        const cplx z(0.5 + 0.4 * k, 0.3);
        const cplx s = solve_stieltjes(gamma, h, z);
        CHECK(underline_equation_residual(gamma, h, z, s) <= 1e-8);
    }
}

TEST_CASE("solver reports non-convergence with the residual") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    SolverOptions opt;
    opt.max_iterations = 3;
    CHECK_THROWS_AS(solve_stieltjes(0.5, h, cplx(1.0, 0.01), opt), std::runtime_error);
}

TEST_CASE("inversion recovers the MP(0.25) density on the interior") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const LimitLaw law = law_from_stieltjes(LawKind::mp, 0.25, h, default_grid(LawKind::mp, 0.25, h));
    CHECK(std::abs(law.total_mass - 1.0) <= 2e-3);
    const double a = mp_edge_lower(0.25);
    const double b = mp_edge_upper(0.25);
    const double inset = 0.05 * (b - a);
    for (size_t k = 0; k < law.x.size(); k += 37) {
        const double x = law.x[k];
        if (x < a + inset || x > b - inset) continue;
        CHECK(std::abs(law.density[k] - mp_density(0.25, x)) <= 5e-3);
    }
}

TEST_CASE("inversion through the zero-gamma solver recovers the semicircle") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const LimitLaw law = law_from_stieltjes(LawKind::general_zero_gamma, 0.0, h,
                                            default_grid(LawKind::general_zero_gamma, 0.0, h));
    CHECK(std::abs(law.total_mass - 1.0) <= 2e-3);
    for (size_t k = 0; k < law.x.size(); k += 53) {
        const double x = law.x[k];
        if (std::abs(x) > 1.8) continue;
        CHECK(std::abs(law.density[k] - semicircle_density(x)) <= 5e-3);
    }
}

TEST_CASE("general-kind law matches the mp law for H = delta_1") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const GridSpec grid = default_grid(LawKind::mp, 0.5, h, 801);
    const LimitLaw general = law_from_stieltjes(LawKind::general, 0.5, h, grid);
    const LimitLaw mp = law_from_stieltjes(LawKind::mp, 0.5, h, grid);
    for (size_t k = 0; k < general.x.size(); k += 61)
        CHECK(std::abs(general.density[k] - mp.density[k]) <= 1e-7);
}

TEST_CASE("MP point mass appears only for gamma > 1") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const LimitLaw sub = law_from_stieltjes(LawKind::mp, 0.5, h, default_grid(LawKind::mp, 0.5, h));
    CHECK(!sub.point_mass.has_value());
    const LimitLaw super = law_from_stieltjes(LawKind::mp, 2.0, h, default_grid(LawKind::mp, 2.0, h));
    REQUIRE(super.point_mass.has_value());
    CHECK(super.point_mass->weight == doctest::Approx(0.5));
    CHECK(super.point_mass->location == 0.0);
    CHECK(std::abs(super.total_mass - 1.0) <= 2e-3);
}

TEST_CASE("quantiles on the stated cases") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const LimitLaw mp025 = law_from_stieltjes(LawKind::mp, 0.25, h, default_grid(LawKind::mp, 0.25, h));
    CHECK(quantile(mp025, 0.0) == doctest::Approx(0.25)); // (1 - sqrt(0.25))^2
    CHECK(quantile(mp025, 1.0) == doctest::Approx(2.25)); // (1 + sqrt(0.25))^2

    const LimitLaw mp1 = law_from_stieltjes(LawKind::mp, 1.0, h, default_grid(LawKind::mp, 1.0, h));
    CHECK(quantile(mp1, 0.0) == 0.0);

    const LimitLaw semi =
        law_from_stieltjes(LawKind::semicircle, 0.0, h, default_grid(LawKind::semicircle, 0.0, h));
    CHECK(std::abs(quantile(semi, 0.5)) <= 5e-3);
    CHECK_THROWS_AS(quantile(semi, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(quantile(semi, 1.5), std::invalid_argument);
}

TEST_CASE("CDF is monotone and quantile inverts it on continuity points") {
    const AtomicMeasure h({1.0, 2.0}, {0.6, 0.4});
    const LimitLaw law = law_from_stieltjes(LawKind::general, 0.3, h,
                                            default_grid(LawKind::general, 0.3, h));
    for (size_t k = 1; k < law.cdf.size(); ++k) CHECK(law.cdf[k] >= law.cdf[k - 1]);
    const double step = law.x[1] - law.x[0];
    for (double x : {1.0, 1.5, 2.0, 2.4}) {
        const double q = law.cdf_at(x);
        if (q <= 0.0 || q >= law.total_mass) continue;
        CHECK(std::abs(quantile(law, q) - x) <= 2.0 * step + 1e-9);
    }
}

TEST_CASE("two-atom general law: positive support, unit mass") {
    const AtomicMeasure h({1.0, 3.0}, {0.5, 0.5});
    const LimitLaw law = law_from_stieltjes(LawKind::general, 0.5, h,
                                            default_grid(LawKind::general, 0.5, h));
    CHECK(std::abs(law.total_mass - 1.0) <= 2e-3);
    CHECK(law.support_lo > 0.0);
    for (double f : law.density) CHECK(f >= 0.0);
}

TEST_CASE("law CSV and JSON header export") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    const LimitLaw law = law_from_stieltjes(LawKind::mp, 0.5, h,
                                            GridSpec{0.1, 3.0, 8});
    const std::string csv = law.density_csv();
    CHECK(csv.rfind("x,density\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    const std::string header = law.header_json();
    CHECK(header.find("\"kind\": \"mp\"") != std::string::npos);
    CHECK(header.find("\"gamma\": 0.5") != std::string::npos);
}

TEST_CASE("law_from_stieltjes validates inputs") {
    const AtomicMeasure h = AtomicMeasure::dirac(1.0);
    CHECK_THROWS_AS(law_from_stieltjes(LawKind::mp, -0.5, h, GridSpec{0.0, 1.0, 10}),
                    std::invalid_argument);
    CHECK_THROWS_AS(law_from_stieltjes(LawKind::mp, 0.5, h, GridSpec{0.0, 1.0, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(law_from_stieltjes(LawKind::mp, 0.5, h, GridSpec{0.0, 1.0, 10}, -1e-4),
                    std::invalid_argument);
}
