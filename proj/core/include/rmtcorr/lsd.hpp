#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "rmtcorr/matrix.hpp"

namespace rmtcorr {

/// Finite discrete probability measure {(t_j, w_j)}, atoms sorted ascending,
/// weights positive, total mass 1 within 1e-12. Represents the limit H of the
/// population correlation ESD, so integrals against H reduce to exact sums.
class AtomicMeasure {
public:
    AtomicMeasure(std::vector<double> locations, std::vector<double> weights);
    static AtomicMeasure dirac(double t) { return AtomicMeasure({t}, {1.0}); }

    int size() const { return static_cast<int>(t_.size()); }
    const std::vector<double>& locations() const { return t_; }
    const std::vector<double>& weights() const { return w_; }

    double cdf(double x) const; ///< right-continuous
    double moment(int k) const; ///< sum w_j t_j^k
    double min_location() const { return t_.front(); }
    double max_location() const { return t_.back(); }
    double distance_to_support(double x) const; ///< min_j |x - t_j|

private:
    std::vector<double> t_;
    std::vector<double> w_;
};

// --- Closed forms -----------------------------------------------------------

/// Marchenko-Pastur density at x for aspect ratio gamma > 0:
/// (2 pi x gamma)^{-1} sqrt((b-x)(x-a)) on [a,b] with a=(1-sqrt(gamma))^2,
/// b=(1+sqrt(gamma))^2; zero elsewhere. For gamma > 1 the point mass 1-1/gamma
/// at 0 is reported separately, never inside the density.
double mp_density(double gamma, double x);

double mp_edge_lower(double gamma); ///< (1-sqrt(gamma))^2
double mp_edge_upper(double gamma); ///< (1+sqrt(gamma))^2

/// Closed-form MP Stieltjes transform
/// (1 - gamma - z + sqrt((1+gamma-z)^2 - 4 gamma)) / (2 gamma z), square-root
/// branch chosen so the result maps C+ to C+.
std::complex<double> mp_stieltjes_closed(double gamma, std::complex<double> z);

/// Semicircle density (2 pi)^{-1} sqrt(4 - x^2) on [-2,2].
double semicircle_density(double x);
/// Semicircle transform (sqrt(z^2-4) - z)/2, branch with positive imaginary part.
std::complex<double> semicircle_stieltjes(std::complex<double> z);

// --- Fixed-point solvers -----------------------------------------------------

struct SolverOptions {
    double damping = 0.5;
    double step_tol = 1e-12;
    double residual_tol = 1e-10;
    int max_iterations = 10000;
};

/// Solves the self-consistent equation for the Stieltjes transform of the
/// limiting spectral distribution F_{gamma,H} at z in C+:
///     s = sum_j w_j / (t_j (1 - gamma - gamma z s) - z),
/// by damped fixed-point iteration from s0 = -1/z. Enforces im(s) > 0 and a
/// residual below residual_tol; throws std::runtime_error carrying the last
/// residual on non-convergence.
std::complex<double> solve_stieltjes(double gamma, const AtomicMeasure& h,
                                     std::complex<double> z,
                                     const SolverOptions& opt = {});

/// gamma = 0 branch: first solves the companion equation
///     st = -sum_j w_j t_j / (z + t_j st),
/// then evaluates s = -sum_j w_j / (z + t_j st).
std::complex<double> solve_stieltjes_zero_gamma(const AtomicMeasure& h,
                                                std::complex<double> z,
                                                const SolverOptions& opt = {});

/// Companion transform of s at z: -(1-gamma)/z + gamma s. Used as a
/// conversion check against the equivalent form
///     z = -1/su + gamma sum_j w_j t_j / (1 + t_j su).
std::complex<double> underline_transform(double gamma, std::complex<double> z,
                                         std::complex<double> s);
/// |z - (-1/su + gamma sum w t/(1+t su))| for the conversion check above.
double underline_equation_residual(double gamma, const AtomicMeasure& h,
                                   std::complex<double> z, std::complex<double> s);

// --- Limit laws --------------------------------------------------------------

enum class LawKind { mp, semicircle, general, general_zero_gamma };

struct PointMass {
    double location;
    double weight;
};

struct GridSpec {
    double lo;
    double hi;
    int count = 2001;
};

/// A limiting spectral distribution materialized on a grid: density by
/// Stieltjes inversion f(x) = im s(x + i eta) / pi, CDF by trapezoid
/// integration, plus an optional point mass (MP with gamma > 1).
struct LimitLaw {
    LawKind kind;
    double gamma = 0.0;
    AtomicMeasure H = AtomicMeasure::dirac(1.0);
    double eta = 1e-4;
    std::vector<double> x;
    std::vector<double> density;
    std::vector<double> cdf; ///< same grid; includes the point mass where applicable
    std::optional<PointMass> point_mass;
    double support_lo = 0.0; ///< analytic for mp/semicircle, grid-estimated otherwise
    double support_hi = 0.0;
    double total_mass = 0.0; ///< integral of density plus point masses

    double cdf_at(double v) const; ///< linear interpolation on the grid
    std::string header_json() const;
    std::string density_csv() const; ///< two columns: x,density
};

/// Default grid for a kind: the analytic support (or an estimate from H)
/// inset by 0.1% of its width so edge singularities stay resolvable.
GridSpec default_grid(LawKind kind, double gamma, const AtomicMeasure& h, int count = 2001);

LimitLaw law_from_stieltjes(LawKind kind, double gamma, const AtomicMeasure& h,
                            const GridSpec& grid, double eta = 1e-4,
                            const SolverOptions& opt = {});

/// inf{x : CDF(x) >= q}; quantile(0) and quantile(1) return the support ends.
double quantile(const LimitLaw& law, double q);

CdfView cdf_view(const LimitLaw& law);

} // namespace rmtcorr
