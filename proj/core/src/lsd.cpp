#include "rmtcorr/lsd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace rmtcorr {

namespace {

constexpr double kPi = 3.14159265358979323846;

using cplx = std::complex<double>;

void require_upper_half(cplx z, const char* who) {
    if (!(z.imag() > 0.0))
        throw std::invalid_argument(std::string(who) + ": z must have positive imaginary part");
}

// Square root with the branch im >= 0. Stieltjes transforms of positive
// measures map C+ to C+, which pins the branch everywhere we need one.
cplx sqrt_upper(cplx w) {
    cplx r = std::sqrt(w);
    if (r.imag() < 0.0) r = -r;
    return r;
}

} // namespace

AtomicMeasure::AtomicMeasure(std::vector<double> locations, std::vector<double> weights) {
    if (locations.empty() || locations.size() != weights.size())
        throw std::invalid_argument("AtomicMeasure: need matching nonempty atom/weight lists");
    std::vector<size_t> order(locations.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return locations[a] < locations[b]; });
    double mass = 0.0;
    for (size_t k : order) {
        if (!(weights[k] > 0.0))
            throw std::invalid_argument("AtomicMeasure: weights must be positive");
        if (!std::isfinite(locations[k]))
            throw std::invalid_argument("AtomicMeasure: non-finite atom");
        t_.push_back(locations[k]);
        w_.push_back(weights[k]);
        mass += weights[k];
    }
    if (std::abs(mass - 1.0) > 1e-12)
        throw std::invalid_argument("AtomicMeasure: total mass " + std::to_string(mass) +
                                    " is not 1");
}

double AtomicMeasure::cdf(double x) const {
    double c = 0.0;
    for (size_t j = 0; j < t_.size(); ++j)
        if (t_[j] <= x) c += w_[j];
    return c;
}

double AtomicMeasure::moment(int k) const {
    double m = 0.0;
    for (size_t j = 0; j < t_.size(); ++j) m += w_[j] * std::pow(t_[j], k);
    return m;
}

double AtomicMeasure::distance_to_support(double x) const {
    double d = std::abs(x - t_[0]);
    for (double t : t_) d = std::min(d, std::abs(x - t));
    return d;
}

double mp_edge_lower(double gamma) {
    const double r = 1.0 - std::sqrt(gamma);
    return r * r;
}

double mp_edge_upper(double gamma) {
    const double r = 1.0 + std::sqrt(gamma);
    return r * r;
}

double mp_density(double gamma, double x) {
    if (!(gamma > 0.0)) throw std::invalid_argument("mp_density: gamma must be positive");
    const double a = mp_edge_lower(gamma);
    const double b = mp_edge_upper(gamma);
    if (x <= a || x >= b) return 0.0;
    return std::sqrt((b - x) * (x - a)) / (2.0 * kPi * x * gamma);
}

std::complex<double> mp_stieltjes_closed(double gamma, std::complex<double> z) {
    if (!(gamma > 0.0)) throw std::invalid_argument("mp_stieltjes_closed: gamma must be positive");
    require_upper_half(z, "mp_stieltjes_closed");
    const cplx one_pg = cplx(1.0 + gamma, 0.0);
    const cplx disc = (one_pg - z) * (one_pg - z) - 4.0 * gamma;
    const cplx root = std::sqrt(disc);
    const cplx num_plus = 1.0 - gamma - z + root;
    const cplx num_minus = 1.0 - gamma - z - root;
    const cplx s_plus = num_plus / (2.0 * gamma * z);
    const cplx s_minus = num_minus / (2.0 * gamma * z);
    return s_plus.imag() > 0.0 ? s_plus : s_minus;
}

double semicircle_density(double x) {
    if (std::abs(x) >= 2.0) return 0.0;
    return std::sqrt(4.0 - x * x) / (2.0 * kPi);
}

std::complex<double> semicircle_stieltjes(std::complex<double> z) {
    require_upper_half(z, "semicircle_stieltjes");
    const cplx root = std::sqrt(z * z - 4.0);
    const cplx s_plus = (root - z) / 2.0;
    const cplx s_minus = (-root - z) / 2.0;
    return s_plus.imag() > 0.0 ? s_plus : s_minus;
}

namespace {

// Damped fixed-point loop shared by both solvers. Map must send C+ into C+.
template <typename Map>
cplx fixed_point(Map&& map, cplx s0, const SolverOptions& opt, const char* who) {
    cplx s = s0;
    double step = 0.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const cplx next = (1.0 - opt.damping) * s + opt.damping * map(s);
        step = std::abs(next - s);
        s = next;
        if (step < opt.step_tol) break;
    }
    const double residual = std::abs(s - map(s));
    if (!(residual < opt.residual_tol))
        throw std::runtime_error(std::string(who) + ": fixed point did not converge, residual " +
                                 std::to_string(residual));
    return s;
}

} // namespace

std::complex<double> solve_stieltjes(double gamma, const AtomicMeasure& h, std::complex<double> z,
                                     const SolverOptions& opt) {
    if (!(gamma > 0.0)) throw std::invalid_argument("solve_stieltjes: gamma must be positive");
    require_upper_half(z, "solve_stieltjes");
    const auto& t = h.locations();
    const auto& w = h.weights();
    // Iterate the companion form su = -1/(z - gamma int t/(1+t su) dH): it is a
    // holomorphic self-map of C+, so the iterates cannot cross to the wrong
    // root. For tiny gamma the back-conversion (su + (1-gamma)/z)/gamma loses
    // precision, but there the direct map is strongly contracting (its
    // derivative is O(gamma)) and is iterated instead. The direct-equation
    // residual is checked afterwards either way.
    cplx s;
    if (gamma <= 0.05) {
        auto direct_map = [&](cplx sv) {
            const cplx factor = 1.0 - gamma - gamma * z * sv;
            cplx acc(0.0, 0.0);
            for (size_t j = 0; j < t.size(); ++j) acc += w[j] / (t[j] * factor - z);
            return acc;
        };
        s = fixed_point(direct_map, -1.0 / z, opt, "solve_stieltjes");
    } else {
        auto companion = [&](cplx su) {
            cplx acc(0.0, 0.0);
            for (size_t j = 0; j < t.size(); ++j) acc += w[j] * t[j] / (1.0 + t[j] * su);
            return -1.0 / (z - gamma * acc);
        };
        const cplx su = fixed_point(companion, -1.0 / z, opt, "solve_stieltjes");
        s = (su + (1.0 - gamma) / z) / gamma;
    }

    const cplx factor = 1.0 - gamma - gamma * z * s;
    cplx direct(0.0, 0.0);
    for (size_t j = 0; j < t.size(); ++j) direct += w[j] / (t[j] * factor - z);
    const double residual = std::abs(s - direct);
    if (!(residual < opt.residual_tol))
        throw std::runtime_error("solve_stieltjes: fixed point did not converge, residual " +
                                 std::to_string(residual));
    if (!(s.imag() > 0.0))
        throw std::runtime_error("solve_stieltjes: converged to a root outside C+");
    return s;
}

std::complex<double> solve_stieltjes_zero_gamma(const AtomicMeasure& h, std::complex<double> z,
                                                const SolverOptions& opt) {
    require_upper_half(z, "solve_stieltjes_zero_gamma");
    const auto& t = h.locations();
    const auto& w = h.weights();
    auto companion = [&](cplx st) {
        cplx acc(0.0, 0.0);
        for (size_t j = 0; j < t.size(); ++j) acc += w[j] * t[j] / (z + t[j] * st);
        return -acc;
    };
    const cplx st = fixed_point(companion, -1.0 / z, opt, "solve_stieltjes_zero_gamma");
    if (!(st.imag() > 0.0))
        throw std::runtime_error("solve_stieltjes_zero_gamma: companion root outside C+");
    cplx s(0.0, 0.0);
    for (size_t j = 0; j < t.size(); ++j) s -= w[j] / (z + t[j] * st);
    if (!(s.imag() > 0.0))
        throw std::runtime_error("solve_stieltjes_zero_gamma: transform outside C+");
    return s;
}

std::complex<double> underline_transform(double gamma, std::complex<double> z,
                                         std::complex<double> s) {
    return -(1.0 - gamma) / z + gamma * s;
}

double underline_equation_residual(double gamma, const AtomicMeasure& h, std::complex<double> z,
                                   std::complex<double> s) {
    const cplx su = underline_transform(gamma, z, s);
    cplx acc(0.0, 0.0);
    for (int j = 0; j < h.size(); ++j) {
        const double t = h.locations()[j];
        acc += h.weights()[j] * t / (1.0 + t * su);
    }
    return std::abs(z - (-1.0 / su + gamma * acc));
}

GridSpec default_grid(LawKind kind, double gamma, const AtomicMeasure& h, int count) {
    double lo = 0.0;
    double hi = 1.0;
    switch (kind) {
        case LawKind::mp:
            lo = gamma > 1.0 ? mp_edge_lower(gamma) / 2.0 : mp_edge_lower(gamma);
            hi = mp_edge_upper(gamma);
            break;
        case LawKind::semicircle:
            lo = -2.0;
            hi = 2.0;
            break;
        case LawKind::general:
            lo = 0.0;
            hi = h.max_location() * mp_edge_upper(std::max(gamma, 1e-12));
            break;
        case LawKind::general_zero_gamma: {
            // H = delta_c scales the semicircle support to [-2c, 2c]; the
            // second-moment radius covers mixtures.
            hi = 2.0 * std::sqrt(h.moment(2));
            lo = -hi;
            break;
        }
    }
    const double inset = 1e-3 * (hi - lo);
    return GridSpec{lo + inset, hi - inset, count};
}

LimitLaw law_from_stieltjes(LawKind kind, double gamma, const AtomicMeasure& h,
                            const GridSpec& grid, double eta, const SolverOptions& opt) {
    if (grid.count < 2) throw std::invalid_argument("law_from_stieltjes: grid count must be >= 2");
    if (!(eta > 0.0)) throw std::invalid_argument("law_from_stieltjes: eta must be positive");
    if ((kind == LawKind::mp || kind == LawKind::general) && !(gamma > 0.0))
        throw std::invalid_argument("law_from_stieltjes: gamma must be positive for this kind");

    LimitLaw law;
    law.kind = kind;
    law.gamma = (kind == LawKind::semicircle || kind == LawKind::general_zero_gamma) ? 0.0 : gamma;
    law.H = h;
    law.eta = eta;
    law.x.resize(grid.count);
    law.density.resize(grid.count);
    const double step = (grid.hi - grid.lo) / static_cast<double>(grid.count - 1);
    for (int k = 0; k < grid.count; ++k) {
        const double xk = grid.lo + step * k;
        const cplx z(xk, eta);
        cplx s;
        switch (kind) {
            case LawKind::mp: s = mp_stieltjes_closed(gamma, z); break;
            case LawKind::semicircle: s = semicircle_stieltjes(z); break;
            case LawKind::general: s = solve_stieltjes(gamma, h, z, opt); break;
            case LawKind::general_zero_gamma: s = solve_stieltjes_zero_gamma(h, z, opt); break;
        }
        law.x[k] = xk;
        law.density[k] = std::max(0.0, s.imag() / kPi);
    }

    if ((kind == LawKind::mp || kind == LawKind::general) && gamma > 1.0)
        law.point_mass = PointMass{0.0, 1.0 - 1.0 / gamma};

    law.cdf.resize(grid.count);
    double acc = 0.0;
    if (law.point_mass && law.point_mass->location < grid.lo) acc += law.point_mass->weight;
    law.cdf[0] = acc;
    for (int k = 1; k < grid.count; ++k) {
        acc += 0.5 * (law.density[k] + law.density[k - 1]) * step;
        if (law.point_mass && law.point_mass->location > law.x[k - 1] &&
            law.point_mass->location <= law.x[k])
            acc += law.point_mass->weight;
        law.cdf[k] = acc;
    }
    law.total_mass = law.cdf.back();

    switch (kind) {
        case LawKind::mp:
            law.support_lo = gamma >= 1.0 ? 0.0 : mp_edge_lower(gamma);
            law.support_hi = mp_edge_upper(gamma);
            break;
        case LawKind::semicircle:
            law.support_lo = -2.0;
            law.support_hi = 2.0;
            break;
        default: {
            // Grid-estimated support: where the CDF leaves 0 and reaches the total.
            const double edge_eps = 1e-3 * law.total_mass;
            law.support_lo = law.x.front();
            law.support_hi = law.x.back();
            for (int k = 0; k < grid.count; ++k)
                if (law.cdf[k] > edge_eps) {
                    law.support_lo = law.x[k];
                    break;
                }
            for (int k = grid.count - 1; k >= 0; --k)
                if (law.total_mass - law.cdf[k] > edge_eps) {
                    law.support_hi = law.x[k];
                    break;
                }
            if (law.point_mass)
                law.support_lo = std::min(law.support_lo, law.point_mass->location);
            break;
        }
    }
    return law;
}

double LimitLaw::cdf_at(double v) const {
    if (v < x.front()) {
        if (point_mass && v >= point_mass->location) return point_mass->weight;
        return 0.0;
    }
    if (v >= x.back()) return cdf.back();
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    const size_t k = static_cast<size_t>(it - x.begin());
    const double x0 = x[k - 1];
    const double x1 = x[k];
    const double f = (v - x0) / (x1 - x0);
    return cdf[k - 1] + f * (cdf[k] - cdf[k - 1]);
}

double quantile(const LimitLaw& law, double q) {
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("quantile: q must lie in [0,1], got " + std::to_string(q));
    if (q == 0.0) return law.support_lo;
    if (q == 1.0) return law.support_hi;
    if (law.point_mass && q <= law.point_mass->weight &&
        law.point_mass->location <= law.x.front())
        return law.point_mass->location;
    for (size_t k = 0; k < law.cdf.size(); ++k)
        if (law.cdf[k] >= q) {
            if (k == 0) return law.x[0];
            const double c0 = law.cdf[k - 1];
            const double c1 = law.cdf[k];
            if (c1 <= c0) return law.x[k];
            const double f = (q - c0) / (c1 - c0);
            return law.x[k - 1] + f * (law.x[k] - law.x[k - 1]);
        }
    return law.support_hi;
}

CdfView cdf_view(const LimitLaw& law) {
    CdfView v;
    v.lo = law.support_lo;
    v.hi = law.support_hi;
    if (law.point_mass) v.jumps.push_back(law.point_mass->location);
    v.cdf = [law](double x) { return law.cdf_at(x); };
    return v;
}

std::string LimitLaw::header_json() const {
    nlohmann::json j;
    switch (kind) {
        case LawKind::mp: j["kind"] = "mp"; break;
        case LawKind::semicircle: j["kind"] = "semicircle"; break;
        case LawKind::general: j["kind"] = "general"; break;
        case LawKind::general_zero_gamma: j["kind"] = "general_zero_gamma"; break;
    }
    j["gamma"] = gamma;
    std::vector<std::vector<double>> atoms;
    for (int k = 0; k < H.size(); ++k)
        atoms.push_back({H.locations()[k], H.weights()[k]});
    j["H_atoms"] = atoms;
    j["eta"] = eta;
    if (point_mass) {
        j["point_mass"] = {{"location", point_mass->location}, {"weight", point_mass->weight}};
    } else {
        j["point_mass"] = nullptr;
    }
    j["support"] = {support_lo, support_hi};
    j["total_mass"] = total_mass;
    return j.dump(2);
}

std::string LimitLaw::density_csv() const {
    std::string out = "x,density\n";
    char buf[64];
    for (size_t k = 0; k < x.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x[k], density[k]);
        out += buf;
    }
    return out;
}

} // namespace rmtcorr
