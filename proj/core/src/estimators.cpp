#include "rmtcorr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rmtcorr {

ThresholdRule ThresholdRule::from_dims(int p, int n, double M) {
    return ThresholdRule{M, default_threshold(p, n, M), M <= 2.0};
}

double default_threshold(int p, int n, double M) {
    if (p < 2) throw std::invalid_argument("default_threshold: p must be >= 2");
    if (n < 1) throw std::invalid_argument("default_threshold: n must be >= 1");
    return M * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

SymmetricMatrix threshold_estimate(const SymmetricMatrix& m, const ThresholdRule& rule) {
    const int p = m.dim();
    SymmetricMatrix out(p);
    for (int i = 0; i < p; ++i) {
        out.set(i, i, m(i, i));
        for (int j = i + 1; j < p; ++j) {
            const double v = m(i, j);
            out.set(i, j, std::abs(v) > rule.t_p ? v : 0.0);
        }
    }
    return out;
}

double path_product(const SymmetricMatrix& m, std::span<const int> sigma) {
    if (sigma.empty()) throw std::invalid_argument("path_product: empty path");
    const int n = m.dim();
    for (int idx : sigma)
        if (idx < 0 || idx >= n)
            throw std::invalid_argument("path_product: index " + std::to_string(idx) +
                                        " out of range for n = " + std::to_string(n));
    double prod = 1.0;
    for (size_t i = 0; i < sigma.size(); ++i) prod *= m(sigma[i], sigma[(i + 1) % sigma.size()]);
    return prod;
}

double increasing_path_average_bruteforce(const SymmetricMatrix& m, int k) {
    const int n = m.dim();
    if (k < 1 || k > n)
        throw std::invalid_argument("increasing_path_average_bruteforce: need 1 <= k <= n");
    if (n > 14)
        throw std::invalid_argument("increasing_path_average_bruteforce: n = " +
                                    std::to_string(n) +
                                    " too large for enumeration; use moment_from_gram");

    std::vector<int> sigma(k);
    for (int i = 0; i < k; ++i) sigma[i] = i;
    double sum = 0.0;
    long count = 0;
    while (true) {
        sum += path_product(m, sigma);
        ++count;
        // next increasing k-tuple in lexicographic order
        int i = k - 1;
        while (i >= 0 && sigma[i] == n - k + i) --i;
        if (i < 0) break;
        ++sigma[i];
        for (int j = i + 1; j < k; ++j) sigma[j] = sigma[j - 1] + 1;
    }
    return sum / static_cast<double>(count);
}

namespace {

double log_choose(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

} // namespace

double moment_from_gram(const SymmetricMatrix& gram, int k, int powers_cap) {
    const int n = gram.dim();
    if (k < 1 || k > n) throw std::invalid_argument("moment_from_gram: need 1 <= k <= n");
    if (k > powers_cap)
        throw std::invalid_argument("moment_from_gram: k = " + std::to_string(k) +
                                    " exceeds the matrix-power cap " +
                                    std::to_string(powers_cap));
    const Matrix m = gram.to_dense();
    double trace;
    if (k == 1) {
        trace = gram.trace();
    } else {
        Matrix g(n, n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) g(i, j) = gram(i, j);
        Matrix w = g;
        for (int step = 2; step < k; ++step) w = matmul(g, w);
        trace = 0.0; // tr(W M) without forming the product
        for (int i = 0; i < n; ++i) {
            const double* wi = w.row(i);
            for (int j = 0; j < n; ++j) trace += wi[j] * m(j, i);
        }
    }
    return trace * std::exp(-log_choose(n, k));
}

double moment_estimate(const Matrix& x, const std::vector<double>& b_diag, int k,
                       int powers_cap) {
    const int p = x.rows();
    const int n = x.cols();
    if (static_cast<int>(b_diag.size()) != p)
        throw std::invalid_argument("moment_estimate: B diagonal has wrong length");
    if (k > n) throw std::invalid_argument("moment_estimate: k exceeds n");
    std::vector<double> inv_sqrt(p);
    for (int i = 0; i < p; ++i) {
        if (!(b_diag[i] > 0.0))
            throw std::invalid_argument("moment_estimate: B_ii not positive at " +
                                        std::to_string(i));
        inv_sqrt[i] = 1.0 / std::sqrt(b_diag[i]);
    }
    // gram = X' B^{-1} X via the scaled data Y = B^{-1/2} X.
    Matrix y(p, n);
    for (int i = 0; i < p; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (int t = 0; t < n; ++t) yi[t] = xi[t] * inv_sqrt[i];
    }
    SymmetricMatrix gram(n);
    for (int s = 0; s < n; ++s) {
        for (int t = s; t < n; ++t) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += y(i, s) * y(i, t);
            gram.set(s, t, acc);
        }
    }
    return moment_from_gram(gram, k, powers_cap);
}

MomentVector estimate_correlation_moments(const Matrix& x, int ell, int powers_cap) {
    const int p = x.rows();
    const int n = x.cols();
    if (ell < 2) throw std::invalid_argument("estimate_correlation_moments: ell must be >= 2");
    if (n < ell) throw std::invalid_argument("estimate_correlation_moments: need n >= ell");
    if (ell > powers_cap)
        throw std::invalid_argument("estimate_correlation_moments: ell exceeds the power cap " +
                                    std::to_string(powers_cap));
    std::vector<double> inv_sqrt_b(p, 0.0);
    for (int i = 0; i < p; ++i) {
        const double* xi = x.row(i);
        double acc = 0.0;
        for (int t = 0; t < n; ++t) acc += xi[t] * xi[t];
        if (!(acc > 0.0))
            throw std::invalid_argument("estimate_correlation_moments: zero variance row " +
                                        std::to_string(i));
        inv_sqrt_b[i] = std::sqrt(static_cast<double>(n) / acc);
    }

    // One gram matrix X' B^{-1} X, powers accumulated across k.
    Matrix y(p, n);
    for (int i = 0; i < p; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (int t = 0; t < n; ++t) yi[t] = xi[t] * inv_sqrt_b[i];
    }
    Matrix gram(n, n);
    for (int s = 0; s < n; ++s) {
        for (int t = s; t < n; ++t) {
            double acc = 0.0;
            for (int i = 0; i < p; ++i) acc += y(i, s) * y(i, t);
            gram(s, t) = gram(t, s) = acc;
        }
    }
    Matrix g(n, n, 0.0);
    for (int s = 0; s < n; ++s)
        for (int t = s + 1; t < n; ++t) g(s, t) = gram(s, t);

    MomentVector m;
    m.ell = ell;
    m.values.resize(ell);
    m.values[0] = static_cast<double>(p);
    Matrix w = g; // G^{k-1}
    for (int k = 2; k <= ell; ++k) {
        if (k > 2) w = matmul(g, w);
        double trace = 0.0;
        for (int s = 0; s < n; ++s) {
            const double* ws = w.row(s);
            for (int t = 0; t < n; ++t) trace += ws[t] * gram(t, s);
        }
        m.values[k - 1] = trace * std::exp(-log_choose(n, k));
    }
    return m;
}

namespace {

// Least squares min ||A_P z - b|| over the passive columns, via Householder
// QR. The subproblem never exceeds (rows x rows).
std::vector<double> lstsq_subset(const Matrix& a, const std::vector<double>& b,
                                 const std::vector<int>& idx) {
    const int r = a.rows();
    const int d = static_cast<int>(idx.size());
    Matrix q(r, d);
    for (int i = 0; i < r; ++i)
        for (int u = 0; u < d; ++u) q(i, u) = a(i, idx[u]);
    std::vector<double> rhs(b);

    for (int col = 0; col < d; ++col) {
        double norm = 0.0;
        for (int i = col; i < r; ++i) norm += q(i, col) * q(i, col);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        if (q(col, col) > 0.0) norm = -norm;
        // Householder vector v stored in place of the column tail
        const double head = q(col, col) - norm;
        std::vector<double> v(r - col);
        v[0] = head;
        for (int i = col + 1; i < r; ++i) v[i - col] = q(i, col);
        double vtv = 0.0;
        for (double t : v) vtv += t * t;
        if (vtv == 0.0) continue;
        for (int u = col; u < d; ++u) {
            double dot = 0.0;
            for (int i = col; i < r; ++i) dot += v[i - col] * q(i, u);
            const double f = 2.0 * dot / vtv;
            for (int i = col; i < r; ++i) q(i, u) -= f * v[i - col];
        }
        double dot = 0.0;
        for (int i = col; i < r; ++i) dot += v[i - col] * rhs[i];
        const double f = 2.0 * dot / vtv;
        for (int i = col; i < r; ++i) rhs[i] -= f * v[i - col];
        q(col, col) = norm;
    }

    std::vector<double> z(d, 0.0);
    for (int i = d - 1; i >= 0; --i) {
        double s = rhs[i];
        for (int j = i + 1; j < d; ++j) s -= q(i, j) * z[j];
        const double diag = q(i, i);
        z[i] = diag != 0.0 ? s / diag : 0.0;
    }
    return z;
}

// Lawson-Hanson nonnegative least squares: min ||Ax - b||, x >= 0. The
// passive set never exceeds the row count (ell + 1), so subproblems are tiny.
std::vector<double> nnls(const Matrix& a, const std::vector<double>& b) {
    const int r = a.rows();
    const int c = a.cols();
    std::vector<double> x(c, 0.0);
    std::vector<char> passive(c, 0);
    std::vector<double> w(c);

    auto gradient = [&] {
        std::vector<double> resid(r);
        for (int i = 0; i < r; ++i) {
            double ax = 0.0;
            const double* ai = a.row(i);
            for (int j = 0; j < c; ++j) ax += ai[j] * x[j];
            resid[i] = b[i] - ax;
        }
        for (int j = 0; j < c; ++j) {
            double g = 0.0;
            for (int i = 0; i < r; ++i) g += a(i, j) * resid[i];
            w[j] = g;
        }
    };

    double bnorm = 0.0;
    for (double v : b) bnorm = std::max(bnorm, std::abs(v));
    const double wtol = 1e-12 * std::max(1.0, bnorm);

    const int max_outer = 10 * r + 50;
    for (int outer = 0; outer < max_outer; ++outer) {
        gradient();
        int best = -1;
        double best_w = wtol;
        for (int j = 0; j < c; ++j)
            if (!passive[j] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        if (best < 0) break;
        passive[best] = 1;

        for (int inner = 0; inner < 10 * r + 50; ++inner) {
            std::vector<int> idx;
            for (int j = 0; j < c; ++j)
                if (passive[j]) idx.push_back(j);
            if (idx.empty()) break;
            const std::vector<double> z = lstsq_subset(a, b, idx);

            bool all_pos = true;
            for (double v : z)
                if (!(v > 0.0)) all_pos = false;
            if (all_pos) {
                for (int j = 0; j < c; ++j) x[j] = 0.0;
                for (size_t u = 0; u < idx.size(); ++u) x[idx[u]] = z[u];
                break;
            }
            double alpha = 1.0;
            for (size_t u = 0; u < idx.size(); ++u)
                if (!(z[u] > 0.0)) {
                    const double xi = x[idx[u]];
                    if (xi - z[u] > 0.0) alpha = std::min(alpha, xi / (xi - z[u]));
                }
            for (size_t u = 0; u < idx.size(); ++u) {
                x[idx[u]] += alpha * (z[u] - x[idx[u]]);
                if (!(x[idx[u]] > wtol)) {
                    x[idx[u]] = 0.0;
                    passive[idx[u]] = 0;
                }
            }
        }
    }
    return x;
}

} // namespace

namespace {

struct QuadratureFit {
    std::vector<double> nodes;
    std::vector<double> weights;
    double residual = 0.0;
    bool ok = false;
};

// Gauss-quadrature nodes/weights from normalized moments (Golub-Welsch via
// the Hankel Cholesky factor). Recovers measures with up to floor(ell/2)
// atoms exactly; returns ok = false when the moment matrix degenerates
// before any order fits.
QuadratureFit gauss_quadrature_fit(const std::vector<double>& mu, int ell) {
    QuadratureFit fit;
    for (int r = std::min(3, ell / 2); r >= 1; --r) {
        if (2 * r > ell) continue;
        // Cholesky rows of H0 = [mu_{i+j}], i,j <= r. The last diagonal pivot
        // is never used (and degenerates for an exactly-r-atom measure), so
        // only pivots 0..r-1 must stay positive.
        const int d = r + 1;
        Matrix l(d, d, 0.0);
        bool pd = true;
        for (int i = 0; i < d && pd; ++i) {
            for (int j = 0; j <= i; ++j) {
                if (i == d - 1 && j == i) break;
                double s = mu[i + j];
                for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
                if (i == j) {
                    if (s <= 1e-12 * std::max(1.0, mu[2 * i])) {
                        pd = false;
                        break;
                    }
                    l(i, i) = std::sqrt(s);
                } else {
                    l(i, j) = s / l(j, j);
                }
            }
        }
        if (!pd) continue;
        // Jacobi matrix entries from the orthonormal recurrence:
        // alpha_k = l(k+1,k)/l(k,k) - l(k,k-1)/l(k-1,k-1), beta_k ratios.
        SymmetricMatrix jac(r, 0.0);
        for (int k = 0; k < r; ++k) {
            double alpha = l(k + 1, k) / l(k, k);
            if (k > 0) alpha -= l(k, k - 1) / l(k - 1, k - 1);
            jac.set(k, k, alpha);
            if (k + 1 < r) jac.set(k, k + 1, l(k + 1, k + 1) / l(k, k));
        }
        const EigenDecomposition ed = sym_eigen(jac);
        std::vector<double> nodes(r);
        std::vector<double> weights(r);
        bool valid = true;
        for (int i = 0; i < r; ++i) {
            nodes[i] = ed.eigenvalues[i];
            const double v0 = ed.eigenvectors(0, i);
            weights[i] = mu[0] * v0 * v0;
            if (!(weights[i] > 1e-12) || nodes[i] < -1e-9) valid = false;
        }
        if (!valid) continue;
        for (double& t : nodes) t = std::max(t, 0.0);

        double residual = 0.0;
        for (int k = 1; k <= ell; ++k) {
            double fitted = 0.0;
            for (int i = 0; i < r; ++i) fitted += weights[i] * std::pow(nodes[i], k);
            residual = std::max(residual, std::abs(fitted - mu[k]));
        }
        // ascending node order for quantile emission
        std::vector<int> order(r);
        for (int i = 0; i < r; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](int a2, int b2) { return nodes[a2] < nodes[b2]; });
        fit.nodes.clear();
        fit.weights.clear();
        for (int i : order) {
            fit.nodes.push_back(nodes[i]);
            fit.weights.push_back(weights[i]);
        }
        fit.residual = residual;
        fit.ok = true;
        return fit;
    }
    return fit;
}

} // namespace

SpectrumEstimate reconstruct_spectrum(const MomentVector& m, int p,
                                      const ReconstructionGrid& grid) {
    const int ell = m.ell;
    if (ell < 2) throw std::invalid_argument("reconstruct_spectrum: need ell >= 2");
    if (p < 1) throw std::invalid_argument("reconstruct_spectrum: p must be >= 1");
    if (static_cast<int>(m.values.size()) != ell)
        throw std::invalid_argument("reconstruct_spectrum: malformed moment vector");

    std::vector<double> mu(ell + 1);
    mu[0] = 1.0;
    for (int k = 1; k <= ell; ++k) mu[k] = m.values[k - 1] / static_cast<double>(p);

    // Feasibility with slack: estimated moments of near-Dirac spectra sit on
    // the Cauchy-Schwarz boundary, so only clear violations are an error;
    // boundary noise falls through to the least-squares projection.
    if (mu[2] < mu[1] * mu[1] * 0.95)
        throw std::invalid_argument("reconstruct_spectrum: infeasible moments, m2/p = " +
                                    std::to_string(mu[2]) + " < (m1/p)^2 = " +
                                    std::to_string(mu[1] * mu[1]));
    const int hdim = ell / 2 + 1;
    SymmetricMatrix hankel(hdim);
    double hmax = 0.0;
    for (int i = 0; i < hdim; ++i)
        for (int j = i; j < hdim; ++j) {
            hankel.set(i, j, mu[i + j]);
            hmax = std::max(hmax, std::abs(mu[i + j]));
        }
    const auto heig = sym_eigenvalues(hankel);
    if (heig.back() < -0.05 * std::max(1.0, hmax))
        throw std::invalid_argument(
            "reconstruct_spectrum: infeasible moments, Hankel matrix has eigenvalue " +
            std::to_string(heig.back()));

    const double res = grid.resolution;
    if (!(res > 0.0)) throw std::invalid_argument("reconstruct_spectrum: bad grid resolution");
    const double hi = grid.hi > 0.0 ? grid.hi : std::max(4.0, 2.0 * mu[2]);
    const int count = static_cast<int>(std::floor(hi / res + 0.5)) + 1;

    std::vector<double> g(count);
    for (int j = 0; j < count; ++j) g[j] = res * j;

    // Constraint rows span {1, g, ..., g^ell}: the mass, trace and moment
    // constraints. They are assembled in the Chebyshev basis on [0, hi], which
    // spans the same space but keeps the least-squares system well enough
    // conditioned for exact atomic recovery.
    std::vector<std::vector<double>> cheb(ell + 1, std::vector<double>(ell + 1, 0.0));
    cheb[0][0] = 1.0;
    const double ca = 2.0 / hi;
    const double cb = -1.0;
    if (ell >= 1) {
        cheb[1][0] = cb;
        cheb[1][1] = ca;
    }
    for (int k = 2; k <= ell; ++k)
        for (int j = 0; j <= ell; ++j) {
            double v = -cheb[k - 2][j] + 2.0 * cb * cheb[k - 1][j];
            if (j > 0) v += 2.0 * ca * cheb[k - 1][j - 1];
            cheb[k][j] = v;
        }

    Matrix a(ell + 1, count);
    std::vector<double> b(ell + 1);
    std::vector<double> gpow(ell + 1);
    for (int j = 0; j < count; ++j) {
        gpow[0] = 1.0;
        for (int k = 1; k <= ell; ++k) gpow[k] = gpow[k - 1] * g[j];
        for (int k = 0; k <= ell; ++k) {
            double v = 0.0;
            for (int q = 0; q <= ell; ++q) v += cheb[k][q] * gpow[q];
            a(k, j) = v;
        }
    }
    for (int k = 0; k <= ell; ++k) {
        double v = 0.0;
        for (int q = 0; q <= ell; ++q) v += cheb[k][q] * mu[q];
        b[k] = v;
    }
    // Column normalization keeps the passive-set systems well conditioned.
    std::vector<double> cnorm(count, 0.0);
    for (int j = 0; j < count; ++j) {
        double s = 0.0;
        for (int i = 0; i <= ell; ++i) s += a(i, j) * a(i, j);
        cnorm[j] = std::sqrt(s);
        for (int i = 0; i <= ell; ++i) a(i, j) /= cnorm[j];
    }

    std::vector<double> wgt = nnls(a, b);
    for (int j = 0; j < count; ++j) wgt[j] /= cnorm[j];

    double mass = 0.0;
    for (double v : wgt) mass += v;
    if (!(mass > 0.0))
        throw std::runtime_error("reconstruct_spectrum: degenerate fit (zero mass)");

    SpectrumEstimate est;
    est.grid_lo = 0.0;
    est.grid_hi = hi;
    est.grid_resolution = res;
    est.residual_moment_error = 0.0;
    for (int k = 1; k <= ell; ++k) {
        double fitted = 0.0;
        for (int j = 0; j < count; ++j) fitted += wgt[j] * std::pow(g[j], k);
        est.residual_moment_error = std::max(est.residual_moment_error, std::abs(fitted - mu[k]));
    }
    for (int j = 0; j < count; ++j)
        if (wgt[j] > 1e-12) {
            est.atom_locations.push_back(g[j]);
            est.atom_weights.push_back(wgt[j]);
        }

    // The grid NNLS objective is flat near the optimum, which blurs exact
    // atomic spectra. A Gauss-quadrature fit of the same moments resolves
    // them sharply; it replaces the grid fit when its residual is smaller.
    const QuadratureFit quad = gauss_quadrature_fit(mu, ell);
    if (quad.ok && quad.residual < est.residual_moment_error) {
        est.atom_locations = quad.nodes;
        est.atom_weights = quad.weights;
        est.residual_moment_error = quad.residual;
        mass = 0.0;
        for (double v : quad.weights) mass += v;
    }
    est.mass_defect = std::abs(mass - 1.0);

    // Emit the p quantiles of the fitted measure, descending.
    est.eigenvalues.resize(p);
    const int natoms = static_cast<int>(est.atom_locations.size());
    for (int i = 1; i <= p; ++i) {
        const double q = (static_cast<double>(i) - 0.5) / static_cast<double>(p);
        double acc = 0.0;
        double val = est.atom_locations.empty() ? 0.0 : est.atom_locations.back();
        for (int j = 0; j < natoms; ++j) {
            acc += est.atom_weights[j] / mass;
            if (acc >= q) {
                val = est.atom_locations[j];
                break;
            }
        }
        est.eigenvalues[p - i] = val;
    }
    return est;
}

std::string SpectrumEstimate::csv() const {
    std::string out = "index,estimate\n";
    char buf[64];
    for (size_t i = 0; i < eigenvalues.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, eigenvalues[i]);
        out += buf;
    }
    return out;
}

std::string SpectrumEstimate::metadata_json(int ell) const {
    nlohmann::json j;
    j["ell"] = ell;
    j["grid"] = {{"lo", grid_lo}, {"hi", grid_hi}, {"resolution", grid_resolution}};
    j["residual_moment_error"] = residual_moment_error;
    j["mass_defect"] = mass_defect;
    std::vector<std::vector<double>> atoms;
    for (size_t k = 0; k < atom_locations.size(); ++k)
        atoms.push_back({atom_locations[k], atom_weights[k]});
    j["atoms"] = atoms;
    return j.dump(2);
}

Matrix read_dense_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dense_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("read_dense_csv: ragged row " +
                                     std::to_string(rows.size() + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("read_dense_csv: empty file " + path);
    Matrix x(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) x(i, j) = rows[i][j];
    return x;
}

} // namespace rmtcorr
