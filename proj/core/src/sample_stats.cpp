#include "rmtcorr/sample_stats.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rmtcorr {

SymmetricMatrix sample_covariance(const Matrix& x) {
    if (x.rows() < 1 || x.cols() < 1)
        throw std::invalid_argument("sample_covariance: empty data matrix");
    if (!x.finite()) throw std::invalid_argument("sample_covariance: non-finite data");
    const int p = x.rows();
    const int n = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    SymmetricMatrix s(p);
    for (int i = 0; i < p; ++i) {
        const double* xi = x.row(i);
        for (int j = i; j < p; ++j) {
            const double* xj = x.row(j);
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += xi[t] * xj[t];
            s.set(i, j, acc * inv_n);
        }
    }
    return s;
}

SymmetricMatrix sample_correlation(const SymmetricMatrix& s) {
    const int p = s.dim();
    std::vector<double> inv_sqrt(p);
    for (int i = 0; i < p; ++i) {
        const double d = s(i, i);
        if (!(d > 0.0))
            throw std::invalid_argument("sample_correlation: S_ii not positive at coordinate " +
                                        std::to_string(i) + " (value " + std::to_string(d) + ")");
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    SymmetricMatrix r(p);
    for (int i = 0; i < p; ++i) {
        r.set(i, i, 1.0);
        for (int j = i + 1; j < p; ++j) r.set(i, j, s(i, j) * inv_sqrt[i] * inv_sqrt[j]);
    }
    return r;
}

SymmetricMatrix q_transform(const Matrix& x, const SymmetricMatrix& sigma) {
    if (x.rows() != sigma.dim())
        throw std::invalid_argument("q_transform: dimension mismatch");
    const int p = x.rows();
    std::vector<double> inv_sqrt(p);
    for (int i = 0; i < p; ++i) {
        const double d = sigma(i, i);
        if (!(d > 0.0))
            throw std::invalid_argument("q_transform: Sigma_ii not positive at coordinate " +
                                        std::to_string(i));
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    SymmetricMatrix s = sample_covariance(x);
    SymmetricMatrix q(p);
    for (int i = 0; i < p; ++i)
        for (int j = i; j < p; ++j) q.set(i, j, s(i, j) * inv_sqrt[i] * inv_sqrt[j]);
    return q;
}

ComparisonReport comparison_report(const Matrix& x, const SymmetricMatrix& sigma) {
    const int p = x.rows();
    const int n = x.cols();
    if (p != sigma.dim()) throw std::invalid_argument("comparison_report: dimension mismatch");
    const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(p));

    const SymmetricMatrix s = sample_covariance(x);
    double diag_gap = 0.0;
    double inv_sqrt_gap = 0.0;
    for (int i = 0; i < p; ++i) {
        diag_gap = std::max(diag_gap, std::abs(s(i, i) - sigma(i, i)));
        inv_sqrt_gap = std::max(inv_sqrt_gap,
                                std::abs(1.0 / std::sqrt(s(i, i)) - 1.0 / std::sqrt(sigma(i, i))));
    }

    const SymmetricMatrix r = sample_correlation(s);
    const SymmetricMatrix sq = q_transform(x, sigma);
    const double r_vs_q = spectral_norm(sym_add(r, sq, -1.0));

    return ComparisonReport{scale * diag_gap,
                            scale * inv_sqrt_gap,
                            scale * r_vs_q,
                            p,
                            n,
                            static_cast<double>(p) / static_cast<double>(n)};
}

ExtremeReport extreme_report(const SymmetricMatrix& m, int n) {
    const int p = m.dim();
    if (n < 1) throw std::invalid_argument("extreme_report: n must be >= 1");
    const auto eig = sym_eigenvalues(m);
    const int rank = std::min(p, n);
    const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(p));
    const double lmax = eig.front();
    const double lmin = eig[rank - 1];
    return ExtremeReport{lmax, lmin, scale * (lmax - 1.0), scale * (lmin - 1.0), p, n};
}

double max_offdiag_scaled(const SymmetricMatrix& r, int n) {
    const int p = r.dim();
    if (p < 2) throw std::invalid_argument("max_offdiag_scaled: p must be >= 2");
    double m = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) m = std::max(m, std::abs(r(i, j)));
    return std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(p))) * m;
}

std::string ComparisonReport::to_json_string() const {
    nlohmann::json j;
    j["diag_gap"] = diag_gap;
    j["inv_sqrt_gap"] = inv_sqrt_gap;
    j["r_vs_q_gap"] = r_vs_q_gap;
    j["p"] = p;
    j["n"] = n;
    j["gamma_hat"] = gamma_hat;
    return j.dump();
}

std::string ExtremeReport::to_json_string() const {
    nlohmann::json j;
    j["lambda_max"] = lambda_max;
    j["lambda_min_pn"] = lambda_min_pn;
    j["top_scaled"] = top_scaled;
    j["bottom_scaled"] = bottom_scaled;
    j["p"] = p;
    j["n"] = n;
    return j.dump();
}

} // namespace rmtcorr
