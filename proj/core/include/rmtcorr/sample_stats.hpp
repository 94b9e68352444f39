#pragma once

#include <string>

#include "rmtcorr/matrix.hpp"

namespace rmtcorr {

/// S = (1/n) X X' for a p x n data matrix.
SymmetricMatrix sample_covariance(const Matrix& x);

/// R_ij = S_ij / sqrt(S_ii S_jj). The diagonal is set to 1 exactly.
/// Throws naming the offending coordinate when some S_ii <= 0.
SymmetricMatrix sample_correlation(const SymmetricMatrix& s);

/// S^Q = (1/n) Q Q' with Q = (diag Sigma)^{-1/2} X, i.e. the sample covariance
/// of data renormalized by the population variances.
SymmetricMatrix q_transform(const Matrix& x, const SymmetricMatrix& sigma);

/// Scaled gaps between sample and population quantities. All three gaps carry
/// the sqrt(n/p) normalization under which they vanish almost surely when the
/// entry law has a finite fourth moment.
struct ComparisonReport {
    double diag_gap;     ///< sqrt(n/p) max_i |S_ii - Sigma_ii|
    double inv_sqrt_gap; ///< sqrt(n/p) max_i |S_ii^{-1/2} - Sigma_ii^{-1/2}|
    double r_vs_q_gap;   ///< sqrt(n/p) ||R - S^Q|| (spectral norm)
    int p;
    int n;
    double gamma_hat;    ///< p/n

    std::string to_json_string() const;
};

ComparisonReport comparison_report(const Matrix& x, const SymmetricMatrix& sigma);

/// Extreme-eigenvalue statistics under the sqrt(n/p)(lambda - 1) scaling.
/// lambda_min refers to the min(p,n)-th largest eigenvalue; eigenvalues past
/// the rank are excluded.
struct ExtremeReport {
    double lambda_max;
    double lambda_min_pn;
    double top_scaled;    ///< sqrt(n/p) (lambda_1 - 1)
    double bottom_scaled; ///< sqrt(n/p) (lambda_min(p,n) - 1)
    int p;
    int n;

    std::string to_json_string() const;
};

ExtremeReport extreme_report(const SymmetricMatrix& m, int n);

/// sqrt(n / log p) * max_{i != j} |R_ij| (natural log). Requires p >= 2.
double max_offdiag_scaled(const SymmetricMatrix& r, int n);

} // namespace rmtcorr
