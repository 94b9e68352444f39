#pragma once

#include <span>
#include <string>
#include <vector>

#include "rmtcorr/matrix.hpp"

namespace rmtcorr {

/// Hard-thresholding rule t_p = M sqrt(log p / n). The theory wants M > 2;
/// smaller M is accepted with a warning flag rather than an error.
struct ThresholdRule {
    double M;
    double t_p;
    bool m_below_theory; ///< true when M <= 2

    static ThresholdRule from_dims(int p, int n, double M);
};

/// M sqrt(ln p / n).
double default_threshold(int p, int n, double M);

/// Entrywise M_ij 1(|M_ij| > t_p) off the diagonal; diagonal entries are kept
/// untouched (for a correlation matrix the diagonal stays at 1).
SymmetricMatrix threshold_estimate(const SymmetricMatrix& m, const ThresholdRule& rule);

/// Cyclic product prod_i M_{sigma_i, sigma_{i+1}} with sigma_{k+1} = sigma_1.
/// Indices are 0-based; out-of-range indices throw.
double path_product(const SymmetricMatrix& m, std::span<const int> sigma);

/// Average of path_product over all C(n,k) strictly increasing k-paths by
/// explicit enumeration. Reference implementation; refuses n > 14.
double increasing_path_average_bruteforce(const SymmetricMatrix& m, int k);

/// Same average computed as C(n,k)^{-1} tr(G^{k-1} M) where G is the strictly
/// upper triangular part of the n x n gram matrix M. The binomial coefficient
/// is applied in log space. powers_cap bounds the O(k n^3) matrix powers.
double moment_from_gram(const SymmetricMatrix& gram, int k, int powers_cap = 8);

/// m_hat_k for the model with weights B: the gram matrix is X' B^{-1} X.
/// b_diag is the diagonal of B and must be strictly positive.
double moment_estimate(const Matrix& x, const std::vector<double>& b_diag, int k,
                       int powers_cap = 8);

/// Estimated power sums of the population correlation spectrum,
/// m_hat_1 fixed to p by construction.
struct MomentVector {
    int ell;
    std::vector<double> values; ///< values[k-1] = m_hat_k, k = 1..ell

    double at(int k) const { return values.at(k - 1); }
};

/// Steps 1-2 of the spectrum estimator: B = diag(S), m_hat_k for k = 2..ell.
MomentVector estimate_correlation_moments(const Matrix& x, int ell, int powers_cap = 8);

struct ReconstructionGrid {
    double resolution = 0.02;
    double hi = 0.0; ///< 0 = auto: max(4, 2 m_hat_2 / p)
};

struct SpectrumEstimate {
    std::vector<double> eigenvalues; ///< length p, nonnegative, descending
    double grid_lo;
    double grid_hi;
    double grid_resolution;
    std::vector<double> atom_locations; ///< fitted measure support (positive weights)
    std::vector<double> atom_weights;
    double residual_moment_error; ///< max_k |fitted mu_k - mu_k|
    double mass_defect;           ///< |sum of fitted weights - 1|

    std::string csv() const; ///< columns: index,estimate
    std::string metadata_json(int ell) const;
};

/// Step 3: projects the estimated moments onto an atomic measure supported on
/// a uniform grid (nonnegative least squares over the mass, trace and moment
/// constraints) and emits the p quantiles of the fitted measure. Throws on
/// clearly infeasible moments (Hankel test).
SpectrumEstimate reconstruct_spectrum(const MomentVector& m, int p,
                                      const ReconstructionGrid& grid = {});

/// Dense CSV ingestion: p rows of n comma-separated values.
Matrix read_dense_csv(const std::string& path);

} // namespace rmtcorr
