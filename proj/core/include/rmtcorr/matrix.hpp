#pragma once

#include <functional>
#include <string>
#include <vector>

namespace rmtcorr {

/// Dense row-major matrix. Used for data matrices X (p x n), eigenvector
/// blocks, and general rectangular intermediates.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0);
    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

    double* row(int i) { return a_.data() + static_cast<size_t>(i) * cols_; }
    const double* row(int i) const { return a_.data() + static_cast<size_t>(i) * cols_; }

    std::vector<double>& data() { return a_; }
    const std::vector<double>& data() const { return a_; }

    bool finite() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Symmetric p x p matrix. The packed row-major upper triangle is the
/// authoritative storage; (i,j) and (j,i) read the same slot, so symmetry
/// holds bit-exactly by construction.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(int dim, double fill = 0.0);
    static SymmetricMatrix identity(int dim);
    static SymmetricMatrix diagonal(const std::vector<double>& d);
    /// Averages (a + a') / 2. For matrices that are symmetric up to rounding.
    static SymmetricMatrix from_dense(const Matrix& a);

    int dim() const { return dim_; }

    double operator()(int i, int j) const { return upper_[pos(i, j)]; }
    void set(int i, int j, double v) { upper_[pos(i, j)] = v; }

    double trace() const;
    double max_abs() const;
    double frobenius() const;
    bool finite() const;

    Matrix to_dense() const;

    std::vector<double>& packed() { return upper_; }
    const std::vector<double>& packed() const { return upper_; }

private:
    size_t pos(int i, int j) const {
        if (i > j) std::swap(i, j);
        return static_cast<size_t>(i) * (2 * dim_ - i - 1) / 2 + j;
    }

    int dim_ = 0;
    std::vector<double> upper_;
};

SymmetricMatrix sym_add(const SymmetricMatrix& a, const SymmetricMatrix& b, double sb = 1.0);
SymmetricMatrix sym_scale(const SymmetricMatrix& a, double s);

struct EigenDecomposition {
    std::vector<double> eigenvalues; ///< sorted descending, stable tie order
    Matrix eigenvectors;             ///< orthonormal columns; column j pairs with eigenvalues[j]
};

/// Cyclic Jacobi eigensolver. Sweeps until the off-diagonal Frobenius mass
/// drops below 1e-13 * ||M||_F, capped at 100 sweeps. Deterministic.
/// Throws std::invalid_argument on non-finite input.
EigenDecomposition sym_eigen(const SymmetricMatrix& m);

/// Eigenvalues only (descending); skips eigenvector accumulation.
std::vector<double> sym_eigenvalues(const SymmetricMatrix& m);

/// max_i |lambda_i(m)|; for symmetric m this equals the operator norm.
double spectral_norm(const SymmetricMatrix& m);

/// Uniform distribution on a matrix's eigenvalues:
/// F(x) = (1/p) #{i : lambda_i <= x}, a right-continuous step function.
class EmpiricalSpectralDistribution {
public:
    explicit EmpiricalSpectralDistribution(std::vector<double> eigenvalues);

    const std::vector<double>& points() const { return points_; } ///< sorted ascending
    double cdf(double x) const;

private:
    std::vector<double> points_;
};

/// A CDF that kolmogorov_distance can evaluate: the function itself plus its
/// jump locations and support hull.
struct CdfView {
    std::function<double(double)> cdf;
    std::vector<double> jumps; ///< discontinuity locations (empty for continuous laws)
    double lo = 0.0;           ///< support hull
    double hi = 0.0;
};

CdfView cdf_view(const EmpiricalSpectralDistribution& esd);

/// sup |F - G| over the union of both jump sets plus 2048 uniform points
/// spanning both supports.
double kolmogorov_distance(const CdfView& f, const CdfView& g);

} // namespace rmtcorr
