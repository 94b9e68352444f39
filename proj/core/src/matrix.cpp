#include "rmtcorr/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rmtcorr {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n, 0.0);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::finite() const {
    for (double v : a_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols(), 0.0);
    // ikj order keeps the inner loop contiguous in b and c.
    for (int i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

SymmetricMatrix::SymmetricMatrix(int dim, double fill)
    : dim_(dim), upper_(static_cast<size_t>(dim) * (dim + 1) / 2, fill) {
    if (dim < 1) throw std::invalid_argument("SymmetricMatrix: dim must be >= 1");
}

SymmetricMatrix SymmetricMatrix::identity(int dim) {
    SymmetricMatrix m(dim, 0.0);
    for (int i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
}

SymmetricMatrix SymmetricMatrix::diagonal(const std::vector<double>& d) {
    SymmetricMatrix m(static_cast<int>(d.size()), 0.0);
    for (int i = 0; i < m.dim(); ++i) m.set(i, i, d[i]);
    return m;
}

SymmetricMatrix SymmetricMatrix::from_dense(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("from_dense: matrix not square");
    SymmetricMatrix m(a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = i; j < a.cols(); ++j) m.set(i, j, 0.5 * (a(i, j) + a(j, i)));
    return m;
}

double SymmetricMatrix::trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double SymmetricMatrix::max_abs() const {
    double m = 0.0;
    for (double v : upper_) m = std::max(m, std::abs(v));
    return m;
}

double SymmetricMatrix::frobenius() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) {
        const double d = (*this)(i, i);
        s += d * d;
        for (int j = i + 1; j < dim_; ++j) {
            const double v = (*this)(i, j);
            s += 2.0 * v * v;
        }
    }
    return std::sqrt(s);
}

bool SymmetricMatrix::finite() const {
    for (double v : upper_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix SymmetricMatrix::to_dense() const {
    Matrix a(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
        for (int j = i; j < dim_; ++j) a(i, j) = a(j, i) = (*this)(i, j);
    return a;
}

SymmetricMatrix sym_add(const SymmetricMatrix& a, const SymmetricMatrix& b, double sb) {
    if (a.dim() != b.dim()) throw std::invalid_argument("sym_add: shape mismatch");
    SymmetricMatrix c = a;
    for (size_t k = 0; k < c.packed().size(); ++k) c.packed()[k] += sb * b.packed()[k];
    return c;
}

SymmetricMatrix sym_scale(const SymmetricMatrix& a, double s) {
    SymmetricMatrix c = a;
    for (double& v : c.packed()) v *= s;
    return c;
}

namespace {

void check_finite(const SymmetricMatrix& m, const char* who) {
    if (m.finite()) return;
    for (int i = 0; i < m.dim(); ++i)
        for (int j = i; j < m.dim(); ++j)
            if (!std::isfinite(m(i, j)))
                throw std::invalid_argument(std::string(who) + ": non-finite entry at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
}

double offdiag_frobenius(const Matrix& a) {
    const int p = a.rows();
    double s = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
}

inline void plane_rotate(double& x, double& y, double s, double tau) {
    const double g = x;
    const double h = y;
    x = g - s * (h + g * tau);
    y = h + s * (g - h * tau);
}

// One cyclic Jacobi pass over all (k,l) pairs; only the upper triangle is
// maintained. Rotations below `tresh` are skipped; entries that are negligible
// against both diagonal neighbours are flushed to zero outright. VT, when
// present, accumulates the transpose of the eigenvector matrix (rows rotate
// contiguously).
template <bool WithVectors>
void jacobi_sweep(Matrix& a, Matrix* vt, double tresh, bool allow_flush) {
    const int p = a.rows();
    for (int k = 0; k < p - 1; ++k) {
        double* rk = a.row(k);
        for (int l = k + 1; l < p; ++l) {
            const double akl = rk[l];
            const double g = 100.0 * std::abs(akl);
            if (allow_flush && std::abs(rk[k]) + g == std::abs(rk[k]) &&
                std::abs(a(l, l)) + g == std::abs(a(l, l))) {
                rk[l] = 0.0;
                continue;
            }
            if (std::abs(akl) <= tresh) continue;

            const double theta = 0.5 * (a(l, l) - rk[k]) / akl;
            double t;
            if (std::abs(theta) > 1e150) {
                t = 0.5 / theta; // avoids theta^2 overflow
            } else {
                t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                if (theta < 0.0) t = -t;
            }
            const double c = 1.0 / std::sqrt(t * t + 1.0);
            const double s = t * c;
            const double tau = s / (1.0 + c);
            const double h = t * akl;

            rk[k] -= h;
            a(l, l) += h;
            rk[l] = 0.0;
            double* rl = a.row(l);
            for (int j = 0; j < k; ++j) plane_rotate(a(j, k), a(j, l), s, tau);
            for (int j = k + 1; j < l; ++j) plane_rotate(rk[j], a(j, l), s, tau);
            for (int j = l + 1; j < p; ++j) plane_rotate(rk[j], rl[j], s, tau);

            if constexpr (WithVectors) {
                double* vk = vt->row(k);
                double* vl = vt->row(l);
                for (int j = 0; j < p; ++j) plane_rotate(vk[j], vl[j], s, tau);
            }
        }
    }
}

double offdiag_abs_sum(const Matrix& a) {
    const int p = a.rows();
    double s = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) s += std::abs(a(i, j));
    return s;
}

template <bool WithVectors>
std::pair<std::vector<double>, Matrix> jacobi(const SymmetricMatrix& m) {
    const int p = m.dim();
    Matrix a = m.to_dense();
    Matrix vt;
    if constexpr (WithVectors) vt = Matrix::identity(p);

    const double norm = m.frobenius();
    const double tol = 1e-13 * norm;
    for (int sweep = 0; sweep < 100; ++sweep) {
        if (offdiag_frobenius(a) <= tol) break;
        const double tresh =
            sweep < 3 ? 0.2 * offdiag_abs_sum(a) / (static_cast<double>(p) * p) : 0.0;
        jacobi_sweep<WithVectors>(a, WithVectors ? &vt : nullptr, tresh, sweep > 4);
    }

    std::vector<double> eig(p);
    for (int i = 0; i < p; ++i) eig[i] = a(i, i);

    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return eig[x] > eig[y]; });

    std::vector<double> sorted(p);
    for (int i = 0; i < p; ++i) sorted[i] = eig[order[i]];

    Matrix q;
    if constexpr (WithVectors) {
        q = Matrix(p, p);
        for (int j = 0; j < p; ++j) {
            const double* v = vt.row(order[j]);
            for (int i = 0; i < p; ++i) q(i, j) = v[i];
        }
    }
    return {std::move(sorted), std::move(q)};
}

} // namespace

EigenDecomposition sym_eigen(const SymmetricMatrix& m) {
    check_finite(m, "sym_eigen");
    auto [eig, q] = jacobi<true>(m);
    return EigenDecomposition{std::move(eig), std::move(q)};
}

std::vector<double> sym_eigenvalues(const SymmetricMatrix& m) {
    check_finite(m, "sym_eigenvalues");
    return jacobi<false>(m).first;
}

double spectral_norm(const SymmetricMatrix& m) {
    auto eig = sym_eigenvalues(m);
    return std::max(std::abs(eig.front()), std::abs(eig.back()));
}

EmpiricalSpectralDistribution::EmpiricalSpectralDistribution(std::vector<double> eigenvalues)
    : points_(std::move(eigenvalues)) {
    if (points_.empty())
        throw std::invalid_argument("EmpiricalSpectralDistribution: empty spectrum");
    std::sort(points_.begin(), points_.end());
}

double EmpiricalSpectralDistribution::cdf(double x) const {
    const auto it = std::upper_bound(points_.begin(), points_.end(), x);
    return static_cast<double>(it - points_.begin()) / static_cast<double>(points_.size());
}

CdfView cdf_view(const EmpiricalSpectralDistribution& esd) {
    CdfView v;
    v.jumps = esd.points();
    v.lo = esd.points().front();
    v.hi = esd.points().back();
    v.cdf = [esd](double x) { return esd.cdf(x); };
    return v;
}

double kolmogorov_distance(const CdfView& f, const CdfView& g) {
    if (!f.cdf || !g.cdf) throw std::invalid_argument("kolmogorov_distance: missing CDF");
    std::vector<double> grid;
    grid.reserve(f.jumps.size() + g.jumps.size() + 2048);
    grid.insert(grid.end(), f.jumps.begin(), f.jumps.end());
    grid.insert(grid.end(), g.jumps.begin(), g.jumps.end());
    const double lo = std::min(f.lo, g.lo);
    const double hi = std::max(f.hi, g.hi);
    for (int k = 0; k < 2048; ++k)
        grid.push_back(lo + (hi - lo) * static_cast<double>(k) / 2047.0);

    double sup = 0.0;
    for (double x : grid) sup = std::max(sup, std::abs(f.cdf(x) - g.cdf(x)));
    return sup;
}

} // namespace rmtcorr
