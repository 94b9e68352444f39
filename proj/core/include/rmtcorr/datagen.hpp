#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmtcorr/matrix.hpp"
#include "rmtcorr/random.hpp"

namespace rmtcorr {

enum class EntryLawKind { gaussian, rademacher, uniform, student_t, pareto_sym };

/// Entry distribution for Z, standardized to mean 0 and variance 1.
/// gaussian / rademacher / uniform / student_t(nu > 4) have finite fourth
/// moment; pareto_sym(alpha in (2,4)) has infinite fourth moment by design
/// (regularly varying with index alpha) while keeping unit variance.
class EntryLaw {
public:
    static EntryLaw gaussian() { return EntryLaw(EntryLawKind::gaussian, 0.0); }
    static EntryLaw rademacher() { return EntryLaw(EntryLawKind::rademacher, 0.0); }
    static EntryLaw uniform() { return EntryLaw(EntryLawKind::uniform, 0.0); }
    static EntryLaw student_t(double nu);
    static EntryLaw pareto_sym(double alpha);

    EntryLawKind kind() const { return kind_; }
    double param() const { return param_; } ///< nu or alpha; 0 for parameterless laws
    bool finite_fourth_moment() const { return kind_ != EntryLawKind::pareto_sym; }

    double sample(RandomStream& rng) const;

    std::string name() const;
    static EntryLaw from_name(const std::string& name, double param);

private:
    EntryLaw(EntryLawKind k, double p) : kind_(k), param_(p) {}
    EntryLawKind kind_;
    double param_;
};

enum class MixingKind { identity, ar1, row_scaled, spiked };

/// Constructor spec for the mixing matrix A. All four variants yield a
/// symmetric A; ar1 takes the PSD square root of the Toeplitz matrix
/// T_ij = rho^|i-j|, spiked takes the square root of blockdiag(Lambda, I).
class MixingSpec {
public:
    MixingSpec() = default; ///< empty spec; DataModel::validate rejects it

    static MixingSpec identity(int p);
    static MixingSpec ar1(int p, double rho);
    static MixingSpec row_scaled(std::vector<double> scales);
    static MixingSpec spiked(SymmetricMatrix lambda, int p);

    MixingKind kind() const { return kind_; }
    int dim() const { return p_; }
    double rho() const { return rho_; }
    const std::vector<double>& scales() const { return scales_; }
    const SymmetricMatrix& lambda() const { return lambda_; }

    std::string name() const;

private:
    MixingKind kind_ = MixingKind::identity;
    int p_ = 0;
    double rho_ = 0.0;
    std::vector<double> scales_;
    SymmetricMatrix lambda_;
};

/// A plus the population matrices it induces, with the realized constants of
/// the boundedness assumption c1 < min_i Sigma_ii and ||A||^2 <= c2.
struct MixingMatrices {
    SymmetricMatrix A;
    SymmetricMatrix Sigma;      ///< A A'
    SymmetricMatrix Gamma;      ///< (diag Sigma)^{-1/2} Sigma (diag Sigma)^{-1/2}
    double realized_min_diag;   ///< min_i Sigma_ii
    double realized_norm2;      ///< ||A||^2 = spectral_norm(Sigma)
};

/// Builds A, Sigma, Gamma from the spec. Verifies the boundedness assumption
/// with c1 = 1e-6, c2 = 1e6 and reports the realized values.
MixingMatrices build_A(const MixingSpec& spec);

/// Full generative specification of X = A Z.
struct DataModel {
    EntryLaw law = EntryLaw::gaussian();
    MixingSpec mixing;
    int p = 0;
    int n = 0;
    uint64_t seed = 0;

    void validate() const; ///< throws std::invalid_argument with the offending field

    /// JSON document {law, law_params, mixing, mixing_params, p, n, seed}.
    std::string to_json_string() const;
    static DataModel from_json_string(const std::string& text);
};

/// p x n matrix of iid draws from `law`, filled row by row.
Matrix sample_Z(const EntryLaw& law, int p, int n, RandomStream& rng);

/// X = A Z for the model, seeded from model.seed. Identity and row_scaled
/// mixings scale rows directly so X equals Z (or diag(s) Z) bit-exactly.
Matrix generate(const DataModel& model);
Matrix generate(const DataModel& model, const MixingMatrices& mats);

} // namespace rmtcorr
