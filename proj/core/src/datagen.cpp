#include "rmtcorr/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rmtcorr {

namespace {
constexpr double kSqrt3 = 1.7320508075688772935;
constexpr double kC1 = 1e-6;
constexpr double kC2 = 1e6;
} // namespace

EntryLaw EntryLaw::student_t(double nu) {
    if (!(nu > 4.0))
        throw std::invalid_argument("EntryLaw::student_t: nu must exceed 4, got " +
                                    std::to_string(nu));
    return EntryLaw(EntryLawKind::student_t, nu);
}

EntryLaw EntryLaw::pareto_sym(double alpha) {
    if (!(alpha > 2.0 && alpha < 4.0))
        throw std::invalid_argument("EntryLaw::pareto_sym: alpha must lie in (2,4), got " +
                                    std::to_string(alpha));
    return EntryLaw(EntryLawKind::pareto_sym, alpha);
}

double EntryLaw::sample(RandomStream& rng) const {
    switch (kind_) {
        case EntryLawKind::gaussian:
            return rng.next_gaussian();
        case EntryLawKind::rademacher:
            return rng.next_sign();
        case EntryLawKind::uniform:
            return (2.0 * rng.next_uniform() - 1.0) * kSqrt3;
        case EntryLawKind::student_t: {
            // Bailey's polar method, then standardized to unit variance.
            const double nu = param_;
            double u, v, w;
            do {
                u = 2.0 * rng.next_uniform() - 1.0;
                v = 2.0 * rng.next_uniform() - 1.0;
                w = u * u + v * v;
            } while (w > 1.0 || w == 0.0);
            const double t = u * std::sqrt(nu * std::expm1(-(2.0 / nu) * std::log(w)) / w);
            return t / std::sqrt(nu / (nu - 2.0));
        }
        case EntryLawKind::pareto_sym: {
            // sign * U^{-1/alpha}, scaled so the variance alpha/(alpha-2) becomes 1.
            const double alpha = param_;
            const double raw = std::pow(rng.next_uniform_pos(), -1.0 / alpha);
            return rng.next_sign() * raw / std::sqrt(alpha / (alpha - 2.0));
        }
    }
    throw std::logic_error("EntryLaw::sample: unreachable");
}

std::string EntryLaw::name() const {
    switch (kind_) {
        case EntryLawKind::gaussian: return "gaussian";
        case EntryLawKind::rademacher: return "rademacher";
        case EntryLawKind::uniform: return "uniform";
        case EntryLawKind::student_t: return "student_t";
        case EntryLawKind::pareto_sym: return "pareto_sym";
    }
    return "?";
}

EntryLaw EntryLaw::from_name(const std::string& name, double param) {
    if (name == "gaussian") return gaussian();
    if (name == "rademacher") return rademacher();
    if (name == "uniform") return uniform();
    if (name == "student_t") return student_t(param);
    if (name == "pareto_sym") return pareto_sym(param);
    throw std::invalid_argument("EntryLaw: unknown law '" + name + "'");
}

MixingSpec MixingSpec::identity(int p) {
    if (p < 1) throw std::invalid_argument("MixingSpec::identity: p must be >= 1");
    MixingSpec s;
    s.kind_ = MixingKind::identity;
    s.p_ = p;
    return s;
}

MixingSpec MixingSpec::ar1(int p, double rho) {
    if (p < 1) throw std::invalid_argument("MixingSpec::ar1: p must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0))
        throw std::invalid_argument("MixingSpec::ar1: rho must lie in [0,1), got " +
                                    std::to_string(rho));
    MixingSpec s;
    s.kind_ = MixingKind::ar1;
    s.p_ = p;
    s.rho_ = rho;
    return s;
}

MixingSpec MixingSpec::row_scaled(std::vector<double> scales) {
    if (scales.empty()) throw std::invalid_argument("MixingSpec::row_scaled: empty scales");
    for (size_t i = 0; i < scales.size(); ++i)
        if (!(scales[i] > 0.0) || !std::isfinite(scales[i]))
            throw std::invalid_argument("MixingSpec::row_scaled: scale " + std::to_string(i) +
                                        " must be positive and finite");
    MixingSpec s;
    s.kind_ = MixingKind::row_scaled;
    s.p_ = static_cast<int>(scales.size());
    s.scales_ = std::move(scales);
    return s;
}

MixingSpec MixingSpec::spiked(SymmetricMatrix lambda, int p) {
    const int m = lambda.dim();
    if (p < m) throw std::invalid_argument("MixingSpec::spiked: p smaller than Lambda block");
    for (int i = 0; i < m; ++i)
        if (std::abs(lambda(i, i) - 1.0) > 1e-12)
            throw std::invalid_argument("MixingSpec::spiked: diag(Lambda) != I at index " +
                                        std::to_string(i));
    const auto eig = sym_eigenvalues(lambda);
    if (eig.back() < -1e-10 * std::max(1.0, std::abs(eig.front())))
        throw std::invalid_argument("MixingSpec::spiked: Lambda not positive semidefinite "
                                    "(min eigenvalue " + std::to_string(eig.back()) + ")");
    MixingSpec s;
    s.kind_ = MixingKind::spiked;
    s.p_ = p;
    s.lambda_ = std::move(lambda);
    return s;
}

std::string MixingSpec::name() const {
    switch (kind_) {
        case MixingKind::identity: return "identity";
        case MixingKind::ar1: return "ar1";
        case MixingKind::row_scaled: return "row_scaled";
        case MixingKind::spiked: return "spiked";
    }
    return "?";
}

namespace {

// PSD square root via eigendecomposition; tiny negative eigenvalues clamp to 0.
SymmetricMatrix sym_sqrt(const SymmetricMatrix& m) {
    const auto ed = sym_eigen(m);
    const int p = m.dim();
    SymmetricMatrix r(p);
    std::vector<double> root(p);
    for (int k = 0; k < p; ++k) root[k] = std::sqrt(std::max(ed.eigenvalues[k], 0.0));
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            double s = 0.0;
            for (int k = 0; k < p; ++k)
                s += ed.eigenvectors(i, k) * root[k] * ed.eigenvectors(j, k);
            r.set(i, j, s);
        }
    }
    return r;
}

SymmetricMatrix sym_square(const SymmetricMatrix& a) {
    const int p = a.dim();
    const Matrix d = a.to_dense();
    SymmetricMatrix s(p);
    for (int i = 0; i < p; ++i) {
        const double* ri = d.row(i);
        for (int j = i; j < p; ++j) {
            const double* rj = d.row(j);
            double acc = 0.0;
            for (int k = 0; k < p; ++k) acc += ri[k] * rj[k];
            s.set(i, j, acc);
        }
    }
    return s;
}

SymmetricMatrix correlation_of(const SymmetricMatrix& sigma) {
    const int p = sigma.dim();
    std::vector<double> inv_sqrt(p);
    for (int i = 0; i < p; ++i) {
        const double d = sigma(i, i);
        if (!(d > 0.0))
            throw std::invalid_argument("build_A: Sigma has nonpositive diagonal at " +
                                        std::to_string(i));
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    SymmetricMatrix g(p);
    for (int i = 0; i < p; ++i) {
        g.set(i, i, 1.0);
        for (int j = i + 1; j < p; ++j) g.set(i, j, sigma(i, j) * inv_sqrt[i] * inv_sqrt[j]);
    }
    return g;
}

} // namespace

MixingMatrices build_A(const MixingSpec& spec) {
    const int p = spec.dim();
    MixingMatrices out{SymmetricMatrix(p), SymmetricMatrix(p), SymmetricMatrix(p), 0.0, 0.0};

    switch (spec.kind()) {
        case MixingKind::identity:
            out.A = SymmetricMatrix::identity(p);
            out.Sigma = out.A;
            out.Gamma = out.A;
            break;
        case MixingKind::ar1: {
            if (spec.rho() == 0.0) {
                out.A = SymmetricMatrix::identity(p);
                out.Sigma = out.A;
                out.Gamma = out.A;
                break;
            }
            SymmetricMatrix t(p);
            for (int i = 0; i < p; ++i)
                for (int j = i; j < p; ++j) t.set(i, j, std::pow(spec.rho(), j - i));
            out.A = sym_sqrt(t);
            out.Sigma = sym_square(out.A);
            out.Gamma = correlation_of(out.Sigma);
            break;
        }
        case MixingKind::row_scaled: {
            std::vector<double> sq(spec.scales());
            for (double& v : sq) v *= v;
            out.A = SymmetricMatrix::diagonal(spec.scales());
            out.Sigma = SymmetricMatrix::diagonal(sq);
            out.Gamma = SymmetricMatrix::identity(p);
            break;
        }
        case MixingKind::spiked: {
            const SymmetricMatrix& lam = spec.lambda();
            const int m = lam.dim();
            const SymmetricMatrix lam_root = sym_sqrt(lam);
            SymmetricMatrix gamma(p, 0.0);
            SymmetricMatrix a(p, 0.0);
            for (int i = 0; i < p; ++i) {
                gamma.set(i, i, 1.0);
                a.set(i, i, 1.0);
            }
            for (int i = 0; i < m; ++i) {
                for (int j = i; j < m; ++j) {
                    gamma.set(i, j, lam(i, j));
                    a.set(i, j, lam_root(i, j));
                }
            }
            out.A = a;
            out.Sigma = gamma; // unit-variance coordinates: Sigma == Gamma
            out.Gamma = gamma;
            break;
        }
    }

    double min_diag = out.Sigma(0, 0);
    for (int i = 1; i < p; ++i) min_diag = std::min(min_diag, out.Sigma(i, i));
    out.realized_min_diag = min_diag;
    out.realized_norm2 = spectral_norm(out.Sigma);

    if (!(min_diag > kC1))
        throw std::invalid_argument("build_A: min_i (AA')_ii = " + std::to_string(min_diag) +
                                    " violates the lower bound " + std::to_string(kC1));
    if (!(out.realized_norm2 <= kC2))
        throw std::invalid_argument("build_A: ||A||^2 = " + std::to_string(out.realized_norm2) +
                                    " exceeds the upper bound " + std::to_string(kC2));
    return out;
}

void DataModel::validate() const {
    if (p < 1) throw std::invalid_argument("DataModel: p must be >= 1");
    if (n < 2) throw std::invalid_argument("DataModel: n must be >= 2");
    if (mixing.dim() != p)
        throw std::invalid_argument("DataModel: mixing dimension " +
                                    std::to_string(mixing.dim()) + " != p = " + std::to_string(p));
}

Matrix sample_Z(const EntryLaw& law, int p, int n, RandomStream& rng) {
    if (p < 1 || n < 1) throw std::invalid_argument("sample_Z: p and n must be >= 1");
    Matrix z(p, n);
    for (int i = 0; i < p; ++i) {
        double* row = z.row(i);
        for (int t = 0; t < n; ++t) row[t] = law.sample(rng);
    }
    return z;
}

Matrix generate(const DataModel& model, const MixingMatrices& mats) {
    model.validate();
    RandomStream rng(model.seed);
    Matrix z = sample_Z(model.law, model.p, model.n, rng);

    switch (model.mixing.kind()) {
        case MixingKind::identity:
            return z;
        case MixingKind::row_scaled: {
            const auto& s = model.mixing.scales();
            for (int i = 0; i < model.p; ++i) {
                double* row = z.row(i);
                for (int t = 0; t < model.n; ++t) row[t] *= s[i];
            }
            return z;
        }
        default:
            return matmul(mats.A.to_dense(), z);
    }
}

Matrix generate(const DataModel& model) {
    model.validate();
    if (model.mixing.kind() == MixingKind::identity ||
        model.mixing.kind() == MixingKind::row_scaled) {
        MixingMatrices dummy{SymmetricMatrix(1), SymmetricMatrix(1), SymmetricMatrix(1), 0, 0};
        return generate(model, dummy);
    }
    return generate(model, build_A(model.mixing));
}

std::string DataModel::to_json_string() const {
    nlohmann::json j;
    j["law"] = law.name();
    nlohmann::json lp = nlohmann::json::object();
    if (law.kind() == EntryLawKind::student_t) lp["nu"] = law.param();
    if (law.kind() == EntryLawKind::pareto_sym) lp["alpha"] = law.param();
    j["law_params"] = lp;
    j["mixing"] = mixing.name();
    nlohmann::json mp = nlohmann::json::object();
    if (mixing.kind() == MixingKind::ar1) mp["rho"] = mixing.rho();
    if (mixing.kind() == MixingKind::row_scaled) mp["scales"] = mixing.scales();
    if (mixing.kind() == MixingKind::spiked) {
        const auto& lam = mixing.lambda();
        std::vector<std::vector<double>> rows(lam.dim(), std::vector<double>(lam.dim()));
        for (int i = 0; i < lam.dim(); ++i)
            for (int j = 0; j < lam.dim(); ++j) rows[i][j] = lam(i, j);
        mp["lambda"] = rows;
    }
    j["mixing_params"] = mp;
    j["p"] = p;
    j["n"] = n;
    j["seed"] = seed;
    return j.dump();
}

DataModel DataModel::from_json_string(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    DataModel m;
    m.p = j.at("p").get<int>();
    m.n = j.at("n").get<int>();
    m.seed = j.at("seed").get<uint64_t>();

    const std::string law = j.at("law").get<std::string>();
    const nlohmann::json lp = j.value("law_params", nlohmann::json::object());
    double param = 0.0;
    if (lp.contains("nu")) param = lp["nu"].get<double>();
    if (lp.contains("alpha")) param = lp["alpha"].get<double>();
    m.law = EntryLaw::from_name(law, param);

    const std::string mixing = j.at("mixing").get<std::string>();
    const nlohmann::json mp = j.value("mixing_params", nlohmann::json::object());
    if (mixing == "identity") {
        m.mixing = MixingSpec::identity(m.p);
    } else if (mixing == "ar1") {
        m.mixing = MixingSpec::ar1(m.p, mp.at("rho").get<double>());
    } else if (mixing == "row_scaled") {
        m.mixing = MixingSpec::row_scaled(mp.at("scales").get<std::vector<double>>());
    } else if (mixing == "spiked") {
        const auto rows = mp.at("lambda").get<std::vector<std::vector<double>>>();
        const int dim = static_cast<int>(rows.size());
        SymmetricMatrix lam(dim);
        for (int i = 0; i < dim; ++i) {
            if (static_cast<int>(rows[i].size()) != dim)
                throw std::invalid_argument("DataModel: lambda is not square");
            for (int jj = i; jj < dim; ++jj) lam.set(i, jj, rows[i][jj]);
        }
        m.mixing = MixingSpec::spiked(std::move(lam), m.p);
    } else {
        throw std::invalid_argument("DataModel: unknown mixing '" + mixing + "'");
    }
    m.validate();
    return m;
}

} // namespace rmtcorr
