#include "rmtcorr/spiked.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rmtcorr/random.hpp"

namespace rmtcorr {

namespace {
constexpr double kSupportTol = 1e-9;
}

bool SpikedModel::in_bulk_support(double alpha) const {
    if (bulk_hull)
        return alpha >= bulk_hull->first - kSupportTol && alpha <= bulk_hull->second + kSupportTol;
    return bulk.distance_to_support(alpha) <= kSupportTol;
}

double psi(double alpha, double gamma, const AtomicMeasure& h) {
    if (h.distance_to_support(alpha) <= kSupportTol)
        throw std::invalid_argument("psi: alpha = " + std::to_string(alpha) +
                                    " lies on an atom of H");
    double acc = 0.0;
    for (int j = 0; j < h.size(); ++j) {
        const double t = h.locations()[j];
        acc += h.weights()[j] * t * alpha / (alpha - t);
    }
    return alpha + gamma * acc;
}

double psi_prime(double alpha, double gamma, const AtomicMeasure& h) {
    if (h.distance_to_support(alpha) <= kSupportTol)
        throw std::invalid_argument("psi_prime: alpha = " + std::to_string(alpha) +
                                    " lies on an atom of H");
    double acc = 0.0;
    for (int j = 0; j < h.size(); ++j) {
        const double t = h.locations()[j];
        const double d = alpha - t;
        acc += h.weights()[j] * t * t / (d * d);
    }
    return 1.0 - gamma * acc;
}

std::pair<double, double> spike_threshold_delta1(double gamma) {
    if (!(gamma > 0.0))
        throw std::invalid_argument("spike_threshold_delta1: gamma must be positive");
    const double r = std::sqrt(gamma);
    return {1.0 - r, 1.0 + r};
}

std::vector<SpikePrediction> classify_spikes(const SpikedModel& model, const LimitLaw& law) {
    if (model.spikes.empty()) return {};
    if (!(model.gamma > 0.0)) throw std::invalid_argument("classify_spikes: gamma must be positive");
    int m_total = 0;
    for (const auto& s : model.spikes) {
        if (s.multiplicity < 1)
            throw std::invalid_argument("classify_spikes: multiplicities must be positive");
        m_total += s.multiplicity;
    }
    if (m_total >= model.p)
        throw std::invalid_argument("classify_spikes: spikes do not fit below p");

    std::vector<SpikePrediction> out;
    out.reserve(model.spikes.size());
    for (const auto& s : model.spikes) {
        SpikePrediction pred{};
        pred.alpha = s.alpha;
        pred.multiplicity = s.multiplicity;
        if (model.in_bulk_support(s.alpha)) {
            pred.skipped_in_bulk = true;
            pred.detectable = false;
            pred.predicted_limit = std::numeric_limits<double>::quiet_NaN();
            pred.rank_begin = 0;
            out.push_back(pred);
            continue;
        }
        pred.skipped_in_bulk = false;
        pred.detectable = psi_prime(s.alpha, model.gamma, model.bulk) > 0.0;
        pred.predicted_limit = pred.detectable
                                   ? psi(s.alpha, model.gamma, model.bulk)
                                   : quantile(law, model.bulk.cdf(s.alpha));
        // nu_i: spike eigenvalues above alpha plus the share of bulk eigenvalues above.
        int nu = 0;
        for (const auto& other : model.spikes)
            if (&other != &s && other.alpha > s.alpha) nu += other.multiplicity;
        const double bulk_above = (1.0 - model.bulk.cdf(s.alpha)) *
                                  static_cast<double>(model.p - m_total);
        nu += static_cast<int>(std::llround(bulk_above));
        pred.rank_begin = nu + 1;
        out.push_back(pred);
    }
    return out;
}

namespace {

// Orthogonal matrix from the QR factorization of a seeded gaussian matrix
// (modified Gram-Schmidt).
Matrix random_orthogonal(int m, RandomStream& rng) {
    Matrix q(m, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) q(i, j) = rng.next_gaussian();
    for (int j = 0; j < m; ++j) {
        for (int k = 0; k < j; ++k) {
            double dot = 0.0;
            for (int i = 0; i < m; ++i) dot += q(i, k) * q(i, j);
            for (int i = 0; i < m; ++i) q(i, j) -= dot * q(i, k);
        }
        double norm = 0.0;
        for (int i = 0; i < m; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("random_orthogonal: degenerate draw");
        for (int i = 0; i < m; ++i) q(i, j) /= norm;
    }
    return q;
}

// Trace-preserving Givens pass: each rotation pins one diagonal entry to 1
// while leaving previously pinned entries untouched (Bendel-Mickey style).
void pin_unit_diagonal(Matrix& a) {
    const int m = a.rows();
    std::vector<char> fixed(m, 0);
    for (int round = 0; round < m - 1; ++round) {
        int lo = -1;
        int hi = -1;
        for (int i = 0; i < m; ++i) {
            if (fixed[i]) continue;
            if (std::abs(a(i, i) - 1.0) <= 1e-13) {
                fixed[i] = 1;
                continue;
            }
            if (a(i, i) < 1.0 && lo < 0) lo = i;
            if (a(i, i) > 1.0 && hi < 0) hi = i;
        }
        if (lo < 0 || hi < 0) break; // all remaining diagonals are already 1
        const int i = lo;
        const int j = hi;
        const double av = a(i, i);
        const double bv = a(j, j);
        const double cv = a(i, j);
        // choose t so the rotated (i,i) entry becomes exactly 1:
        // t^2 (b-1) + 2 c t + (a-1) = 0, discriminant > 0 since (a-1)(b-1) < 0
        const double disc = std::sqrt(cv * cv - (av - 1.0) * (bv - 1.0));
        const double q = -(cv + (cv >= 0.0 ? disc : -disc));
        double t;
        if (std::abs(q) > std::abs(bv - 1.0)) {
            t = (av - 1.0) / q;
        } else {
            t = q / (bv - 1.0);
        }
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * cs;
        for (int k = 0; k < m; ++k) {
            const double aki = a(k, i);
            const double akj = a(k, j);
            a(k, i) = cs * aki + sn * akj;
            a(k, j) = -sn * aki + cs * akj;
        }
        for (int k = 0; k < m; ++k) {
            const double aik = a(i, k);
            const double ajk = a(j, k);
            a(i, k) = cs * aik + sn * ajk;
            a(j, k) = -sn * aik + cs * ajk;
        }
        a(i, i) = 1.0;
        fixed[i] = 1;
    }
}

} // namespace

SpikeInstantiation build_spike_block(const std::vector<Spike>& spikes, double gamma,
                                     const AtomicMeasure& bulk, uint64_t rotation_seed) {
    if (spikes.empty()) throw std::invalid_argument("build_spike_block: no spikes given");
    if (!(gamma > 0.0)) throw std::invalid_argument("build_spike_block: gamma must be positive");
    double excess = 0.0;
    int m_spike = 0;
    for (const auto& s : spikes) {
        if (s.multiplicity < 1)
            throw std::invalid_argument("build_spike_block: multiplicities must be positive");
        if (s.alpha < 0.0)
            throw std::invalid_argument("build_spike_block: spikes must be nonnegative");
        excess += (s.alpha - 1.0) * s.multiplicity;
        m_spike += s.multiplicity;
    }

    SpikeInstantiation inst;
    inst.all_spikes = spikes;

    // Unit diagonal forces trace(Lambda) = m_blk; any spike trace excess is
    // absorbed by balance eigenvalues in the non-detectable zone around the
    // bulk (psi' <= 0), so they perturb neither lambda_1 nor the target ranks.
    if (std::abs(excess) > 1e-12) {
        const double half_zone = 0.5 * std::sqrt(gamma);
        int r = std::max(1, static_cast<int>(std::ceil(std::abs(excess) / half_zone)));
        bool placed = false;
        for (; r <= 4096; ++r) {
            const double v = 1.0 - excess / static_cast<double>(r);
            if (v < 0.0) continue;
            if (bulk.distance_to_support(v) <= kSupportTol) continue;
            if (psi_prime(v, gamma, bulk) > 0.0) continue;
            inst.padding_count = r;
            inst.padding_value = v;
            inst.all_spikes.push_back(Spike{v, r});
            placed = true;
            break;
        }
        if (!placed)
            throw std::runtime_error("build_spike_block: could not place balance eigenvalues "
                                     "inside the non-detectable zone");
    }

    std::vector<double> eigs;
    for (const auto& s : inst.all_spikes)
        for (int k = 0; k < s.multiplicity; ++k) eigs.push_back(s.alpha);
    std::sort(eigs.begin(), eigs.end(), std::greater<>());
    const int m = static_cast<int>(eigs.size());

    if (m == 1) {
        // Only possible when the single spike equals 1 exactly.
        inst.lambda = SymmetricMatrix::identity(1);
        inst.max_eigenvalue_perturbation = std::abs(eigs[0] - 1.0);
        return inst;
    }

    for (int attempt = 0; attempt < 8; ++attempt) {
        RandomStream rng = RandomStream::substream(rotation_seed, attempt);
        const Matrix q = random_orthogonal(m, rng);
        Matrix a(m, m, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int k = 0; k < m; ++k) s += q(i, k) * eigs[k] * q(j, k);
                a(i, j) = s;
            }
        pin_unit_diagonal(a);

        // Final renormalization pins the diagonal exactly; the scaling is a
        // 1 + O(1e-13) perturbation after the Givens pass.
        std::vector<double> d(m);
        for (int i = 0; i < m; ++i) d[i] = 1.0 / std::sqrt(a(i, i));
        SymmetricMatrix lam(m);
        for (int i = 0; i < m; ++i) {
            lam.set(i, i, 1.0);
            for (int j = i + 1; j < m; ++j)
                lam.set(i, j, 0.5 * (a(i, j) + a(j, i)) * d[i] * d[j]);
        }

        const auto realized = sym_eigenvalues(lam);
        double perturbation = 0.0;
        for (int i = 0; i < m; ++i)
            perturbation = std::max(perturbation, std::abs(realized[i] - eigs[i]));
        if (perturbation < 1e-6) {
            inst.lambda = lam;
            inst.max_eigenvalue_perturbation = perturbation;
            inst.attempts = attempt + 1;
            return inst;
        }
    }
    throw std::runtime_error("build_spike_block: eigenvalue perturbation stayed above 1e-6 "
                             "after 8 rotation attempts");
}

std::string predictions_csv(const std::vector<SpikePrediction>& preds,
                            const std::vector<double>& mc_mean,
                            const std::vector<double>& mc_sd) {
    std::string out = "alpha,multiplicity,detectable,predicted_limit,mc_mean,mc_sd\n";
    char buf[160];
    for (size_t k = 0; k < preds.size(); ++k) {
        const double mean = k < mc_mean.size() ? mc_mean[k] : std::nan("");
        const double sd = k < mc_sd.size() ? mc_sd[k] : std::nan("");
        std::snprintf(buf, sizeof(buf), "%.17g,%d,%d,%.17g,%.17g,%.17g\n", preds[k].alpha,
                      preds[k].multiplicity, preds[k].detectable ? 1 : 0,
                      preds[k].predicted_limit, mean, sd);
        out += buf;
    }
    return out;
}

} // namespace rmtcorr
