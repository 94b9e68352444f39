#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmtcorr/lsd.hpp"
#include "rmtcorr/matrix.hpp"

namespace rmtcorr {

struct Spike {
    double alpha;
    int multiplicity;
};

/// Generalized spiked correlation model: spike values with multiplicities on
/// top of a bulk measure H, at aspect ratio gamma, instantiated at dimension
/// p. For an atomic H the support is the atom set; callers modelling a
/// continuous bulk can supply an interval hull instead.
struct SpikedModel {
    std::vector<Spike> spikes;
    AtomicMeasure bulk = AtomicMeasure::dirac(1.0);
    double gamma = 0.0;
    int p = 0;
    std::optional<std::pair<double, double>> bulk_hull;

    bool in_bulk_support(double alpha) const;
};

/// psi(alpha) = alpha + gamma sum_j w_j t_j alpha / (alpha - t_j).
/// alpha must stay at least 1e-9 away from every atom of h.
double psi(double alpha, double gamma, const AtomicMeasure& h);

/// psi'(alpha) = 1 - gamma sum_j w_j t_j^2 / (alpha - t_j)^2.
double psi_prime(double alpha, double gamma, const AtomicMeasure& h);

/// Detectability window for H = delta_1: spikes outside (1-sqrt(gamma),
/// 1+sqrt(gamma)) are detectable.
std::pair<double, double> spike_threshold_delta1(double gamma);

struct SpikePrediction {
    double alpha;
    int multiplicity;
    int rank_begin;         ///< 1-based; the spike occupies ranks rank_begin..rank_begin+mult-1
    bool detectable;        ///< psi'(alpha) > 0
    double predicted_limit; ///< psi(alpha) if detectable, else the H(alpha)-quantile of the law
    bool skipped_in_bulk;   ///< alpha lies in supp(H): not a spike, no prediction
};

/// Per-spike almost-sure limits of the paired sample eigenvalues. `law` must
/// be the limiting spectral distribution for (gamma, H); it supplies the
/// quantile for non-detectable spikes.
std::vector<SpikePrediction> classify_spikes(const SpikedModel& model, const LimitLaw& law);

/// A correlation block realizing the requested spikes: eigenvalues are the
/// spikes plus, when the spike trace differs from the block trace, balance
/// eigenvalues placed inside the non-detectable zone around the bulk.
struct SpikeInstantiation {
    SymmetricMatrix lambda;               ///< m_blk x m_blk, unit diagonal
    std::vector<Spike> all_spikes;        ///< requested spikes plus any balance values
    int padding_count = 0;
    double padding_value = 0.0;
    double max_eigenvalue_perturbation = 0.0; ///< realized vs prescribed spectrum
    int attempts = 1;
};

/// Builds Lambda with the prescribed spectrum and unit diagonal: a fixed
/// pseudo-random orthogonal conjugation followed by trace-preserving Givens
/// rotations that pin each diagonal entry to 1, then a diagonal
/// renormalization. Retries with a fresh rotation if the realized eigenvalue
/// perturbation exceeds 1e-6.
SpikeInstantiation build_spike_block(const std::vector<Spike>& spikes, double gamma,
                                     const AtomicMeasure& bulk, uint64_t rotation_seed);

/// CSV table: alpha,multiplicity,detectable,predicted_limit,mc_mean,mc_sd.
/// mc columns may be NaN when no Monte Carlo run accompanies the prediction.
std::string predictions_csv(const std::vector<SpikePrediction>& preds,
                            const std::vector<double>& mc_mean,
                            const std::vector<double>& mc_sd);

} // namespace rmtcorr
