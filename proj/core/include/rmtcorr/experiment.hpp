#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmtcorr/datagen.hpp"
#include "rmtcorr/lsd.hpp"
#include "rmtcorr/spiked.hpp"

namespace rmtcorr {

enum class ExperimentKind {
    diag_compare,
    lsd_check,
    extremes,
    threshold,
    spectrum_estimate,
    spiked
};

std::string experiment_name(ExperimentKind k);

struct Band {
    double lo;
    double hi;
};

/// Spec for the limit law a config references (lsd-check comparison target,
/// spiked quantile fallback).
struct LawSpec {
    LawKind kind = LawKind::mp;
    double gamma = 0.5;
    std::vector<std::pair<double, double>> h_atoms; ///< empty = delta_1
    double eta = 1e-4;
    std::optional<GridSpec> grid; ///< absent = default_grid

    AtomicMeasure measure() const;
    LimitLaw build() const;
};

/// One experiment batch: a data model, a replication count, a master seed,
/// experiment-specific parameters and optional acceptance bands over the
/// summary statistics.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::extremes;
    DataModel model;
    int reps = 1;
    uint64_t master_seed = 0;
    std::string output_path; ///< may be overridden on the command line

    // diag-compare
    std::vector<int> n_grid; ///< defaults to {model.n}
    // lsd-check / spiked
    std::optional<LawSpec> law;
    // extremes
    bool use_correlation = true; ///< false compares S instead of R
    // threshold
    double threshold_M = 2.1;
    // spectrum-estimate
    int ell = 6;
    double recon_resolution = 0.02;
    double recon_hi = 0.0; ///< 0 = auto
    // spiked
    std::vector<Spike> spikes;
    uint64_t rotation_seed = 1;

    std::map<std::string, Band> bands;

    void validate() const; ///< throws std::invalid_argument naming the field
    /// Summary statistic names this config will produce (valid band targets).
    std::vector<std::string> stat_names() const;
};

/// Parses and validates a config JSON document. Messages name the offending
/// field.
ExperimentConfig parse_config(const std::string& json_text);

/// Parses an H-atoms document {"atoms": [[t, w], ...]}.
std::vector<std::pair<double, double>> parse_h_atoms(const std::string& json_text);

/// Applies a `key=value` override with a dotted path into the config JSON
/// (e.g. "params.M=2.5", "model.n=1000"). Values parse as JSON when possible,
/// as strings otherwise.
std::string apply_override(const std::string& json_text, const std::string& assignment);

struct ExperimentResult {
    std::string csv;          ///< one row per replication cell, deterministic bytes
    std::string summary_json; ///< means, standard errors, band checks
    std::string predictions_csv; ///< spiked experiment only, else empty
    std::map<std::string, double> stats;
    std::vector<std::string> messages; ///< per-band pass/fail lines
    std::vector<std::string> errors;   ///< per-replication failures (batch continues)
    bool bands_pass = true;
    int exit_code = 0; ///< 0 ok, 2 band violation
};

/// Runs the batch with `jobs` worker threads (<=1 = serial). Output bytes are
/// independent of the worker count; every row carries its substream seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1);

/// Replication-level worker pool used by run_experiment; fn(i) must only
/// touch slot i of its output.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

} // namespace rmtcorr
