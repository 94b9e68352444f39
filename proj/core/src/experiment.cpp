#include "rmtcorr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "rmtcorr/estimators.hpp"
#include "rmtcorr/sample_stats.hpp"

namespace rmtcorr {

namespace {

std::string fd(double v) {
    char b[40];
    std::snprintf(b, sizeof(b), "%.17g", v);
    return b;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double se_of(const std::vector<double>& v) {
    return sd_of(v) / std::sqrt(static_cast<double>(v.size()));
}

Matrix prefix_cols(const Matrix& x, int n) {
    Matrix out(x.rows(), n);
    for (int i = 0; i < x.rows(); ++i) {
        const double* src = x.row(i);
        double* dst = out.row(i);
        for (int t = 0; t < n; ++t) dst[t] = src[t];
    }
    return out;
}

DataModel model_for_rep(const DataModel& base, uint64_t master_seed, int rep) {
    DataModel m = base;
    m.seed = RandomStream::substream_seed(master_seed, static_cast<uint64_t>(rep));
    return m;
}

} // namespace

std::string experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::diag_compare: return "diag-compare";
        case ExperimentKind::lsd_check: return "lsd-check";
        case ExperimentKind::extremes: return "extremes";
        case ExperimentKind::threshold: return "threshold";
        case ExperimentKind::spectrum_estimate: return "spectrum-estimate";
        case ExperimentKind::spiked: return "spiked";
    }
    return "?";
}

namespace {

ExperimentKind kind_from_name(const std::string& name) {
    if (name == "diag-compare") return ExperimentKind::diag_compare;
    if (name == "lsd-check") return ExperimentKind::lsd_check;
    if (name == "extremes") return ExperimentKind::extremes;
    if (name == "threshold") return ExperimentKind::threshold;
    if (name == "spectrum-estimate") return ExperimentKind::spectrum_estimate;
    if (name == "spiked") return ExperimentKind::spiked;
    throw std::invalid_argument("config field 'experiment': unknown value '" + name + "'");
}

LawKind law_kind_from_name(const std::string& name) {
    if (name == "mp") return LawKind::mp;
    if (name == "semicircle") return LawKind::semicircle;
    if (name == "general") return LawKind::general;
    if (name == "general_zero_gamma" || name == "general-zero-gamma")
        return LawKind::general_zero_gamma;
    throw std::invalid_argument("law field 'kind': unknown value '" + name + "'");
}

} // namespace

AtomicMeasure LawSpec::measure() const {
    if (h_atoms.empty()) return AtomicMeasure::dirac(1.0);
    std::vector<double> t;
    std::vector<double> w;
    for (const auto& [loc, wgt] : h_atoms) {
        t.push_back(loc);
        w.push_back(wgt);
    }
    return AtomicMeasure(std::move(t), std::move(w));
}

LimitLaw LawSpec::build() const {
    const AtomicMeasure h = measure();
    const GridSpec g = grid ? *grid : default_grid(kind, gamma, h);
    return law_from_stieltjes(kind, gamma, h, g, eta);
}

void ExperimentConfig::validate() const {
    model.validate();
    if (reps < 1) throw std::invalid_argument("config field 'reps': must be >= 1");
    switch (kind) {
        case ExperimentKind::diag_compare: {
            if (n_grid.empty()) break;
            for (int n : n_grid)
                if (n < 2) throw std::invalid_argument("config field 'params.n_grid': n must be >= 2");
            if (!std::is_sorted(n_grid.begin(), n_grid.end()))
                throw std::invalid_argument("config field 'params.n_grid': must be ascending");
            if (n_grid.back() != model.n)
                throw std::invalid_argument(
                    "config field 'params.n_grid': largest entry must equal model.n (the "
                    "replication sample is generated once and evaluated on column prefixes)");
            break;
        }
        case ExperimentKind::lsd_check:
            if (!law) throw std::invalid_argument("config field 'params.law': required for lsd-check");
            if ((law->kind == LawKind::mp || law->kind == LawKind::general) && !(law->gamma > 0.0))
                throw std::invalid_argument("config field 'params.law.gamma': must be positive");
            break;
        case ExperimentKind::extremes:
            break;
        case ExperimentKind::threshold:
            if (model.p < 2) throw std::invalid_argument("config field 'model.p': threshold needs p >= 2");
            if (!(threshold_M > 0.0))
                throw std::invalid_argument("config field 'params.M': must be positive");
            break;
        case ExperimentKind::spectrum_estimate:
            if (ell < 2 || ell > 8)
                throw std::invalid_argument("config field 'params.ell': must lie in [2, 8]");
            if (model.n < ell)
                throw std::invalid_argument("config field 'model.n': need n >= ell");
            if (!(recon_resolution > 0.0))
                throw std::invalid_argument("config field 'params.resolution': must be positive");
            break;
        case ExperimentKind::spiked: {
            if (spikes.empty())
                throw std::invalid_argument("config field 'params.spikes': required for spiked");
            for (const auto& s : spikes) {
                if (s.multiplicity < 1)
                    throw std::invalid_argument("config field 'params.spikes': mult must be >= 1");
                if (!(s.alpha >= 0.0))
                    throw std::invalid_argument("config field 'params.spikes': alpha must be >= 0");
            }
            if (model.mixing.kind() != MixingKind::identity)
                throw std::invalid_argument(
                    "config field 'model.mixing': must be 'identity' for spiked (the mixing is "
                    "derived from params.spikes)");
            break;
        }
    }
    const auto names = stat_names();
    for (const auto& [name, band] : bands) {
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw std::invalid_argument("config field 'bands." + name +
                                        "': not a statistic of this experiment");
        if (!(band.lo <= band.hi))
            throw std::invalid_argument("config field 'bands." + name + "': lo must be <= hi");
    }
}

std::vector<std::string> ExperimentConfig::stat_names() const {
    std::vector<std::string> s;
    switch (kind) {
        case ExperimentKind::diag_compare: {
            std::vector<int> grid = n_grid.empty() ? std::vector<int>{model.n} : n_grid;
            for (int n : grid) {
                const std::string suffix = "_n" + std::to_string(n);
                s.push_back("mean_diag_gap" + suffix);
                s.push_back("se_diag_gap" + suffix);
                s.push_back("mean_inv_sqrt_gap" + suffix);
                s.push_back("mean_r_vs_q_gap" + suffix);
            }
            if (grid.size() >= 2) {
                s.push_back("frac_diag_gap_increased");
                s.push_back("diag_gap_monotone_decreasing");
            }
            break;
        }
        case ExperimentKind::lsd_check:
            s = {"mean_ks", "se_ks", "max_ks"};
            break;
        case ExperimentKind::extremes:
            s = {"mean_top_scaled",    "sd_top_scaled",    "se_top_scaled",
                 "mean_bottom_scaled", "sd_bottom_scaled", "se_bottom_scaled"};
            break;
        case ExperimentKind::threshold:
            s = {"t_p",
                 "frac_improved",
                 "frac_offdiag_zeroed",
                 "mean_max_offdiag_scaled",
                 "se_max_offdiag_scaled",
                 "mean_norm_R_minus_Gamma",
                 "mean_norm_Rhat_minus_Gamma"};
            break;
        case ExperimentKind::spectrum_estimate:
            s = {"mean_l1_error", "se_l1_error", "max_l1_error", "mean_residual"};
            break;
        case ExperimentKind::spiked:
            for (size_t k = 0; k < spikes.size(); ++k) {
                const std::string suffix = "_spike" + std::to_string(k);
                s.push_back("predicted" + suffix);
                s.push_back("mc_mean" + suffix);
                s.push_back("mc_sd" + suffix);
                s.push_back("abs_err" + suffix);
            }
            break;
    }
    return s;
}

ExperimentConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    if (!j.contains("experiment"))
        throw std::invalid_argument("config field 'experiment': missing");
    cfg.kind = kind_from_name(j["experiment"].get<std::string>());
    if (!j.contains("model")) throw std::invalid_argument("config field 'model': missing");
    cfg.model = DataModel::from_json_string(j["model"].dump());
    cfg.reps = j.value("reps", 1);
    cfg.master_seed = j.value("master_seed", uint64_t{0});
    cfg.output_path = j.value("output", std::string{});

    const nlohmann::json params = j.value("params", nlohmann::json::object());
    auto parse_law = [](const nlohmann::json& lj) {
        LawSpec spec;
        spec.kind = law_kind_from_name(lj.value("kind", std::string("mp")));
        spec.gamma = lj.value("gamma", 0.5);
        if (lj.contains("H"))
            for (const auto& atom : lj["H"])
                spec.h_atoms.emplace_back(atom.at(0).get<double>(), atom.at(1).get<double>());
        spec.eta = lj.value("eta", 1e-4);
        if (lj.contains("grid")) {
            const auto& g = lj["grid"];
            spec.grid = GridSpec{g.at("lo").get<double>(), g.at("hi").get<double>(),
                                 g.value("count", 2001)};
        }
        return spec;
    };

    switch (cfg.kind) {
        case ExperimentKind::diag_compare:
            if (params.contains("n_grid"))
                cfg.n_grid = params["n_grid"].get<std::vector<int>>();
            break;
        case ExperimentKind::lsd_check:
            if (params.contains("law")) cfg.law = parse_law(params["law"]);
            break;
        case ExperimentKind::extremes:
            cfg.use_correlation = params.value("matrix", std::string("R")) != "S";
            break;
        case ExperimentKind::threshold:
            cfg.threshold_M = params.value("M", 2.1);
            break;
        case ExperimentKind::spectrum_estimate:
            cfg.ell = params.value("ell", 6);
            cfg.recon_resolution = params.value("resolution", 0.02);
            cfg.recon_hi = params.value("grid_hi", 0.0);
            break;
        case ExperimentKind::spiked:
            if (params.contains("spikes"))
                for (const auto& sp : params["spikes"])
                    cfg.spikes.push_back(
                        Spike{sp.at("alpha").get<double>(), sp.value("mult", 1)});
            cfg.rotation_seed = params.value("rotation_seed", uint64_t{1});
            if (params.contains("law")) cfg.law = parse_law(params["law"]);
            break;
    }

    if (j.contains("bands")) {
        for (const auto& [name, bj] : j["bands"].items()) {
            const double lo = bj.contains("lo") ? bj["lo"].get<double>()
                                                : -std::numeric_limits<double>::infinity();
            const double hi = bj.contains("hi") ? bj["hi"].get<double>()
                                                : std::numeric_limits<double>::infinity();
            cfg.bands[name] = Band{lo, hi};
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<std::pair<double, double>> parse_h_atoms(const std::string& json_text) {
    const nlohmann::json j = nlohmann::json::parse(json_text);
    std::vector<std::pair<double, double>> atoms;
    for (const auto& atom : j.at("atoms"))
        atoms.emplace_back(atom.at(0).get<double>(), atom.at(1).get<double>());
    return atoms;
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("--set expects key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json j = nlohmann::json::parse(json_text);
    nlohmann::json* node = &j;
    size_t start = 0;
    std::vector<std::string> keys;
    while (true) {
        const auto dot = path.find('.', start);
        keys.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (size_t k = 0; k + 1 < keys.size(); ++k) node = &((*node)[keys[k]]);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
        parsed = value;
    }
    (*node)[keys.back()] = parsed;
    return j.dump();
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    const int workers = std::min(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

namespace {

struct RepSlot {
    bool ok = true;
    std::string error;
    std::vector<std::string> rows;
    std::vector<double> values; ///< experiment-specific layout
};

// Runs fn over replications, capturing per-rep failures without aborting.
std::vector<RepSlot> run_reps(int reps, int jobs,
                              const std::function<void(int, RepSlot&)>& fn) {
    std::vector<RepSlot> slots(reps);
    parallel_for(reps, jobs, [&](int r) {
        try {
            fn(r, slots[r]);
        } catch (const std::exception& e) {
            slots[r].ok = false;
            slots[r].error = e.what();
        }
    });
    return slots;
}

std::string csv_prefix(const ExperimentConfig& cfg, int rep) {
    return experiment_name(cfg.kind) + "," + std::to_string(rep) + "," +
           std::to_string(RandomStream::substream_seed(cfg.master_seed, rep));
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    ExperimentResult res;
    std::map<std::string, double>& stats = res.stats;
    std::string header;
    std::vector<RepSlot> slots;

    const int p = cfg.model.p;
    const int n = cfg.model.n;

    switch (cfg.kind) {
        case ExperimentKind::diag_compare: {
            header = "experiment,rep,substream_seed,status,p,n,gamma_hat,diag_gap,inv_sqrt_gap,"
                     "r_vs_q_gap";
            const std::vector<int> grid = cfg.n_grid.empty() ? std::vector<int>{n} : cfg.n_grid;
            const MixingMatrices mats = build_A(cfg.model.mixing);
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(cfg.model, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                for (int ng : grid) {
                    const Matrix xn = ng == m.n ? x : prefix_cols(x, ng);
                    const ComparisonReport rep = comparison_report(xn, mats.Sigma);
                    slot.rows.push_back(csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                                        std::to_string(ng) + "," + fd(rep.gamma_hat) + "," +
                                        fd(rep.diag_gap) + "," + fd(rep.inv_sqrt_gap) + "," +
                                        fd(rep.r_vs_q_gap));
                    slot.values.push_back(rep.diag_gap);
                    slot.values.push_back(rep.inv_sqrt_gap);
                    slot.values.push_back(rep.r_vs_q_gap);
                }
            });
            const size_t gn = grid.size();
            std::vector<std::vector<double>> diag(gn), inv(gn), rq(gn);
            for (const auto& slot : slots) {
                if (!slot.ok) continue;
                for (size_t g = 0; g < gn; ++g) {
                    diag[g].push_back(slot.values[3 * g]);
                    inv[g].push_back(slot.values[3 * g + 1]);
                    rq[g].push_back(slot.values[3 * g + 2]);
                }
            }
            for (size_t g = 0; g < gn; ++g) {
                const std::string sfx = "_n" + std::to_string(grid[g]);
                stats["mean_diag_gap" + sfx] = mean_of(diag[g]);
                stats["se_diag_gap" + sfx] = se_of(diag[g]);
                stats["mean_inv_sqrt_gap" + sfx] = mean_of(inv[g]);
                stats["mean_r_vs_q_gap" + sfx] = mean_of(rq[g]);
            }
            if (gn >= 2) {
                int increased = 0;
                int total = 0;
                for (const auto& slot : slots) {
                    if (!slot.ok) continue;
                    ++total;
                    if (slot.values[3 * (gn - 1)] > slot.values[0]) ++increased;
                }
                stats["frac_diag_gap_increased"] =
                    total ? static_cast<double>(increased) / total
                          : std::numeric_limits<double>::quiet_NaN();
                bool monotone = true;
                for (size_t g = 1; g < gn; ++g)
                    if (!(mean_of(diag[g]) < mean_of(diag[g - 1]))) monotone = false;
                stats["diag_gap_monotone_decreasing"] = monotone ? 1.0 : 0.0;
            }
            break;
        }

        case ExperimentKind::lsd_check: {
            header = "experiment,rep,substream_seed,status,p,n,ks_distance";
            const MixingMatrices mats = build_A(cfg.model.mixing);
            const LimitLaw law = cfg.law->build();
            const bool zero_gamma = law.kind == LawKind::semicircle ||
                                    law.kind == LawKind::general_zero_gamma;
            const CdfView law_cdf = cdf_view(law);
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(cfg.model, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                const SymmetricMatrix rmat = sample_correlation(sample_covariance(x));
                std::vector<double> eig;
                if (zero_gamma) {
                    const double scale =
                        std::sqrt(static_cast<double>(m.n) / static_cast<double>(m.p));
                    eig = sym_eigenvalues(sym_scale(sym_add(rmat, mats.Gamma, -1.0), scale));
                } else {
                    eig = sym_eigenvalues(rmat);
                }
                const EmpiricalSpectralDistribution esd(eig);
                const double ks = kolmogorov_distance(cdf_view(esd), law_cdf);
                slot.rows.push_back(csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                                    std::to_string(n) + "," + fd(ks));
                slot.values.push_back(ks);
            });
            std::vector<double> ks;
            for (const auto& slot : slots)
                if (slot.ok) ks.push_back(slot.values[0]);
            stats["mean_ks"] = mean_of(ks);
            stats["se_ks"] = se_of(ks);
            stats["max_ks"] = ks.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : *std::max_element(ks.begin(), ks.end());
            break;
        }

        case ExperimentKind::extremes: {
            header = "experiment,rep,substream_seed,status,p,n,lambda_max,lambda_min_pn,"
                     "top_scaled,bottom_scaled";
            const MixingMatrices mats = build_A(cfg.model.mixing);
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(cfg.model, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                const SymmetricMatrix s = sample_covariance(x);
                const SymmetricMatrix target = cfg.use_correlation ? sample_correlation(s) : s;
                const ExtremeReport er = extreme_report(target, m.n);
                slot.rows.push_back(csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                                    std::to_string(n) + "," + fd(er.lambda_max) + "," +
                                    fd(er.lambda_min_pn) + "," + fd(er.top_scaled) + "," +
                                    fd(er.bottom_scaled));
                slot.values = {er.top_scaled, er.bottom_scaled};
            });
            std::vector<double> top, bottom;
            for (const auto& slot : slots)
                if (slot.ok) {
                    top.push_back(slot.values[0]);
                    bottom.push_back(slot.values[1]);
                }
            stats["mean_top_scaled"] = mean_of(top);
            stats["sd_top_scaled"] = sd_of(top);
            stats["se_top_scaled"] = se_of(top);
            stats["mean_bottom_scaled"] = mean_of(bottom);
            stats["sd_bottom_scaled"] = sd_of(bottom);
            stats["se_bottom_scaled"] = se_of(bottom);
            break;
        }

        case ExperimentKind::threshold: {
            header = "experiment,rep,substream_seed,status,p,n,t_p,norm_R_minus_Gamma,"
                     "norm_Rhat_minus_Gamma,improved,offdiag_zeroed,max_offdiag_scaled";
            const MixingMatrices mats = build_A(cfg.model.mixing);
            const ThresholdRule rule = ThresholdRule::from_dims(p, n, cfg.threshold_M);
            if (rule.m_below_theory)
                res.messages.push_back("warning: M = " + fd(rule.M) +
                                       " is at or below the theoretical floor 2");
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(cfg.model, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                const SymmetricMatrix rmat = sample_correlation(sample_covariance(x));
                const SymmetricMatrix rhat = threshold_estimate(rmat, rule);
                const double norm_r = spectral_norm(sym_add(rmat, mats.Gamma, -1.0));
                const double norm_rhat = spectral_norm(sym_add(rhat, mats.Gamma, -1.0));
                double max_off = 0.0;
                for (int i = 0; i < p; ++i)
                    for (int j = i + 1; j < p; ++j)
                        max_off = std::max(max_off, std::abs(rhat(i, j)));
                const bool improved = norm_rhat < norm_r;
                const bool zeroed = max_off == 0.0;
                const double mstat = max_offdiag_scaled(rmat, m.n);
                slot.rows.push_back(csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                                    std::to_string(n) + "," + fd(rule.t_p) + "," + fd(norm_r) +
                                    "," + fd(norm_rhat) + "," + (improved ? "1" : "0") + "," +
                                    (zeroed ? "1" : "0") + "," + fd(mstat));
                slot.values = {norm_r, norm_rhat, improved ? 1.0 : 0.0, zeroed ? 1.0 : 0.0,
                               mstat};
            });
            std::vector<double> nr, nrh, imp, zer, ms;
            for (const auto& slot : slots)
                if (slot.ok) {
                    nr.push_back(slot.values[0]);
                    nrh.push_back(slot.values[1]);
                    imp.push_back(slot.values[2]);
                    zer.push_back(slot.values[3]);
                    ms.push_back(slot.values[4]);
                }
            stats["t_p"] = rule.t_p;
            stats["frac_improved"] = mean_of(imp);
            stats["frac_offdiag_zeroed"] = mean_of(zer);
            stats["mean_max_offdiag_scaled"] = mean_of(ms);
            stats["se_max_offdiag_scaled"] = se_of(ms);
            stats["mean_norm_R_minus_Gamma"] = mean_of(nr);
            stats["mean_norm_Rhat_minus_Gamma"] = mean_of(nrh);
            break;
        }

        case ExperimentKind::spectrum_estimate: {
            header = "experiment,rep,substream_seed,status,p,n,ell,l1_error,"
                     "residual_moment_error,mass_defect";
            const MixingMatrices mats = build_A(cfg.model.mixing);
            std::vector<double> truth = sym_eigenvalues(mats.Gamma);
            const ReconstructionGrid grid{cfg.recon_resolution, cfg.recon_hi};
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(cfg.model, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                const MomentVector mv = estimate_correlation_moments(x, cfg.ell);
                const SpectrumEstimate est = reconstruct_spectrum(mv, p, grid);
                double l1 = 0.0;
                for (int i = 0; i < p; ++i) l1 += std::abs(est.eigenvalues[i] - truth[i]);
                l1 /= static_cast<double>(p);
                slot.rows.push_back(csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                                    std::to_string(n) + "," + std::to_string(cfg.ell) + "," +
                                    fd(l1) + "," + fd(est.residual_moment_error) + "," +
                                    fd(est.mass_defect));
                slot.values = {l1, est.residual_moment_error};
            });
            std::vector<double> l1s, resid;
            for (const auto& slot : slots)
                if (slot.ok) {
                    l1s.push_back(slot.values[0]);
                    resid.push_back(slot.values[1]);
                }
            stats["mean_l1_error"] = mean_of(l1s);
            stats["se_l1_error"] = se_of(l1s);
            stats["max_l1_error"] = l1s.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : *std::max_element(l1s.begin(), l1s.end());
            stats["mean_residual"] = mean_of(resid);
            break;
        }

        case ExperimentKind::spiked: {
            header = "experiment,rep,substream_seed,status,p,n,spike_index,alpha,multiplicity,"
                     "rank,detectable,predicted_limit,observed";
            const double gamma_hat = static_cast<double>(p) / static_cast<double>(n);
            const AtomicMeasure bulk = AtomicMeasure::dirac(1.0);
            const SpikeInstantiation inst =
                build_spike_block(cfg.spikes, gamma_hat, bulk, cfg.rotation_seed);
            const MixingSpec mixing = MixingSpec::spiked(inst.lambda, p);
            const MixingMatrices mats = build_A(mixing);

            LawSpec law_spec;
            if (cfg.law) {
                law_spec = *cfg.law;
            } else {
                law_spec.kind = LawKind::mp;
                law_spec.gamma = gamma_hat;
            }
            const LimitLaw law = law_spec.build();

            SpikedModel smodel;
            smodel.spikes = inst.all_spikes;
            smodel.bulk = bulk;
            smodel.gamma = gamma_hat;
            smodel.p = p;
            const std::vector<SpikePrediction> all_preds = classify_spikes(smodel, law);
            const std::vector<SpikePrediction> preds(all_preds.begin(),
                                                     all_preds.begin() + cfg.spikes.size());

            DataModel base = cfg.model;
            base.mixing = mixing;
            slots = run_reps(cfg.reps, jobs, [&](int r, RepSlot& slot) {
                const DataModel m = model_for_rep(base, cfg.master_seed, r);
                const Matrix x = generate(m, mats);
                const auto eig = sym_eigenvalues(sample_correlation(sample_covariance(x)));
                for (size_t k = 0; k < preds.size(); ++k) {
                    const auto& pr = preds[k];
                    if (pr.skipped_in_bulk) continue;
                    for (int slot_i = 0; slot_i < pr.multiplicity; ++slot_i) {
                        const int rank = pr.rank_begin + slot_i; // 1-based
                        const double observed = eig.at(rank - 1);
                        slot.rows.push_back(
                            csv_prefix(cfg, r) + ",ok," + std::to_string(p) + "," +
                            std::to_string(n) + "," + std::to_string(k) + "," + fd(pr.alpha) +
                            "," + std::to_string(pr.multiplicity) + "," + std::to_string(rank) +
                            "," + (pr.detectable ? "1" : "0") + "," + fd(pr.predicted_limit) +
                            "," + fd(observed));
                        slot.values.push_back(observed);
                    }
                }
            });
            std::vector<std::vector<double>> observed(preds.size());
            for (const auto& slot : slots) {
                if (!slot.ok) continue;
                size_t idx = 0;
                for (size_t k = 0; k < preds.size(); ++k) {
                    if (preds[k].skipped_in_bulk) continue;
                    for (int s = 0; s < preds[k].multiplicity; ++s)
                        observed[k].push_back(slot.values[idx++]);
                }
            }
            std::vector<double> mc_mean(preds.size()), mc_sd(preds.size());
            for (size_t k = 0; k < preds.size(); ++k) {
                mc_mean[k] = mean_of(observed[k]);
                mc_sd[k] = sd_of(observed[k]);
                const std::string sfx = "_spike" + std::to_string(k);
                stats["predicted" + sfx] = preds[k].predicted_limit;
                stats["mc_mean" + sfx] = mc_mean[k];
                stats["mc_sd" + sfx] = mc_sd[k];
                stats["abs_err" + sfx] = std::abs(mc_mean[k] - preds[k].predicted_limit);
            }
            res.predictions_csv = predictions_csv(preds, mc_mean, mc_sd);
            break;
        }
    }

    // Assemble CSV in replication order; error slots keep one diagnostic row.
    res.csv = header + "\n";
    for (int r = 0; r < cfg.reps; ++r) {
        const RepSlot& slot = slots[r];
        if (slot.ok) {
            for (const auto& row : slot.rows) res.csv += row + "\n";
        } else {
            std::string msg = slot.error;
            for (char& c : msg)
                if (c == ',' || c == '\n') c = ';';
            res.csv += csv_prefix(cfg, r) + ",error:" + msg + "\n";
            res.errors.push_back("rep " + std::to_string(r) + ": " + slot.error);
        }
    }

    // Band checks.
    for (const auto& [name, band] : cfg.bands) {
        const double v = stats.at(name);
        const bool pass = std::isfinite(v) && v >= band.lo && v <= band.hi;
        if (!pass) res.bands_pass = false;
        res.messages.push_back(std::string(pass ? "PASS" : "FAIL") + " band " + name + ": value " +
                               fd(v) + " target [" + fd(band.lo) + ", " + fd(band.hi) + "]");
    }
    res.exit_code = res.bands_pass ? 0 : 2;

    nlohmann::json summary;
    summary["schema_version"] = 1;
    summary["experiment"] = experiment_name(cfg.kind);
    summary["reps"] = cfg.reps;
    summary["master_seed"] = cfg.master_seed;
    summary["model"] = nlohmann::json::parse(cfg.model.to_json_string());
    nlohmann::json jstats = nlohmann::json::object();
    for (const auto& [k, v] : stats) {
        if (std::isfinite(v))
            jstats[k] = v;
        else
            jstats[k] = nullptr;
    }
    summary["stats"] = jstats;
    nlohmann::json jbands = nlohmann::json::object();
    for (const auto& [name, band] : cfg.bands) {
        const double v = stats.at(name);
        jbands[name] = {{"lo", band.lo},
                        {"hi", band.hi},
                        {"value", std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr)},
                        {"pass", std::isfinite(v) && v >= band.lo && v <= band.hi}};
    }
    summary["bands"] = jbands;
    summary["pass"] = res.bands_pass;
    summary["errors"] = res.errors;
    res.summary_json = summary.dump(2);
    return res;
}

} // namespace rmtcorr
