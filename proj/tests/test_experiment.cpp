#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"

#include "rmtcorr/experiment.hpp"

using namespace rmtcorr;

namespace {

std::string base_model(int p, int n) {
    return R"({"law": "gaussian", "law_params": {}, "mixing": "identity",
               "mixing_params": {}, "p": )" +
           std::to_string(p) + R"(, "n": )" + std::to_string(n) + R"(, "seed": 0})";
}

} // namespace

TEST_CASE("config parsing and validation diagnostics") {
    CHECK_THROWS_WITH_AS(parse_config("{"), doctest::Contains("parse error"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config(R"({"model": {}})"), doctest::Contains("experiment"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config(R"({"experiment": "frobnicate", "model": )" +
                                      base_model(4, 10) + "}"),
                         doctest::Contains("frobnicate"), std::invalid_argument);
    // band on an unknown statistic is a config error, caught before running
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"experiment": "extremes", "model": )" + base_model(4, 10) +
                     R"(, "reps": 2, "bands": {"mean_nonsense": {"lo": 0, "hi": 1}}})"),
        doctest::Contains("mean_nonsense"), std::invalid_argument);
    // n_grid must end at model.n
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"experiment": "diag-compare", "model": )" + base_model(4, 100) +
                     R"(, "params": {"n_grid": [50, 80]}})"),
        doctest::Contains("n_grid"), std::invalid_argument);
    // spiked requires identity mixing placeholder
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"experiment": "spiked", "model": {"law": "gaussian",
                       "mixing": "ar1", "mixing_params": {"rho": 0.5},
                       "p": 20, "n": 40, "seed": 0},
                       "params": {"spikes": [{"alpha": 3.0, "mult": 1}]}})"),
        doctest::Contains("mixing"), std::invalid_argument);
}

TEST_CASE("--set overrides dotted paths with JSON or string values") {
    const std::string cfg = R"({"experiment": "extremes", "model": )" + base_model(4, 10) +
                            R"(, "reps": 2})";
    const ExperimentConfig a = parse_config(apply_override(cfg, "reps=5"));
    CHECK(a.reps == 5);
    const ExperimentConfig b = parse_config(apply_override(cfg, "model.n=64"));
    CHECK(b.model.n == 64);
    const ExperimentConfig c =
        parse_config(apply_override(apply_override(cfg, "params.matrix=S"), "reps=3"));
    CHECK(!c.use_correlation);
    CHECK(c.reps == 3);
    CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), std::invalid_argument);
}

TEST_CASE("extremes experiment: determinism across worker counts and runs") {
    const std::string cfg_text = R"({"experiment": "extremes", "model": )" + base_model(16, 64) +
                                 R"(, "reps": 6, "master_seed": 99})";
    const ExperimentConfig cfg = parse_config(cfg_text);
    const ExperimentResult serial = run_experiment(cfg, 1);
    const ExperimentResult pooled = run_experiment(cfg, 4);
    const ExperimentResult again = run_experiment(cfg, 2);
    CHECK(serial.csv == pooled.csv);
    CHECK(serial.csv == again.csv);
    CHECK(serial.summary_json == pooled.summary_json);

    // every row carries the derived substream seed
    const std::string expect_seed =
        std::to_string(RandomStream::substream_seed(99, 0));
    CHECK(serial.csv.find("extremes,0," + expect_seed + ",ok") != std::string::npos);
    CHECK(serial.csv.rfind("experiment,rep,substream_seed,status,p,n,", 0) == 0);
    CHECK(serial.exit_code == 0);
    CHECK(serial.stats.count("mean_top_scaled") == 1);
    CHECK(serial.stats.count("se_bottom_scaled") == 1);
}

TEST_CASE("bands gate the exit code") {
    const std::string cfg_text = R"({"experiment": "extremes", "model": )" + base_model(16, 64) +
                                 R"(, "reps": 4, "master_seed": 7,
                                  "bands": {"mean_top_scaled": {"lo": -100, "hi": 100}}})";
    const ExperimentResult pass = run_experiment(parse_config(cfg_text), 1);
    CHECK(pass.exit_code == 0);
    CHECK(pass.bands_pass);
    CHECK(pass.summary_json.find("\"pass\": true") != std::string::npos);

    const std::string tight = R"({"experiment": "extremes", "model": )" + base_model(16, 64) +
                              R"(, "reps": 4, "master_seed": 7,
                               "bands": {"mean_top_scaled": {"lo": 99.0, "hi": 100.0}}})";
    const ExperimentResult fail = run_experiment(parse_config(tight), 1);
    CHECK(fail.exit_code == 2);
    CHECK(!fail.bands_pass);
    REQUIRE(!fail.messages.empty());
    CHECK(fail.messages.back().rfind("FAIL", 0) == 0);
}

TEST_CASE("diag-compare evaluates column prefixes of one replication sample") {
    const std::string cfg_text = R"({"experiment": "diag-compare", "model": )" +
                                 base_model(8, 200) +
                                 R"(, "reps": 4, "master_seed": 3,
                                  "params": {"n_grid": [50, 200]}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(res.exit_code == 0);
    CHECK(res.stats.count("mean_diag_gap_n50") == 1);
    CHECK(res.stats.count("mean_diag_gap_n200") == 1);
    CHECK(res.stats.count("frac_diag_gap_increased") == 1);
    // 4 reps x 2 grid points + header
    CHECK(std::count(res.csv.begin(), res.csv.end(), '\n') == 9);
}

TEST_CASE("lsd-check experiment produces KS statistics") {
    const std::string cfg_text = R"({"experiment": "lsd-check", "model": )" + base_model(40, 80) +
                                 R"(, "reps": 2, "master_seed": 12,
                                  "params": {"law": {"kind": "mp", "gamma": 0.5}}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(res.exit_code == 0);
    CHECK(res.stats.at("mean_ks") > 0.0);
    CHECK(res.stats.at("mean_ks") < 0.5); // sane at toy scale
}

TEST_CASE("threshold experiment stats") {
    const std::string cfg_text = R"({"experiment": "threshold", "model": )" + base_model(30, 120) +
                                 R"(, "reps": 3, "master_seed": 5, "params": {"M": 2.1}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(res.stats.at("t_p") == doctest::Approx(2.1 * std::sqrt(std::log(30.0) / 120.0)));
    CHECK(res.stats.at("frac_improved") >= 0.0);
    CHECK(res.stats.at("mean_max_offdiag_scaled") > 0.0);
}

TEST_CASE("spectrum-estimate experiment reports L1 error") {
    const std::string cfg_text = R"({"experiment": "spectrum-estimate", "model": )" +
                                 base_model(10, 200) +
                                 R"(, "reps": 2, "master_seed": 21, "params": {"ell": 4}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(res.stats.at("mean_l1_error") >= 0.0);
    CHECK(res.stats.at("mean_l1_error") < 0.5); // identity spectrum at easy scale
}

TEST_CASE("spiked experiment emits predictions and observations") {
    const std::string cfg_text = R"({"experiment": "spiked", "model": )" + base_model(40, 80) +
                                 R"(, "reps": 3, "master_seed": 31,
                                  "params": {"spikes": [{"alpha": 3.0, "mult": 1}],
                                             "rotation_seed": 2}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(res.stats.at("predicted_spike0") == doctest::Approx(3.75)); // psi(3) at gamma 0.5
    CHECK(res.stats.count("mc_mean_spike0") == 1);
    CHECK(res.predictions_csv.rfind("alpha,", 0) == 0);
    // observed eigenvalues in the rows
    CHECK(res.csv.find("spiked,0,") != std::string::npos);
}

TEST_CASE("per-replication failures are recorded without aborting the batch") {
    // at n barely above ell the estimated second moment goes infeasible for
    // some substreams; those replications must turn into error rows
    const std::string cfg_text = R"({"experiment": "spectrum-estimate", "model": )" +
                                 base_model(6, 8) +
                                 R"(, "reps": 40, "master_seed": 2,
                                  "params": {"ell": 3}})";
    const ExperimentResult res = run_experiment(parse_config(cfg_text), 2);
    CHECK(!res.errors.empty());               // some reps failed...
    CHECK(res.errors.size() < 40);            // ...but not all
    CHECK(res.csv.find(",error:") != std::string::npos);
    CHECK(res.summary_json.find("errors") != std::string::npos);
}

TEST_CASE("h-atoms document parsing") {
    const auto atoms = parse_h_atoms(R"({"atoms": [[1.0, 0.5], [3.0, 0.5]]})");
    REQUIRE(atoms.size() == 2);
    CHECK(atoms[1].first == 3.0);
    CHECK_THROWS(parse_h_atoms(R"({"nope": []})"));
}
