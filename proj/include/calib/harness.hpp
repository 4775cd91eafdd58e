#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calib/base.hpp"
#include "calib/dataset.hpp"
#include "calib/interp.hpp"
#include "calib/metrics.hpp"

namespace calib {

// Experiment grid over (dataset x base kind x score x interpolator x seed).
// Dataset entries are CSV paths or synthetic specs "synth:<name>:<rows>[:<seed>]".
// Score entries are score names, "auto" (the natural score per base kind),
// or the method aliases "isotonic" (cdf + linear) and
// "conformal-calibration" (cdf + random).
struct ExperimentConfig {
    std::vector<std::string> datasets;
    std::vector<std::string> bases;
    std::vector<std::string> scores{"auto"};
    std::vector<std::string> interpolators{"linear"};
    std::vector<std::uint64_t> seeds{0};
    SplitSpec split{0.6, 0.2, 0.2, 0};
    std::string output_dir = "out";
    BaseHyper base_hyper;
    NafConfig naf;

    static ExperimentConfig load(const std::string& path);
    void validate() const;  // throws ConfigError
};

struct CellKey {
    std::string dataset;
    std::string base;
    std::string score;
    std::string interp;
    std::uint64_t seed = 0;
};

struct CellResult {
    CellKey key;
    std::optional<MetricRow> metrics;  // empty on failure
    std::string error;                 // failure message
    std::vector<std::uint32_t> pit_hist;  // 20 bins
};

struct AggregateRow {
    std::string dataset, base, score, interp;
    std::size_t count = 0;  // seeds that completed
    std::optional<double> nll_mean, nll_se;
    double crps_mean = 0, crps_se = 0;
    std::optional<double> std_mean, std_se;
    double ci95_mean = 0, ci95_se = 0;
    double ece_mean = 0, ece_se = 0;
    double ks_mean = 0, ks_se = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<CellResult> rows;
    std::vector<AggregateRow> aggregates;
    std::size_t failed_cells = 0;
};

// Runs the full grid. Cells execute in parallel (capped by CALIB_THREADS)
// but the report is identical to a serial run: all randomness is derived
// from the config, per cell.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Figure-2-style comparison: conformal intervals vs centered credible
// intervals from the recalibrated predictor, at confidence `level`.
struct IntervalComparisonRow {
    std::string dataset, base;
    std::uint64_t seed = 0;
    double conformal_width = 0, conformal_coverage = 0;
    double credible_width = 0, credible_coverage = 0;
};

std::vector<IntervalComparisonRow> run_interval_comparison(const ExperimentConfig& config,
                                                           double level);

// report.csv + report.json + pit_histograms.csv under dir.
void emit_report(const ExperimentReport& report, const std::string& dir);
std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& json_text);
std::string report_to_csv(const ExperimentReport& report);

void emit_interval_comparison(const std::vector<IntervalComparisonRow>& rows,
                              const std::string& dir);

// "synth:<name>:<rows>[:<seed>]" or a CSV path.
Dataset resolve_dataset(const std::string& spec);

// Natural score name for a base kind ("auto" resolution).
std::string auto_score_for(const std::string& base);

// Worker threads to use: CALIB_THREADS if set, hardware concurrency otherwise.
unsigned thread_cap();

}  // namespace calib
