#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/mcc.hpp"

namespace calib {

struct MetricRow {
    std::optional<double> nll;      // undefined for step maps
    double crps = 0.0;
    std::optional<double> std_dev;  // undefined for step maps
    double ci95_width = 0.0;
    double ece = 0.0;               // debiased
    double pit_ks = 0.0;
};

// PIT_i = H[x_i](y_i)
std::vector<double> pit_values(const RecalibratedPredictor& h, const Dataset& test);

// Two-sided one-sample KS statistic of the PITs against Uniform(0,1).
double ks_uniformity(std::vector<double> pits);

// Mean negative log density over the test split; nullopt when the fitted
// map has no density (naive/random interpolation).
std::optional<double> nll(const RecalibratedPredictor& h, const Dataset& test);

// ---------------------------------------------------------------------
// CRPS: exact piecewise integration where the predictive CDF is a step
// function or piecewise linear in y, adaptive Simpson quadrature
// otherwise. Both routes are public so they can be checked against each
// other.
// ---------------------------------------------------------------------

// Breakpoint representation of a CDF that is piecewise linear (or a pure
// step function) between sorted breakpoints, with optional exponential
// tails. For step CDFs, ps[k] is the value on [ys[k], ys[k+1]) and the
// function is 0 below ys[0] and ps.back() must be 1.
struct PiecewiseCdf {
    std::vector<double> ys;
    std::vector<double> ps;
    bool step = false;
    double lower_scale = 0.0;  // 0 means hard clamp (requires ps.front() == 0)
    double upper_scale = 0.0;  // 0 means hard clamp (requires ps.back() == 1)

    double eval(double t) const;
};

double crps_closed_form(const PiecewiseCdf& cdf, double y_obs);
double crps_quadrature(const CdfView& cdf, double y_obs, double abs_tol = 1e-7);

// Whether the closed form applies at this input, and the corresponding
// breakpoint representation.
bool crps_closed_form_applicable(const RecalibratedPredictor& h, std::span<const double> x);
PiecewiseCdf piecewise_cdf_at(const RecalibratedPredictor& h, std::span<const double> x);

double crps_single(const RecalibratedPredictor& h, std::span<const double> x, double y);
double crps(const RecalibratedPredictor& h, const Dataset& test);

// ---------------------------------------------------------------------
// Calibration error
// ---------------------------------------------------------------------

std::vector<double> default_ece_levels();  // 0.05, 0.10, ..., 0.95

double ece_raw(std::span<const double> pits, std::span<const double> levels);

// Debiased ECE: raw ECE minus its expectation under exact calibration,
// estimated from seeded uniform resamples of the same size.
double ece_debiased(std::span<const double> pits, std::span<const double> levels,
                    std::uint64_t seed, int resamples = 200);
double ece_debiased(const RecalibratedPredictor& h, const Dataset& test,
                    std::span<const double> levels, std::uint64_t seed);

// Mean predictive std (undefined for step maps) and mean centered 95%
// credible interval width.
std::pair<std::optional<double>, double> sharpness(const RecalibratedPredictor& h,
                                                   const Dataset& test);

struct BoundCheckResult {
    bool pass = false;
    double max_deviation = 0.0;
    double bound = 0.0;
};

// Finite-sample calibration check: max_j |P(PIT <= p_j) - p_j| against
// (1 + lambda)/(n_cal + 1) plus a Monte Carlo slack term.
BoundCheckResult calibration_bound_check(std::span<const double> pits, double lambda,
                                         std::size_t n_cal, std::span<const double> levels,
                                         double mc_slack);

MetricRow evaluate_metrics(const RecalibratedPredictor& h, const Dataset& test,
                           std::uint64_t seed);

}  // namespace calib
