#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace calib {

// Standard normal CDF / PDF / inverse CDF. The inverse uses a rational
// first guess refined with Halley steps, accurate to ~1e-15 on (0,1).
double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

inline double sigmoid(double x);
inline double softplus(double x);

// Adaptive Simpson quadrature with an absolute tolerance. Breakpoints let
// the caller force panel boundaries at known non-smooth points.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, int max_depth = 40);

// Minimize a continuous strictly unimodal function on [a, b].
double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-9);

// Solve f(y) = target for strictly increasing continuous f, expanding the
// bracket from an initial guess. Throws BracketError if expansion fails.
double solve_increasing(const std::function<double(double)>& f, double target,
                        double lo, double hi, double y_tol = 1e-13,
                        double f_tol = 1e-12, int max_expand = 200);

// One-sample two-sided Kolmogorov-Smirnov statistic against Uniform(0,1).
// Takes the values by copy and sorts them.
double ks_uniform(std::vector<double> values);

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 32.0) return x;
    if (x < -32.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace calib
