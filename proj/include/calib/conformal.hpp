#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/mcc.hpp"

namespace calib {

// Proper non-conformity score: continuous and strictly unimodal in y for
// every fixed x. When no analytic minimizer is supplied the minimum is
// located by golden-section search over `bracket`.
struct NonconformityScore {
    std::function<double(std::span<const double>, double)> fn;
    std::function<double(std::span<const double>)> minimizer;  // optional
    std::pair<double, double> bracket{-64.0, 64.0};
    double min_tol = 1e-9;

    double y_min(std::span<const double> x) const;
};

// |y - f(x)| for a point prediction function.
NonconformityScore abs_residue_score(std::function<double(std::span<const double>)> point_fn);

// Sorted non-conformity values of the calibration split.
std::vector<double> nonconformity_values(const NonconformityScore& phi, const Dataset& cal);

// Endpoints of {y : (1/n) #{i : phi(X_i,Y_i) <= phi(x,y)} <= c}, located by
// bisection on each side of y_min(x). Returns (-inf, +inf) when c admits
// every label; throws DomainError when the set is empty.
std::pair<double, double> conformal_interval(const NonconformityScore& phi,
                                             const Dataset& cal,
                                             std::span<const double> x, double c);
std::pair<double, double> conformal_interval(const NonconformityScore& phi,
                                             std::span<const double> sorted_cal_values,
                                             std::span<const double> x, double c);

// Fraction of test labels falling inside the conformal interval.
double coverage_estimate(const NonconformityScore& phi, const Dataset& cal,
                         const Dataset& test, double c);

// Signed calibration score: -(phi(x,y) - phi_min(x)) left of the minimizer,
// +(phi(x,y) - phi_min(x)) to the right. Strictly increasing in y, with
// |signed(x,y)| equal to the shifted non-conformity.
XYScore signed_score_from_nonconformity(const NonconformityScore& phi);

// Max over the test rows of |H[x](U) - H[x](L) - c| where (L,U) is the
// conformal interval and H is the recalibrated predictor built from the
// signed score with a 0-accurate (linear) interpolation on the same
// calibration split.
double conformal_credible_mass_deviation(const NonconformityScore& phi, const Dataset& cal,
                                         const Dataset& test, double c);

}  // namespace calib
