#include "calib/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calib/errors.hpp"
#include "calib/math.hpp"

namespace calib {

double NonconformityScore::y_min(std::span<const double> x) const {
    if (minimizer) return minimizer(x);
    return golden_section_min([&](double y) { return fn(x, y); }, bracket.first,
                              bracket.second, min_tol);
}

NonconformityScore abs_residue_score(std::function<double(std::span<const double>)> point_fn) {
    NonconformityScore s;
    auto shared = std::make_shared<std::function<double(std::span<const double>)>>(
        std::move(point_fn));
    s.fn = [shared](std::span<const double> x, double y) { return std::abs(y - (*shared)(x)); };
    s.minimizer = [shared](std::span<const double> x) { return (*shared)(x); };
    return s;
}

std::vector<double> nonconformity_values(const NonconformityScore& phi, const Dataset& cal) {
    std::vector<double> v(cal.rows());
    for (std::size_t i = 0; i < cal.rows(); ++i) v[i] = phi.fn(cal.row(i), cal.label(i));
    std::sort(v.begin(), v.end());
    return v;
}

namespace {

// Threshold value for membership: y is in the interval iff
// phi(x, y) < v* with v* the (floor(c n) + 1)-th smallest calibration
// non-conformity. Returns +inf when every label qualifies.
double conformal_threshold(std::span<const double> sorted_vals, double c) {
    const std::size_t n = sorted_vals.size();
    if (n == 0) throw EmptyInputError("conformal_interval: empty calibration split");
    const auto k = static_cast<std::size_t>(
        std::floor(c * static_cast<double>(n) + 1e-9));
    if (k >= n) return std::numeric_limits<double>::infinity();
    return sorted_vals[k];  // (k+1)-th smallest, 0-based index k
}

}  // namespace

std::pair<double, double> conformal_interval(const NonconformityScore& phi,
                                             std::span<const double> sorted_cal_values,
                                             std::span<const double> x, double c) {
    if (!(c > 0.0 && c <= 1.0)) throw DomainError("conformal_interval: c must lie in (0,1]");
    const double v_star = conformal_threshold(sorted_cal_values, c);
    if (std::isinf(v_star))
        return {-std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};

    const double y0 = phi.y_min(x);
    const double phi_min = phi.fn(x, y0);
    if (!(v_star > phi_min))
        throw DomainError("conformal_interval: empty interval (c below 1/n)");

    // increasing side
    const double upper =
        solve_increasing([&](double y) { return phi.fn(x, y); }, v_star, y0, y0 + 1.0);
    // decreasing side, solved on the reflected axis
    const double lower_t = solve_increasing(
        [&](double t) { return phi.fn(x, y0 - t); }, v_star, 0.0, 1.0);
    return {y0 - lower_t, upper};
}

std::pair<double, double> conformal_interval(const NonconformityScore& phi,
                                             const Dataset& cal,
                                             std::span<const double> x, double c) {
    auto vals = nonconformity_values(phi, cal);
    return conformal_interval(phi, vals, x, c);
}

double coverage_estimate(const NonconformityScore& phi, const Dataset& cal,
                         const Dataset& test, double c) {
    if (test.rows() == 0) throw EmptyInputError("coverage_estimate: empty test split");
    auto vals = nonconformity_values(phi, cal);
    const double v_star = conformal_threshold(vals, c);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < test.rows(); ++i)
        if (phi.fn(test.row(i), test.label(i)) <= v_star) ++inside;
    return static_cast<double>(inside) / static_cast<double>(test.rows());
}

XYScore signed_score_from_nonconformity(const NonconformityScore& phi) {
    auto shared = std::make_shared<NonconformityScore>(phi);
    return [shared](std::span<const double> x, double y) {
        const double y0 = shared->y_min(x);
        const double shifted = shared->fn(x, y) - shared->fn(x, y0);
        return y > y0 ? shifted : -shifted;
    };
}

double conformal_credible_mass_deviation(const NonconformityScore& phi, const Dataset& cal,
                                         const Dataset& test, double c) {
    XYScore signed_score = signed_score_from_nonconformity(phi);
    RecalibratedPredictor h = recalibrate_xy(signed_score, InterpKind::linear, cal, 0);
    auto vals = nonconformity_values(phi, cal);

    double worst = 0.0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        auto x = test.row(i);
        auto [lo, hi] = conformal_interval(phi, vals, x, c);
        const double mass = h.cdf_eval(x, hi) - h.cdf_eval(x, lo);
        worst = std::max(worst, std::abs(mass - c));
    }
    return worst;
}

}  // namespace calib
