#include "calib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calib/errors.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"

namespace calib {

std::vector<double> pit_values(const RecalibratedPredictor& h, const Dataset& test) {
    std::vector<double> u(test.rows());
    for (std::size_t i = 0; i < test.rows(); ++i)
        u[i] = h.score_value(test.row(i), test.label(i));
    std::vector<double> pits(test.rows());
    h.map().eval_batch(u, pits);
    return pits;
}

double ks_uniformity(std::vector<double> pits) { return ks_uniform(std::move(pits)); }

std::optional<double> nll(const RecalibratedPredictor& h, const Dataset& test) {
    if (!h.map().has_density()) return std::nullopt;
    if (test.rows() == 0) throw EmptyInputError("nll: empty test split");
    double acc = 0.0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const double d = h.cdf(test.row(i)).density(test.label(i));
        if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
        acc -= std::log(d);
    }
    return acc / static_cast<double>(test.rows());
}

// ---------------------------------------------------------------------
// CRPS
// ---------------------------------------------------------------------

double PiecewiseCdf::eval(double t) const {
    if (step) {
        auto it = std::upper_bound(ys.begin(), ys.end(), t);
        if (it == ys.begin()) return 0.0;
        return ps[static_cast<std::size_t>(it - ys.begin()) - 1];
    }
    if (t <= ys.front()) {
        if (lower_scale <= 0.0) return ps.front();
        return ps.front() * std::exp((t - ys.front()) / lower_scale);
    }
    if (t >= ys.back()) {
        if (upper_scale <= 0.0) return ps.back();
        return 1.0 - (1.0 - ps.back()) * std::exp(-(t - ys.back()) / upper_scale);
    }
    auto it = std::upper_bound(ys.begin(), ys.end(), t);
    std::size_t k = static_cast<std::size_t>(it - ys.begin()) - 1;
    const double w = ys[k + 1] - ys[k];
    const double fr = w > 0.0 ? (t - ys[k]) / w : 1.0;
    return ps[k] + fr * (ps[k + 1] - ps[k]);
}

namespace {

// integral of H^2 over [t0, t1] on a linear piece H = p0 + m (t - a)
double int_sq_linear(double a, double p0, double m, double t0, double t1) {
    if (t1 <= t0) return 0.0;
    if (std::abs(m) < 1e-300) {
        return p0 * p0 * (t1 - t0);
    }
    const double h0 = p0 + m * (t0 - a);
    const double h1 = p0 + m * (t1 - a);
    return (h1 * h1 * h1 - h0 * h0 * h0) / (3.0 * m);
}

// integral of (1-H)^2 over [t0, t1] on the same piece
double int_sq1m_linear(double a, double p0, double m, double t0, double t1) {
    if (t1 <= t0) return 0.0;
    if (std::abs(m) < 1e-300) {
        const double g = 1.0 - p0;
        return g * g * (t1 - t0);
    }
    const double g0 = 1.0 - (p0 + m * (t0 - a));
    const double g1 = 1.0 - (p0 + m * (t1 - a));
    return (g0 * g0 * g0 - g1 * g1 * g1) / (3.0 * m);
}

}  // namespace

double crps_closed_form(const PiecewiseCdf& cdf, double y_obs) {
    const auto& ys = cdf.ys;
    const auto& ps = cdf.ps;
    if (ys.empty() || ys.size() != ps.size())
        throw Error("crps_closed_form: malformed piecewise CDF");

    double total = 0.0;

    // lower tail (-inf, ys[0]): H = p0 * exp((t - ys0)/s); steps and hard
    // clamps use p0 = 0 (the tail carries no probability).
    {
        const double s = cdf.lower_scale;
        const double p0 = (cdf.step || s <= 0.0) ? 0.0 : ps.front();
        if (!cdf.step && s <= 0.0 && ps.front() != 0.0)
            throw DomainError("crps_closed_form: clamped lower tail needs ps.front() == 0");
        if (y_obs >= ys.front()) {
            if (p0 > 0.0) total += p0 * p0 * s * 0.5;
        } else {
            const double e1 = p0 > 0.0 ? std::exp((y_obs - ys.front()) / s) : 0.0;
            const double e2 = e1 * e1;
            if (p0 > 0.0) {
                total += p0 * p0 * s * 0.5 * e2;                        // int H^2 below y
                total += (ys.front() - y_obs) - 2.0 * p0 * s * (1.0 - e1) +
                         p0 * p0 * s * 0.5 * (1.0 - e2);                // int (1-H)^2 up to ys0
            } else {
                total += ys.front() - y_obs;
            }
        }
    }

    // upper tail (ys.back(), inf): 1 - H = q0 * exp(-(t - ysK)/s)
    {
        const double s = cdf.upper_scale;
        const double q0 = (cdf.step || s <= 0.0) ? 0.0 : 1.0 - ps.back();
        if ((cdf.step || s <= 0.0) && std::abs(ps.back() - 1.0) > 1e-12)
            throw DomainError("crps_closed_form: clamped upper tail needs ps.back() == 1");
        if (y_obs <= ys.back()) {
            if (q0 > 0.0) total += q0 * q0 * s * 0.5;
        } else {
            const double f1 = q0 > 0.0 ? std::exp(-(y_obs - ys.back()) / s) : 0.0;
            const double f2 = f1 * f1;
            if (q0 > 0.0) {
                total += (y_obs - ys.back()) - 2.0 * q0 * s * (1.0 - f1) +
                         q0 * q0 * s * 0.5 * (1.0 - f2);                // int H^2 from ysK to y
                total += q0 * q0 * s * 0.5 * f2;                        // int (1-H)^2 above y
            } else {
                total += y_obs - ys.back();
            }
        }
    }

    // interior segments
    for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
        const double a = ys[k], b = ys[k + 1];
        if (!(b > a)) continue;
        const double split = std::clamp(y_obs, a, b);
        if (cdf.step) {
            const double v = ps[k];
            total += v * v * (split - a);
            total += (1.0 - v) * (1.0 - v) * (b - split);
        } else {
            const double m = (ps[k + 1] - ps[k]) / (b - a);
            total += int_sq_linear(a, ps[k], m, a, split);
            total += int_sq1m_linear(a, ps[k], m, split, b);
        }
    }
    return total;
}

double crps_quadrature(const CdfView& cdf, double y_obs, double abs_tol) {
    double lo = cdf.quantile(1e-6);
    double hi = cdf.quantile(1.0 - 1e-6);
    lo = std::min(lo, y_obs);
    hi = std::max(hi, y_obs);
    const double pad = 1e-9 * (1.0 + hi - lo);
    lo -= pad;
    hi += pad;

    auto below = [&](double t) {
        const double v = cdf.eval(t);
        return v * v;
    };
    auto above = [&](double t) {
        const double v = 1.0 - cdf.eval(t);
        return v * v;
    };
    double total = 0.0;
    if (y_obs > lo) total += adaptive_simpson(below, lo, y_obs, abs_tol * 0.5);
    if (hi > y_obs) total += adaptive_simpson(above, y_obs, hi, abs_tol * 0.5);
    return total;
}

bool crps_closed_form_applicable(const RecalibratedPredictor& h, std::span<const double> x) {
    if (!h.has_score_route()) return false;
    const InterpKind k = h.map().kind();
    if (k == InterpKind::naive || k == InterpKind::random) return true;
    if (k == InterpKind::linear) return h.score().affine_in_y(h.predict_base(x));
    return false;
}

PiecewiseCdf piecewise_cdf_at(const RecalibratedPredictor& h, std::span<const double> x) {
    const MonotoneMap& map = h.map();
    const PredictionOutput pred = h.predict_base(x);
    const auto& knots = map.knots();

    PiecewiseCdf out;
    out.step = !map.continuous();
    out.ys.reserve(knots.size());
    out.ps.reserve(knots.size());
    for (std::size_t i = 0; i < knots.size(); ++i) {
        if (i > 0 && knots[i] == knots[i - 1]) continue;  // merged tie
        out.ys.push_back(h.score_inverse(pred, knots[i]));
        out.ps.push_back(map.eval(knots[i]));
    }
    if (out.step) {
        // tail mass collapsed onto the outer knots so the CRPS integral is
        // finite (the random map is otherwise constant-positive below the
        // first knot)
        out.ps.back() = 1.0;
        return out;
    }
    const auto [a, b] = h.score().affine_coeffs(pred);
    (void)b;
    out.lower_scale = map.tail_scale() / a;
    out.upper_scale = map.tail_scale() / a;
    return out;
}

double crps_single(const RecalibratedPredictor& h, std::span<const double> x, double y) {
    if (crps_closed_form_applicable(h, x)) return crps_closed_form(piecewise_cdf_at(h, x), y);
    const RecalibratedCdf view = h.cdf(x);
    return crps_quadrature(view, y);
}

double crps(const RecalibratedPredictor& h, const Dataset& test) {
    if (test.rows() == 0) throw EmptyInputError("crps: empty test split");
    double acc = 0.0;
    for (std::size_t i = 0; i < test.rows(); ++i)
        acc += crps_single(h, test.row(i), test.label(i));
    return acc / static_cast<double>(test.rows());
}

// ---------------------------------------------------------------------
// ECE / bound check
// ---------------------------------------------------------------------

std::vector<double> default_ece_levels() {
    std::vector<double> lv(19);
    for (int j = 0; j < 19; ++j) lv[j] = 0.05 * (j + 1);
    return lv;
}

double ece_raw(std::span<const double> pits, std::span<const double> levels) {
    if (pits.empty()) throw EmptyInputError("ece_raw: empty PIT sample");
    std::vector<double> sorted(pits.begin(), pits.end());
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    double acc = 0.0;
    for (double p : levels) {
        const auto cnt = static_cast<double>(
            std::upper_bound(sorted.begin(), sorted.end(), p) - sorted.begin());
        acc += std::abs(cnt / m - p);
    }
    return acc / static_cast<double>(levels.size());
}

double ece_debiased(std::span<const double> pits, std::span<const double> levels,
                    std::uint64_t seed, int resamples) {
    const double raw = ece_raw(pits, levels);
    double bias = 0.0;
    std::vector<double> u(pits.size());
    for (int r = 0; r < resamples; ++r) {
        Rng rng(derive_seed(seed, 0x5eedu + static_cast<std::uint64_t>(r)));
        for (double& v : u) v = rng.uniform();
        bias += ece_raw(u, levels);
    }
    bias /= resamples;
    return raw - bias;
}

double ece_debiased(const RecalibratedPredictor& h, const Dataset& test,
                    std::span<const double> levels, std::uint64_t seed) {
    auto pits = pit_values(h, test);
    return ece_debiased(pits, levels, seed);
}

std::pair<std::optional<double>, double> sharpness(const RecalibratedPredictor& h,
                                                   const Dataset& test) {
    if (test.rows() == 0) throw EmptyInputError("sharpness: empty test split");
    const bool has_std = h.map().has_density();
    double std_acc = 0.0, width_acc = 0.0;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        auto x = test.row(i);
        if (has_std) {
            auto [mean, sd] = h.predictive_moments(x);
            (void)mean;
            std_acc += *sd;
        }
        auto [lo, hi] = h.credible_interval(x, 0.95);
        width_acc += hi - lo;
    }
    const double m = static_cast<double>(test.rows());
    std::optional<double> std_mean;
    if (has_std) std_mean = std_acc / m;
    return {std_mean, width_acc / m};
}

BoundCheckResult calibration_bound_check(std::span<const double> pits, double lambda,
                                         std::size_t n_cal, std::span<const double> levels,
                                         double mc_slack) {
    if (pits.empty()) throw EmptyInputError("calibration_bound_check: empty PIT sample");
    std::vector<double> sorted(pits.begin(), pits.end());
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    double worst = 0.0;
    for (double p : levels) {
        const auto cnt = static_cast<double>(
            std::upper_bound(sorted.begin(), sorted.end(), p) - sorted.begin());
        worst = std::max(worst, std::abs(cnt / m - p));
    }
    BoundCheckResult r;
    r.max_deviation = worst;
    r.bound = (1.0 + lambda) / (static_cast<double>(n_cal) + 1.0) + mc_slack;
    r.pass = worst <= r.bound;
    return r;
}

MetricRow evaluate_metrics(const RecalibratedPredictor& h, const Dataset& test,
                           std::uint64_t seed) {
    MetricRow row;
    auto pits = pit_values(h, test);
    row.pit_ks = ks_uniform(pits);
    row.ece = ece_debiased(pits, default_ece_levels(), seed);
    row.nll = nll(h, test);
    row.crps = crps(h, test);
    auto [sd, width] = sharpness(h, test);
    row.std_dev = sd;
    row.ci95_width = width;
    return row;
}

}  // namespace calib
