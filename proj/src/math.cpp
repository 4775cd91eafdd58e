#include "calib/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calib/errors.hpp"
#include "calib/rng.hpp"

namespace calib {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779399461;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Acklam's rational approximation for the probit, then two Halley
// refinements against erfc. Max observed error ~2e-16 away from the
// extreme tails.
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("normal_quantile: p must be in (0,1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};

    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    for (int it = 0; it < 2; ++it) {
        double e = normal_cdf(x) - p;
        double u = e / normal_pdf(x);
        x = x - u / (1.0 + 0.5 * x * u);  // Halley
    }
    return x;
}

double Rng::normal() { return normal_quantile(uniform_open()); }

namespace {

double simpson_panel(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_rec(const std::function<double(double)>& f, double a, double fa, double b,
                   double fb, double m, double fm, double whole, double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson_panel(a, fa, m, fm, flm);
    double right = simpson_panel(m, fm, b, fb, frm);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, int max_depth) {
    if (!(b > a)) return 0.0;
    double m = 0.5 * (a + b);
    double fa = f(a), fb = f(b), fm = f(m);
    double whole = simpson_panel(a, fa, b, fb, fm);
    return simpson_rec(f, a, fa, b, fb, m, fm, whole, abs_tol, max_depth);
}

double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol) {
    static const double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

double solve_increasing(const std::function<double(double)>& f, double target, double lo,
                        double hi, double y_tol, double f_tol, int max_expand) {
    if (hi < lo) std::swap(lo, hi);
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    double flo = f(lo), fhi = f(hi);
    double width = hi - lo;
    int expansions = 0;
    while (flo > target) {
        if (++expansions > max_expand) throw BracketError("solve_increasing: no lower bracket");
        lo -= width;
        width *= 2.0;
        flo = f(lo);
    }
    while (fhi < target) {
        if (++expansions > max_expand) throw BracketError("solve_increasing: no upper bracket");
        hi += width;
        width *= 2.0;
        fhi = f(hi);
    }
    // Bisection. Terminates on interval width; also early-outs when the
    // function value is close enough (continuous case).
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double fmid = f(mid);
        if (std::abs(fmid - target) <= f_tol) return mid;
        if (fmid < target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= y_tol * (1.0 + std::abs(lo) + std::abs(hi))) break;
    }
    return hi;  // generalized inverse: smallest y with f(y) >= target
}

double ks_uniform(std::vector<double> values) {
    const std::size_t m = values.size();
    if (m == 0) throw EmptyInputError("ks_uniform: empty sample");
    std::sort(values.begin(), values.end());
    double d = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double hi = static_cast<double>(i + 1) / m - values[i];
        double lo = values[i] - static_cast<double>(i) / m;
        d = std::max(d, std::max(hi, lo));
    }
    return d;
}

}  // namespace calib
