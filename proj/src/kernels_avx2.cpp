#include <cstddef>

#include "calib/kernels.hpp"

#if defined(CALIB_BUILD_AVX2)

#include <immintrin.h>

#include <cmath>

namespace calib::kernels {
namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    acc0 = _mm256_add_pd(acc0, acc1);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc0);
    double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc0);
    double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) acc += x[i];
    return acc;
}

double sum_sq_avx2(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc0 = _mm256_fmadd_pd(v, v, acc0);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc0);
    double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// exp for four doubles. Cody-Waite range reduction x = n*ln2 + r with
// |r| <= ln2/2, then a degree-13 Taylor polynomial in r (next-term error
// ~4e-18), scaled by 2^n through direct exponent construction. Inputs are
// clamped to [-708, 709] so 2^n stays a normal number; results below
// exp(-708) ~ 3e-308 therefore saturate instead of denormalizing to zero.
__m256d exp_pd(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.44269504088896340736);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

    x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
    x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));

    __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    const double inv_fact[] = {
        1.0 / 6227020800.0,  // 1/13!
        1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
        1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
        1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
    };
    __m256d p = _mm256_set1_pd(inv_fact[0]);
    for (int t = 1; t < 13; ++t) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(inv_fact[t]));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));  // + r^0 term

    __m128i n32 = _mm256_cvtpd_epi32(n);
    __m256i n64 = _mm256_cvtepi32_epi64(n32);
    __m256i pow2 = _mm256_add_epi64(_mm256_slli_epi64(n64, 52),
                                    _mm256_castpd_si256(_mm256_set1_pd(1.0)));
    return _mm256_mul_pd(p, _mm256_castsi256_pd(pow2));
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

// sigmoid(x) = 1/(1 + exp(-x)); the clamped exp keeps the denominator finite.
void vsigmoid_avx2(const double* x, double* out, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        __m256d e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), v));
        _mm256_storeu_pd(out + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
    }
    for (; i < n; ++i) {
        double v = x[i];
        if (v >= 0.0) {
            double e = std::exp(-v);
            out[i] = 1.0 / (1.0 + e);
        } else {
            double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
}

// tanh(x) = 1 - 2/(exp(2x) + 1). Absolute error stays at a few ulp of 1;
// the equivalence tests use a mixed abs/rel tolerance for tiny arguments.
void vtanh_avx2(const double* x, double* out, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        __m256d e = exp_pd(_mm256_mul_pd(two, v));
        __m256d t = _mm256_sub_pd(one, _mm256_div_pd(two, _mm256_add_pd(e, one)));
        _mm256_storeu_pd(out + i, t);
    }
    for (; i < n; ++i) out[i] = std::tanh(x[i]);
}

void matmul_avx2(const double* a, const double* b, double* c, std::size_t n,
                 std::size_t k, std::size_t m) {
    const std::size_t m4 = m & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const __m256d al = _mm256_set1_pd(arow[l]);
            const double* brow = b + l * m;
            std::size_t j = 0;
            for (; j < m4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(al, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < m; ++j) crow[j] += arow[l] * brow[j];
        }
    }
}

}  // namespace

const Ops* avx2_ops() {
    if (!(__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))) return nullptr;
    static const Ops table = {
        "avx2",     dot_avx2,  sum_avx2,      sum_sq_avx2, axpy_avx2,
        vexp_avx2,  vsigmoid_avx2, vtanh_avx2, matmul_avx2,
    };
    return &table;
}

}  // namespace calib::kernels

#else

namespace calib::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace calib::kernels

#endif
