#include <cmath>
#include <cstddef>

#include "calib/kernels.hpp"

// Reference kernels. Plain sequential loops; these define the semantics
// the vector variants are tested against.

namespace calib::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sum_sq_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vexp_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void vsigmoid_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
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

void vtanh_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void matmul_scalar(const double* a, const double* b, double* c, std::size_t n,
                   std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double al = arow[l];
            const double* brow = b + l * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += al * brow[j];
        }
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops table = {
        "scalar",     dot_scalar,      sum_scalar,   sum_sq_scalar,
        axpy_scalar,  vexp_scalar,     vsigmoid_scalar, vtanh_scalar,
        matmul_scalar,
    };
    return table;
}

}  // namespace calib::kernels
