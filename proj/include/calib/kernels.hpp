#pragma once

#include <cstddef>
#include <string_view>

namespace calib::kernels {

// Function table for the numeric inner loops. One scalar reference
// implementation always exists; wider variants are selected at runtime
// from CPU capabilities and must agree with the reference within the
// tolerances pinned in the equivalence tests.
struct Ops {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*sum_sq)(const double* x, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    void (*vexp)(const double* x, double* out, std::size_t n);
    void (*vsigmoid)(const double* x, double* out, std::size_t n);
    void (*vtanh)(const double* x, double* out, std::size_t n);
    // C (n x m) = A (n x k) * B (k x m), all row-major contiguous.
    void (*matmul)(const double* a, const double* b, double* c, std::size_t n,
                   std::size_t k, std::size_t m);
};

const Ops& scalar_ops();

// AVX2+FMA table, or nullptr when the build or the CPU lacks support.
const Ops* avx2_ops();

// Active table. Resolved once on first use: honors CALIB_SIMD=scalar|avx2|auto,
// otherwise picks the widest supported variant.
const Ops& active();

// Force a backend by name ("scalar", "avx2", "auto"). Returns false if the
// request cannot be satisfied. Intended for tests and benchmarking.
bool select(std::string_view name);

}  // namespace calib::kernels
