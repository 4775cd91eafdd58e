#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "calib/kernels.hpp"
#include "calib/rng.hpp"

using namespace calib;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -10.0, double hi = 10.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

void check_close(double a, double b, double rtol, double atol = 1e-300) {
    CHECK(std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b)));
}

}  // namespace

TEST_CASE("scalar reference kernels behave") {
    const auto& ops = kernels::scalar_ops();
    std::vector<double> a = {1.0, 2.0, 3.0};
    std::vector<double> b = {4.0, -5.0, 6.0};
    CHECK(ops.dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
    CHECK(ops.sum(a.data(), 3) == doctest::Approx(6.0));
    CHECK(ops.sum_sq(b.data(), 3) == doctest::Approx(77.0));

    std::vector<double> y = {1.0, 1.0, 1.0};
    ops.axpy(2.0, a.data(), y.data(), 3);
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[2] == doctest::Approx(7.0));

    // 2x3 * 3x2
    std::vector<double> A = {1, 2, 3, 4, 5, 6};
    std::vector<double> B = {7, 8, 9, 10, 11, 12};
    std::vector<double> C(4);
    ops.matmul(A.data(), B.data(), C.data(), 2, 3, 2);
    CHECK(C[0] == doctest::Approx(58.0));
    CHECK(C[1] == doctest::Approx(64.0));
    CHECK(C[2] == doctest::Approx(139.0));
    CHECK(C[3] == doctest::Approx(154.0));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
    const kernels::Ops* v = kernels::avx2_ops();
    if (!v) return;  // host has no AVX2; scalar path is the only variant
    const auto& s = kernels::scalar_ops();
    Rng rng(42);

    for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 1000u, 4097u}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        check_close(v->dot(a.data(), b.data(), n), s.dot(a.data(), b.data(), n), 1e-13,
                    1e-12);
        check_close(v->sum(a.data(), n), s.sum(a.data(), n), 1e-13, 1e-12);
        check_close(v->sum_sq(a.data(), n), s.sum_sq(a.data(), n), 1e-13, 1e-12);

        auto y1 = random_vec(n, rng);
        auto y2 = y1;
        v->axpy(1.7, a.data(), y1.data(), n);
        s.axpy(1.7, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], 1e-14, 1e-14);
    }
}

TEST_CASE("avx2 transcendental kernels match std within tolerance") {
    const kernels::Ops* v = kernels::avx2_ops();
    if (!v) return;
    Rng rng(7);

    // moderate range
    auto x = random_vec(2048, rng, -30.0, 30.0);
    std::vector<double> ve(x.size()), se(x.size());
    v->vexp(x.data(), ve.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) se[i] = std::exp(x[i]);
    for (std::size_t i = 0; i < x.size(); ++i) check_close(ve[i], se[i], 4e-15);

    // extreme range saturates instead of overflowing
    std::vector<double> xe = {-1000.0, -750.0, 709.5, 800.0};
    std::vector<double> out(4);
    v->vexp(xe.data(), out.data(), 4);
    CHECK(out[0] <= 1e-307);
    CHECK(out[1] <= 1e-307);
    CHECK(std::isfinite(out[2]));
    CHECK(out[3] >= 1e307);

    auto xs = random_vec(2048, rng, -40.0, 40.0);
    std::vector<double> vs(xs.size()), ss(xs.size());
    v->vsigmoid(xs.data(), vs.data(), xs.size());
    kernels::scalar_ops().vsigmoid(xs.data(), ss.data(), xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(std::abs(vs[i] - ss[i]) <= 1e-15 + 1e-13 * std::abs(ss[i]));

    auto xt = random_vec(2048, rng, -20.0, 20.0);
    xt.push_back(1e-9);
    xt.push_back(-1e-9);
    xt.push_back(0.0);
    std::vector<double> vt(xt.size()), st(xt.size());
    v->vtanh(xt.data(), vt.data(), xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) st[i] = std::tanh(xt[i]);
    for (std::size_t i = 0; i < xt.size(); ++i)
        CHECK(std::abs(vt[i] - st[i]) <= 1e-15 + 1e-13 * std::abs(st[i]));
}

TEST_CASE("avx2 matmul agrees with scalar for awkward shapes") {
    const kernels::Ops* v = kernels::avx2_ops();
    if (!v) return;
    const auto& s = kernels::scalar_ops();
    Rng rng(11);
    struct Shape {
        std::size_t n, k, m;
    };
    for (Shape shape : {Shape{1, 1, 1}, Shape{2, 3, 5}, Shape{7, 64, 64}, Shape{33, 17, 9},
                        Shape{5, 2, 4}, Shape{64, 64, 2}}) {
        auto A = random_vec(shape.n * shape.k, rng);
        auto B = random_vec(shape.k * shape.m, rng);
        std::vector<double> C1(shape.n * shape.m), C2(shape.n * shape.m);
        v->matmul(A.data(), B.data(), C1.data(), shape.n, shape.k, shape.m);
        s.matmul(A.data(), B.data(), C2.data(), shape.n, shape.k, shape.m);
        for (std::size_t i = 0; i < C1.size(); ++i) check_close(C1[i], C2[i], 1e-13, 1e-12);
    }
}

TEST_CASE("backend selection") {
    CHECK(kernels::select("scalar"));
    CHECK(std::string(kernels::active().name) == "scalar");
    if (kernels::avx2_ops()) {
        CHECK(kernels::select("avx2"));
        CHECK(std::string(kernels::active().name) == "avx2");
    }
    CHECK_FALSE(kernels::select("avx512-unobtainium"));
    CHECK(kernels::select("auto"));
}
