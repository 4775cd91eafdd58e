#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "calib/errors.hpp"
#include "calib/interp.hpp"
#include "calib/rng.hpp"

using namespace calib;

TEST_CASE("naive map: step formula, tails, accuracy of exactly 1") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    MonotoneMap m = fit_naive(scores);
    CHECK(m.eval(1.5) == doctest::Approx(1.0 / 3.0));
    CHECK(m.eval(0.0) == doctest::Approx(0.0));
    CHECK(m.eval(3.0) == doctest::Approx(1.0));
    CHECK(m.eval(99.0) == doctest::Approx(1.0));
    CHECK(m.eval(1.0) == doctest::Approx(1.0 / 3.0));
    // max_i |q(u_(i))*(n+1) - i| = |(3/3)*4 - 3| = 1
    CHECK(lambda_accuracy(m, scores) == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_naive({}), EmptyInputError);
}

TEST_CASE("linear map: knots at i/(n+1), interpolation, exponential tails") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    MonotoneMap m = fit_linear(scores);
    CHECK(m.eval(2.5) == doctest::Approx(0.625));
    CHECK(m.eval(2.0) == doctest::Approx(0.5));
    CHECK(m.eval(1.0) == doctest::Approx(0.25));
    CHECK(m.eval(3.0) == doctest::Approx(0.75));
    // tails approach 0 and 1
    CHECK(m.eval(-60.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.eval(60.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.eval(-1e9) >= 0.0);
    CHECK(m.eval(1e9) <= 1.0);
    // continuity at the boundary knots
    CHECK(m.eval(1.0 - 1e-12) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(m.eval(3.0 + 1e-12) == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(lambda_accuracy(m, scores) == doctest::Approx(0.0));
}

TEST_CASE("linear map is 0-accurate on random score sets of many sizes") {
    Rng rng(17);
    for (std::size_t n : {1u, 2u, 3u, 10u, 137u, 500u}) {
        std::vector<double> scores(n);
        for (double& s : scores) s = rng.normal() * 3.0;
        MonotoneMap m = fit_linear(scores);
        CHECK(lambda_accuracy(m, scores) <= 1e-12);
    }
}

TEST_CASE("random map: single shared draw, determinism, accuracy U") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    MonotoneMap m = fit_random_given(scores, 0.5);
    CHECK(m.eval(1.5) == doctest::Approx(0.375));
    CHECK(m.eval(0.0) == doctest::Approx(0.125));  // i=0 branch: U/(n+1)
    CHECK(m.eval(3.5) == doctest::Approx((3.0 + 0.5) / 4.0));
    CHECK(lambda_accuracy(m, scores) == doctest::Approx(0.5));

    MonotoneMap a = fit_random(scores, 42);
    MonotoneMap b = fit_random(scores, 42);
    CHECK(a.random_draw() == b.random_draw());
    for (double u : {-1.0, 1.2, 2.7, 9.0}) CHECK(a.eval(u) == b.eval(u));
    // accuracy below 1 almost surely
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        MonotoneMap r = fit_random(scores, seed);
        CHECK(lambda_accuracy(r, scores) < 1.0);
    }
}

TEST_CASE("all fitters produce non-decreasing maps (1e4 random pairs)") {
    Rng rng(23);
    std::vector<double> scores(40);
    for (double& s : scores) s = rng.normal();
    const MonotoneMap maps[] = {fit_naive(scores), fit_linear(scores),
                                fit_random(scores, 3),
                                fit_naf(scores, NafConfig{32, 3000, 1e-2, 5e-3})};
    for (const auto& m : maps) {
        for (int t = 0; t < 10000; ++t) {
            double u1 = rng.uniform(-8.0, 8.0);
            double u2 = rng.uniform(-8.0, 8.0);
            if (u1 > u2) std::swap(u1, u2);
            CHECK(m.eval(u1) <= m.eval(u2));
            const double q = m.eval(u1);
            CHECK(q >= 0.0);
            CHECK(q <= 1.0);
        }
    }
}

TEST_CASE("map inverse: analytic for linear, generalized for steps") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    MonotoneMap lin = fit_linear(scores);
    for (double p : {0.05, 0.25, 0.4, 0.5, 0.625, 0.75, 0.9, 0.999}) {
        const double u = lin.inverse(p);
        CHECK(lin.eval(u) == doctest::Approx(p).epsilon(1e-10));
    }
    MonotoneMap nv = fit_naive(scores);
    CHECK(nv.inverse(0.2) == doctest::Approx(1.0));   // ceil(0.6)=1st knot
    CHECK(nv.inverse(1.0 / 3.0) == doctest::Approx(1.0));
    CHECK(nv.inverse(0.5) == doctest::Approx(2.0));
    CHECK(nv.inverse(1.0) == doctest::Approx(3.0));

    MonotoneMap rd = fit_random_given(scores, 0.5);
    CHECK(rd.inverse(0.375) == doctest::Approx(1.0));
    CHECK(rd.inverse(0.4) == doctest::Approx(2.0));
    CHECK_THROWS_AS(rd.inverse(0.01), BracketError);
    CHECK_THROWS_AS(rd.inverse(0.99), BracketError);
    CHECK(rd.inverse(0.01, true) == doctest::Approx(1.0));
    CHECK(rd.inverse(0.99, true) == doctest::Approx(3.0));
}

TEST_CASE("tie handling: stable sort keeps duplicates, count reported") {
    std::vector<double> scores{2.0, 1.0, 2.0, 3.0, 2.0};
    MonotoneMap m = fit_linear(scores);
    CHECK(m.tie_count() == 2);
    CHECK(std::is_sorted(m.knots().begin(), m.knots().end()));
    // eval stays monotone through the tied block
    CHECK(m.eval(2.0 - 1e-9) <= m.eval(2.0));
    CHECK(m.eval(2.0) <= m.eval(2.0 + 1e-9));
}

TEST_CASE("derivative structure: steps flat, linear piecewise-constant, naf smooth") {
    Rng rng(31);
    std::vector<double> scores(25);
    for (double& s : scores) s = rng.normal();
    MonotoneMap nv = fit_naive(scores);
    MonotoneMap rd = fit_random(scores, 1);
    MonotoneMap ln = fit_linear(scores);
    CHECK_FALSE(nv.has_density());
    CHECK_FALSE(rd.has_density());
    CHECK(ln.has_density());
    CHECK(nv.derivative(0.3) == 0.0);
    CHECK(rd.derivative(0.3) == 0.0);

    // linear: derivative constant inside a segment, jumps at knots
    std::vector<double> ks = ln.knots();
    const double mid = 0.5 * (ks[3] + ks[4]);
    CHECK(ln.derivative(mid) == doctest::Approx(ln.derivative(mid + 0.1 * (ks[4] - ks[3]))));
    CHECK(ln.derivative(mid) ==
          doctest::Approx(1.0 / ((ks.size() + 1.0) * (ks[4] - ks[3]))));

    // step maps are discontinuous at knots; linear map is continuous
    const double k0 = ks[5];
    CHECK(std::abs(nv.eval(k0) - nv.eval(k0 - 1e-12)) > 1e-3);
    CHECK(std::abs(ln.eval(k0) - ln.eval(k0 - 1e-12)) < 1e-9);

    MonotoneMap nf = fit_naf(scores, NafConfig{32, 3000, 1e-2, 5e-3});
    // naf: derivative continuous (and positive)
    for (double u : {ks[2], ks[10], 0.5 * (ks[2] + ks[3])}) {
        CHECK(nf.derivative(u) > 0.0);
        CHECK(std::abs(nf.derivative(u + 1e-7) - nf.derivative(u)) < 1e-4);
    }
}

TEST_CASE("naf: analytic derivative matches central differences") {
    Rng rng(37);
    std::vector<double> scores(30);
    for (double& s : scores) s = rng.normal();
    MonotoneMap nf = fit_naf(scores, NafConfig{64, 3000, 1e-2, 5e-3});
    for (int t = 0; t < 100; ++t) {
        const double u = rng.uniform(-3.0, 3.0);
        const double h = 1e-5;
        const double fd = (nf.eval(u + h) - nf.eval(u - h)) / (2.0 * h);
        const double an = nf.derivative(u);
        CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
        CHECK(an > 0.0);
    }
}

TEST_CASE("naf training loss gradient matches finite differences") {
    const std::vector<double> u{-1.2, -0.4, 0.3, 0.7, 2.0};
    const double shift = 0.4, scale = 0.8;
    std::vector<double> z(u.size()), t(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        z[i] = (u[i] - shift) / scale;
        t[i] = (i + 1.0) / (u.size() + 1.0);
    }
    naf::RawParams p;
    p.in_shift = shift;
    p.in_scale = scale;
    Rng rng(41);
    for (int j = 0; j < 6; ++j) {
        p.a_hat.push_back(rng.uniform(-0.5, 1.0));
        p.b.push_back(rng.uniform(-1.0, 1.0));
        p.w_hat.push_back(rng.uniform(-0.3, 0.3));
    }
    naf::RawParams g = naf::loss_gradient(p, z, t);
    auto ref = [&](naf::RawParams& q, std::size_t i) -> double& {
        if (i < 6) return q.a_hat[i];
        if (i < 12) return q.b[i - 6];
        return q.w_hat[i - 12];
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < 18; ++i) {
        naf::RawParams q = p;
        ref(q, i) += h;
        const double fp = naf::training_loss(q, z, t);
        ref(q, i) -= 2 * h;
        const double fm = naf::training_loss(q, z, t);
        const double fd = (fp - fm) / (2 * h);
        naf::RawParams gc = g;
        const double an = ref(gc, i);
        CHECK(std::abs(fd - an) <= 1e-4 * std::max({std::abs(fd), std::abs(an), 1e-8}));
    }
}

TEST_CASE("naf reaches the default accuracy target on a small set") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    MonotoneMap m = fit_naf(scores, NafConfig{200, 5000, 1e-2, 1e-3});
    CHECK(lambda_accuracy(m, scores) <= 1e-3);
    CHECK(m.naf_info().achieved_accuracy <= 1e-3);
    // strictly increasing with range inside (0,1)
    CHECK(m.eval(-1e8) < 1e-6);
    CHECK(m.eval(1e8) > 1.0 - 1e-6);
}

TEST_CASE("naf convergence failure carries the achieved accuracy") {
    Rng rng(53);
    std::vector<double> scores(64);
    for (double& s : scores) s = rng.normal();
    // 1 unit / 1 iteration cannot hit 1e-6
    try {
        fit_naf(scores, NafConfig{1, 1, 1e-2, 1e-6});
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.achieved_accuracy > 1e-6);
        CHECK(std::isfinite(e.achieved_accuracy));
    }
}

TEST_CASE("interp parsing and dispatch") {
    CHECK(parse_interp_kind("naive") == InterpKind::naive);
    CHECK(parse_interp_kind("naf") == InterpKind::naf);
    CHECK_THROWS_AS(parse_interp_kind("spline"), ConfigError);
    std::vector<double> scores{0.5, -0.5};
    CHECK(fit_map(InterpKind::linear, scores, 0).kind() == InterpKind::linear);
    CHECK(fit_map(InterpKind::random, scores, 9).kind() == InterpKind::random);
}
