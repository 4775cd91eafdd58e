#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "calib/errors.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"
#include "calib/scores.hpp"

using namespace calib;

namespace {

PredictionOutput gauss(double m, double s) { return PredictionOutput(GaussianPred{m, s}); }

PredictionOutput two_gauss_mix(double m1, double m2) {
    std::vector<PredictionOutput> members{gauss(m1, 1.0), gauss(m2, 1.0)};
    return PredictionOutput(EnsemblePred{members, {1.0, 1.0}});
}

// random valid prediction of any kind, for the monotonicity property
PredictionOutput random_pred(Rng& rng) {
    switch (rng.index(5)) {
        case 0: return PredictionOutput(PointPred{rng.normal()});
        case 1: {
            double lo = rng.normal();
            return PredictionOutput(IntervalPred{lo, lo + 0.1 + 3.0 * rng.uniform()});
        }
        case 2: {
            std::size_t k = 2 + rng.index(5);
            std::vector<double> levels(k), values(k);
            double lv = 0.0, va = -3.0 + rng.normal();
            for (std::size_t i = 0; i < k; ++i) {
                lv += (1.0 - lv) * (0.1 + 0.5 * rng.uniform());
                levels[i] = std::min(lv, 0.99);
                va += rng.uniform() * 1.5;
                values[i] = va;
            }
            return PredictionOutput(QuantilesPred{levels, values});
        }
        case 3: return gauss(rng.normal(), 0.3 + 2.0 * rng.uniform());
        default: {
            std::vector<PredictionOutput> members{gauss(rng.normal(), 0.5 + rng.uniform()),
                                                  gauss(rng.normal(), 0.5 + rng.uniform())};
            return PredictionOutput(EnsemblePred{members, {0.5 + rng.uniform(), 1.0}});
        }
    }
}

CalibrationScore natural(const PredictionOutput& p) {
    return CalibrationScore(natural_score_kind(p.kind()));
}

}  // namespace

TEST_CASE("residue score") {
    PredictionOutput p(PointPred{2.0});
    CHECK(residue_score(p, 3.5) == doctest::Approx(1.5));
    CHECK(residue_score(p, 2.0) == doctest::Approx(0.0));
    CHECK(residue_score(p, 2.1) < residue_score(p, 2.2));
    CHECK_THROWS_AS(residue_score(gauss(0, 1), 1.0), VariantMismatchError);
}

TEST_CASE("interval score") {
    PredictionOutput p(IntervalPred{2.0, 4.0});
    CHECK(interval_score(p, 4.0) == doctest::Approx(1.0));
    CHECK(interval_score(p, 2.0) == doctest::Approx(0.0));
    CHECK(interval_score(p, 3.0) == doctest::Approx(0.5));
    PredictionOutput thin(IntervalPred{1.0, 1.0 + 1e-13});
    CHECK_THROWS_AS(interval_score(thin, 1.0), DomainError);
}

TEST_CASE("cdf score with clamping") {
    CHECK(cdf_score(gauss(0, 1), 0.0) == doctest::Approx(0.5));
    CHECK(cdf_score(gauss(0, 1), 50.0) == doctest::Approx(1.0 - 1e-12));
    CHECK(cdf_score(gauss(0, 1), -50.0) == doctest::Approx(1e-12));
    // mixture CDF symmetry, confirmed numerically
    CHECK(cdf_score(two_gauss_mix(-1.0, 1.0), 0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zscore score") {
    CHECK(zscore_score(gauss(1, 2), 5.0) == doctest::Approx(2.0));
    CHECK(zscore_score(gauss(1, 2), 1.0) == doctest::Approx(0.0));
    // mixture: mean 1, std sqrt(2) via law of total variance
    PredictionOutput mix = two_gauss_mix(0.0, 2.0);
    CHECK(zscore_score(mix, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(zscore_score(mix, 1.0 + std::sqrt(2.0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quantile score piecewise formula") {
    PredictionOutput p(QuantilesPred{{0.25, 0.75}, {1.0, 3.0}});
    CHECK(quantile_score(p, 2.0) == doctest::Approx(0.5));
    CHECK(quantile_score(p, 0.0) == doctest::Approx(-0.75));
    CHECK(quantile_score(p, 4.0) == doctest::Approx(1.75));
    // knots map to their levels
    CHECK(quantile_score(p, 1.0) == doctest::Approx(0.25));
    CHECK(quantile_score(p, 3.0) == doctest::Approx(0.75));
}

TEST_CASE("quantile score is continuous at branch boundaries and knots") {
    PredictionOutput p(QuantilesPred{{0.1, 0.4, 0.6, 0.9}, {-2.0, -0.5, 0.5, 2.0}});
    const double h = 1e-8;
    for (double y0 : {-2.0, -0.5, 0.5, 2.0, 0.0, -1.0}) {
        const double lo = quantile_score(p, y0 - h);
        const double mid = quantile_score(p, y0);
        const double hi = quantile_score(p, y0 + h);
        CHECK(std::abs(mid - lo) < 1e-6);
        CHECK(std::abs(hi - mid) < 1e-6);
    }
}

TEST_CASE("quantile ties are resolved by cumulative jitter") {
    PredictionOutput p(QuantilesPred{{0.25, 0.5, 0.75}, {1.0, 1.0, 1.0}});
    double prev = -1e18;
    for (double y : {0.5, 0.999999, 1.0, 1.0 + 1e-10, 1.5}) {
        double s = quantile_score(p, y);
        CHECK(s > prev);
        prev = s;
    }
    auto resolved = resolve_quantile_ties(std::vector<double>{1.0, 1.0, 1.0});
    CHECK(resolved[0] < resolved[1]);
    CHECK(resolved[1] < resolved[2]);
}

TEST_CASE("ensemble score: weighted sum of member scores") {
    std::vector<std::pair<CalibrationScore, PredictionOutput>> members{
        {CalibrationScore(ScoreKind::residue), PredictionOutput(PointPred{0.0})},
        {CalibrationScore(ScoreKind::residue), PredictionOutput(PointPred{-1.0})}};
    // member scores at y=1: 1.0 and 2.0
    std::vector<double> w1{1.0, 1.0}, w2{2.0, 1.0};
    CHECK(ensemble_score(members, w1, 1.0) == doctest::Approx(3.0));
    CHECK(ensemble_score(members, w2, 1.0) == doctest::Approx(4.0));
    std::vector<std::pair<CalibrationScore, PredictionOutput>> single{members[0]};
    std::vector<double> w_one{1.0};
    CHECK(ensemble_score(single, w_one, 1.0) ==
          doctest::Approx(members[0].first.evaluate(members[0].second, 1.0)));
    std::vector<std::pair<CalibrationScore, PredictionOutput>> empty;
    CHECK_THROWS_AS(ensemble_score(empty, {}, 0.0), EmptyInputError);
}

TEST_CASE("ensemble-sum dispatch uses prediction weights and natural member scores") {
    std::vector<PredictionOutput> members{gauss(0.0, 1.0), gauss(2.0, 1.0)};
    PredictionOutput mix(EnsemblePred{members, {1.0, 1.0}});
    CalibrationScore es(ScoreKind::ensemble_sum);
    // zscore members: (y-0)/1 + (y-2)/1 = 2y - 2
    CHECK(es.evaluate(mix, 1.0) == doctest::Approx(0.0));
    CHECK(es.evaluate(mix, 2.0) == doctest::Approx(2.0));
    CHECK(es.dy(mix, 0.3) == doctest::Approx(2.0));
}

TEST_CASE("strict monotonicity property across all score kinds") {
    Rng rng(99);
    for (int trial = 0; trial < 400; ++trial) {
        PredictionOutput pred = random_pred(rng);
        CalibrationScore score = natural(pred);
        double y1 = rng.uniform(-10.0, 10.0);
        double y2 = rng.uniform(-10.0, 10.0);
        if (y1 == y2) continue;
        if (y1 > y2) std::swap(y1, y2);
        CHECK(score.evaluate(pred, y1) < score.evaluate(pred, y2));
    }
    // cdf score is exempt only inside its clamp region
    Rng rng2(100);
    for (int trial = 0; trial < 200; ++trial) {
        PredictionOutput pred = gauss(rng2.normal(), 0.3 + rng2.uniform());
        double y1 = rng2.uniform(-10.0, 10.0);
        double y2 = rng2.uniform(-10.0, 10.0);
        if (y1 > y2) std::swap(y1, y2);
        const double s1 = cdf_score(pred, y1), s2 = cdf_score(pred, y2);
        const bool clamped =
            s1 <= 1e-12 || s1 >= 1.0 - 1e-12 || s2 <= 1e-12 || s2 >= 1.0 - 1e-12;
        if (!clamped && y1 < y2) CHECK(s1 < s2);
    }
}

TEST_CASE("score inverse round trip") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        PredictionOutput pred = random_pred(rng);
        CalibrationScore score = natural(pred);
        const double y = rng.uniform(-5.0, 5.0);
        const double s = score.evaluate(pred, y);
        const double y_back = score.inverse(pred, s);
        CHECK(std::abs(y_back - y) < 1e-6);
    }
}

TEST_CASE("score derivative matches finite differences away from breakpoints") {
    Rng rng(321);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        PredictionOutput pred = random_pred(rng);
        CalibrationScore score = natural(pred);
        const double y = rng.uniform(-4.0, 4.0);
        const double h = 1e-6;
        // skip draws that straddle a derivative breakpoint
        if (std::abs(score.dy(pred, y - 2 * h) - score.dy(pred, y + 2 * h)) > 1e-12) continue;
        const double fd =
            (score.evaluate(pred, y + h) - score.evaluate(pred, y - h)) / (2.0 * h);
        const double an = score.dy(pred, y);
        CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
        ++checked;
    }
    CHECK(checked > 200);
    // analytic check for the gaussian cdf score
    PredictionOutput g = gauss(0.4, 1.3);
    CalibrationScore cdf(ScoreKind::cdf);
    const double y = 0.9;
    CHECK(cdf.dy(g, y) == doctest::Approx(normal_pdf((y - 0.4) / 1.3) / 1.3).epsilon(1e-12));
}

TEST_CASE("score parsing") {
    CHECK(CalibrationScore::parse("residue").kind() == ScoreKind::residue);
    CHECK(CalibrationScore::parse("ensemble-sum").kind() == ScoreKind::ensemble_sum);
    CHECK_THROWS_AS(CalibrationScore::parse("isotonic-ish"), ConfigError);
}

TEST_CASE("zero-std ensemble is rejected by zscore") {
    // degenerate mixture with identical point mass is unrepresentable
    // (gaussian std > 0), so exercise the guard through the API contract
    CHECK_THROWS_AS(zscore_score(PredictionOutput(PointPred{0.0}), 1.0),
                    VariantMismatchError);
}
