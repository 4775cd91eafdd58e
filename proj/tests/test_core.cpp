#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "calib/dataset.hpp"
#include "calib/errors.hpp"
#include "calib/math.hpp"
#include "calib/prediction.hpp"
#include "calib/rng.hpp"
#include "calib/synth.hpp"

using namespace calib;

namespace {

Dataset toy_dataset(std::size_t n, std::uint64_t seed = 3) {
    Rng rng(seed);
    std::vector<double> feats(2 * n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        feats[2 * i] = rng.normal();
        feats[2 * i + 1] = rng.uniform(0.0, 1.0);
        labels[i] = rng.normal();
    }
    return Dataset(std::move(feats), 2, std::move(labels), "toy");
}

}  // namespace

TEST_CASE("dataset construction validates shapes and finiteness") {
    CHECK_THROWS_AS(Dataset({1.0, 2.0}, 2, {1.0, 2.0}, "bad"), DataError);
    CHECK_THROWS_AS(Dataset({1.0, NAN}, 1, {1.0, 2.0}, "bad"), DataError);
    CHECK_THROWS_AS(Dataset({1.0, 2.0}, 1, {1.0, INFINITY}, "bad"), DataError);
    Dataset ok({1.0, 2.0}, 1, {0.5, -0.5}, "ok");
    CHECK(ok.rows() == 2);
    CHECK(ok.dim() == 1);
}

TEST_CASE("split sizes: 10 rows at (0.6,0.2,0.2) give (6,2,2)") {
    Dataset data = toy_dataset(10);
    auto [train, cal, test] = split_dataset(data, {0.6, 0.2, 0.2, 7});
    CHECK(train.rows() == 6);
    CHECK(cal.rows() == 2);
    CHECK(test.rows() == 2);
}

TEST_CASE("split is deterministic in the seed") {
    Dataset data = toy_dataset(40);
    auto [t1, c1, s1] = split_dataset(data, {0.6, 0.2, 0.2, 7});
    auto [t2, c2, s2] = split_dataset(data, {0.6, 0.2, 0.2, 7});
    CHECK(t1.provenance()->row_ids == t2.provenance()->row_ids);
    CHECK(c1.provenance()->row_ids == c2.provenance()->row_ids);
    CHECK(s1.provenance()->row_ids == s2.provenance()->row_ids);
}

TEST_CASE("different seeds permute differently but keep sizes") {
    Dataset data = toy_dataset(100);
    auto [t0, c0, s0] = split_dataset(data, {0.6, 0.2, 0.2, 0});
    auto [t1, c1, s1] = split_dataset(data, {0.6, 0.2, 0.2, 1});
    CHECK(t0.rows() == 60);
    CHECK(c0.rows() == 20);
    CHECK(s0.rows() == 20);
    CHECK(t1.rows() == 60);
    CHECK(t0.provenance()->row_ids != t1.provenance()->row_ids);
}

TEST_CASE("splits are disjoint and exhaustive for seeds 0..31") {
    Dataset data = toy_dataset(50);
    for (std::uint64_t seed = 0; seed < 32; ++seed) {
        auto [train, cal, test] = split_dataset(data, {0.6, 0.2, 0.2, seed});
        std::set<std::uint32_t> seen;
        for (const auto& part : {train, cal, test})
            for (auto id : part.provenance()->row_ids) CHECK(seen.insert(id).second);
        CHECK(seen.size() == 50);
        CHECK(*seen.rbegin() == 49);
    }
}

TEST_CASE("split rejects too-small datasets and bad fractions") {
    Dataset data = toy_dataset(8);
    CHECK_THROWS_AS(split_dataset(data, {0.6, 0.2, 0.2, 0}), DataError);
    Dataset ok = toy_dataset(30);
    CHECK_THROWS_AS(split_dataset(ok, {0.7, 0.2, 0.2, 0}), ConfigError);
}

TEST_CASE("standardizer: labels {1,2,3} map to +/-1.2247") {
    Dataset data({0.0, 0.0, 0.0}, 1, {1.0, 2.0, 3.0}, "labels");
    Standardizer s = fit_standardizer(data);
    // oracle: mean 2, population std sqrt(2/3)
    const double expected = (3.0 - 2.0) / std::sqrt(2.0 / 3.0);
    CHECK(s.apply_label(3.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(s.apply_label(2.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.apply_label(1.0) == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(1.2247448713915889).epsilon(1e-12));
}

TEST_CASE("standardizer: constant columns become zeros, round trip is identity") {
    Rng rng(5);
    std::vector<double> feats, labels;
    for (int i = 0; i < 20; ++i) {
        feats.push_back(5.0);  // constant column
        feats.push_back(rng.normal() * 3.0 + 1.0);
        labels.push_back(rng.normal() * 0.2 - 4.0);
    }
    Dataset data(feats, 2, labels, "const");
    Standardizer s = fit_standardizer(data);
    Dataset z = s.apply(data);
    for (std::size_t i = 0; i < z.rows(); ++i) CHECK(z.row(i)[0] == doctest::Approx(0.0));

    // round trip
    for (std::size_t i = 0; i < z.rows(); ++i) {
        CHECK(s.invert_label(z.label(i)) == doctest::Approx(data.label(i)).epsilon(1e-9));
        CHECK(s.invert_feature(1, z.row(i)[1]) == doctest::Approx(data.row(i)[1]).epsilon(1e-9));
    }

    // standardized stats: mean 0, std 1 per column
    Dataset big = toy_dataset(500);
    Standardizer sb = fit_standardizer(big);
    Dataset zb = sb.apply(big);
    for (std::size_t j = 0; j < zb.dim(); ++j) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < zb.rows(); ++i) m += zb.row(i)[j];
        m /= zb.rows();
        for (std::size_t i = 0; i < zb.rows(); ++i) v += (zb.row(i)[j] - m) * (zb.row(i)[j] - m);
        v /= zb.rows();
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-6);
    }
}

TEST_CASE("csv ingestion: header auto-detect, last column is the label") {
    const char* path = "test_core_tmp.csv";
    {
        std::ofstream out(path);
        out << "x1,x2,target\n";
        out << "1.0, 2.0, 3.0\n";
        out << "4.0, 5.0, 6.0\n";
        out << "\n";
        out << "7.5, -1.5, 0.25\n";
    }
    Dataset d = load_csv(path);
    CHECK(d.rows() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.label(0) == doctest::Approx(3.0));
    CHECK(d.label(2) == doctest::Approx(0.25));
    CHECK(d.row(2)[1] == doctest::Approx(-1.5));
    std::remove(path);

    {
        std::ofstream out(path);
        out << "1.0,2.0\n";
        out << "3.0,oops\n";
    }
    CHECK_THROWS_AS(load_csv(path), DataError);
    std::remove(path);
}

TEST_CASE("prediction constructors reject invariant violations") {
    CHECK_THROWS(PredictionOutput(IntervalPred{2.0, 2.0}));
    CHECK_THROWS(PredictionOutput(IntervalPred{3.0, 1.0}));
    CHECK_THROWS(PredictionOutput(GaussianPred{0.0, 0.0}));
    CHECK_THROWS(PredictionOutput(GaussianPred{0.0, -1.0}));
    CHECK_THROWS(PredictionOutput(QuantilesPred{{0.5, 0.5}, {1.0, 2.0}}));
    CHECK_THROWS(PredictionOutput(QuantilesPred{{0.25, 0.75}, {2.0, 1.0}}));
    CHECK_THROWS(PredictionOutput(QuantilesPred{{0.25, 1.5}, {1.0, 2.0}}));
    CHECK_THROWS(PredictionOutput(EnsemblePred{{}, {}}));
    {
        std::vector<PredictionOutput> members{PredictionOutput(GaussianPred{0.0, 1.0})};
        CHECK_THROWS(PredictionOutput(EnsemblePred{members, {0.0}}));
        CHECK_THROWS(PredictionOutput(EnsemblePred{members, {1.0, 2.0}}));
        CHECK_NOTHROW(PredictionOutput(EnsemblePred{members, {2.0}}));
    }
    // ties in quantile values are allowed at construction
    CHECK_NOTHROW(PredictionOutput(QuantilesPred{{0.25, 0.75}, {1.0, 1.0}}));
}

TEST_CASE("variant access throws on mismatch") {
    PredictionOutput p(PointPred{1.0});
    CHECK_THROWS_AS(p.as_interval(), VariantMismatchError);
    CHECK(p.as_point().value == 1.0);
}

TEST_CASE("gaussian and mixture distribution support") {
    PredictionOutput g(GaussianPred{1.0, 2.0});
    CHECK(g.dist_cdf(1.0) == doctest::Approx(0.5));
    CHECK(g.dist_mean() == doctest::Approx(1.0));
    CHECK(g.dist_std() == doctest::Approx(2.0));
    CHECK(g.dist_quantile(0.975) == doctest::Approx(1.0 + 2.0 * 1.959963985).epsilon(1e-6));

    std::vector<PredictionOutput> members{PredictionOutput(GaussianPred{-1.0, 1.0}),
                                          PredictionOutput(GaussianPred{1.0, 1.0})};
    PredictionOutput mix(EnsemblePred{members, {1.0, 1.0}});
    CHECK(mix.dist_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mix.dist_mean() == doctest::Approx(0.0));
    // law of total variance: var = 1 + 1 = 2
    CHECK(mix.dist_std() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    // quantile inverts the mixture CDF
    const double q = mix.dist_quantile(0.8);
    CHECK(mix.dist_cdf(q) == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("normal quantile and cdf are consistent") {
    for (double p : {0.001, 0.025, 0.2, 0.5, 0.77, 0.975, 0.9999}) {
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK_THROWS(normal_quantile(0.0));
}

TEST_CASE("ks statistic of the exact uniform grid is 0.5/m") {
    const std::size_t m = 200;
    std::vector<double> grid(m);
    for (std::size_t i = 0; i < m; ++i) grid[i] = (i + 0.5) / m;
    CHECK(ks_uniform(grid) == doctest::Approx(0.5 / m).epsilon(1e-12));
}

TEST_CASE("synthetic generators are deterministic and finite") {
    Dataset a = synth_hetero(100, 9);
    Dataset b = synth_hetero(100, 9);
    CHECK(std::equal(a.labels().begin(), a.labels().end(), b.labels().begin()));
    Dataset c = synth_linear_gauss(50, 1);
    CHECK(c.dim() == 4);
    Dataset d = synth_skew(50, 1);
    CHECK(d.rows() == 50);
}
