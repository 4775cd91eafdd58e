#include "calib/synth.hpp"

#include <array>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"

namespace calib {

namespace {
constexpr std::array<double, 4> kBeta = {1.5, -1.0, 0.5, 0.25};
constexpr double kNoiseStd = 1.0;
}  // namespace

std::span<const double> linear_gauss_beta() { return kBeta; }
double linear_gauss_noise_std() { return kNoiseStd; }

double linear_gauss_true_mean(std::span<const double> x) {
    double m = 0.0;
    for (std::size_t j = 0; j < kBeta.size(); ++j) m += kBeta[j] * x[j];
    return m;
}

double linear_gauss_true_cdf(std::span<const double> x, double y) {
    return normal_cdf((y - linear_gauss_true_mean(x)) / kNoiseStd);
}

double hetero_true_cdf(double x1, double y) {
    const double mu = std::sin(2.0 * x1);
    const double sd = 0.2 + 0.5 * std::abs(x1);
    return normal_cdf((y - mu) / sd);
}

Dataset synth_linear_gauss(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = kBeta.size();
    std::vector<double> feats(rows * d), labels(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            feats[i * d + j] = rng.normal();
            m += kBeta[j] * feats[i * d + j];
        }
        labels[i] = m + kNoiseStd * rng.normal();
    }
    return Dataset(std::move(feats), d, std::move(labels), "linear-gauss");
}

Dataset synth_hetero(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> feats(rows), labels(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double x = rng.normal();
        feats[i] = x;
        labels[i] = std::sin(2.0 * x) + (0.2 + 0.5 * std::abs(x)) * rng.normal();
    }
    return Dataset(std::move(feats), 1, std::move(labels), "hetero");
}

Dataset synth_skew(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> feats(rows), labels(rows);
    const double centering = std::exp(0.32);  // E[exp(0.8 eps)]
    for (std::size_t i = 0; i < rows; ++i) {
        const double x = rng.normal();
        feats[i] = x;
        labels[i] = x + 0.6 * (std::exp(0.8 * rng.normal()) - centering);
    }
    return Dataset(std::move(feats), 1, std::move(labels), "skew");
}

Dataset make_synthetic(std::string_view name, std::size_t rows, std::uint64_t seed) {
    if (name == "linear-gauss") return synth_linear_gauss(rows, seed);
    if (name == "hetero") return synth_hetero(rows, seed);
    if (name == "skew") return synth_skew(rows, seed);
    throw ConfigError("unknown synthetic generator: " + std::string(name));
}

std::vector<std::string> synthetic_names() { return {"linear-gauss", "hetero", "skew"}; }

}  // namespace calib
