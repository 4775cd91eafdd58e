#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calib/dataset.hpp"

namespace calib {

// Built-in synthetic regression generators used by the benchmark harness
// and the acceptance suite.
//
//   linear-gauss: y = beta'x + eps,  eps ~ Normal(0, 1), x ~ Normal(0,I4)
//   hetero:       y = sin(2 x1) + (0.2 + 0.5|x1|) eps, x1 ~ Normal(0,1)
//   skew:         y = x1 + 0.6 (exp(0.8 eps) - exp(0.32)), x1 ~ Normal(0,1)

Dataset synth_linear_gauss(std::size_t rows, std::uint64_t seed);
Dataset synth_hetero(std::size_t rows, std::uint64_t seed);
Dataset synth_skew(std::size_t rows, std::uint64_t seed);

Dataset make_synthetic(std::string_view name, std::size_t rows, std::uint64_t seed);
std::vector<std::string> synthetic_names();

// Ground truth for the linear-gauss generator, for oracle tests.
std::span<const double> linear_gauss_beta();
double linear_gauss_noise_std();
double linear_gauss_true_cdf(std::span<const double> x, double y);
double linear_gauss_true_mean(std::span<const double> x);

// Ground truth for the hetero generator.
double hetero_true_cdf(double x1, double y);

}  // namespace calib
