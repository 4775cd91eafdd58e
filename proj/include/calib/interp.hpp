#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace calib {

enum class InterpKind { naive, linear, random, naf };

const char* interp_kind_name(InterpKind k);
InterpKind parse_interp_kind(std::string_view name);

struct NafConfig {
    int hidden_units = 200;
    int max_iters = 5000;
    double learning_rate = 1e-2;
    double target_accuracy = 1e-3;  // stop once measured accuracy falls below
};

namespace naf {

// Raw (pre-reparameterization) flow parameters. The fitted map uses
// slopes softplus(a_hat) > 0 and convex output weights softmax(w_hat),
// which makes the flow strictly increasing with range (0,1) by
// construction. Inputs are pre-scaled by (u - in_shift)/in_scale.
struct RawParams {
    std::vector<double> a_hat;
    std::vector<double> b;
    std::vector<double> w_hat;
    double in_shift = 0.0;
    double in_scale = 1.0;
};

// Mean squared error between the flow at z[i] and targets[i], plus its
// analytic gradient. Exposed so tests can check the gradient against
// central finite differences.
double training_loss(const RawParams& p, std::span<const double> z,
                     std::span<const double> targets);
RawParams loss_gradient(const RawParams& p, std::span<const double> z,
                        std::span<const double> targets, double* loss_out = nullptr);

}  // namespace naf

// A fitted non-decreasing map R -> [0,1]. Step kinds (naive/random) have
// no density; linear and naf maps are continuous and strictly increasing
// with limits 0 and 1.
class MonotoneMap {
  public:
    MonotoneMap() = default;  // empty naive map; fitters produce real ones

    double eval(double u) const;

    // Batch evaluation; routes the naf flow through the vector kernels.
    void eval_batch(std::span<const double> u, std::span<double> out) const;

    // Right-derivative dq/du. Zero almost everywhere for step kinds.
    double derivative(double u) const;

    // Generalized inverse inf{u : eval(u) >= p}. For step maps a p outside
    // the attainable range throws BracketError unless clamp_to_knots, in
    // which case the nearest knot is returned (the boundary-mass reading
    // used by moments and CRPS).
    double inverse(double p, bool clamp_to_knots = false) const;

    InterpKind kind() const { return kind_; }
    bool continuous() const { return kind_ == InterpKind::linear || kind_ == InterpKind::naf; }
    bool has_density() const { return continuous(); }

    const std::vector<double>& knots() const { return knots_; }
    std::size_t n() const { return knots_.size(); }
    std::size_t tie_count() const { return tie_count_; }

    double random_draw() const { return random_u_; }  // random kind only
    double tail_scale() const { return tail_scale_; }  // linear kind only

    struct NafInfo {
        double achieved_accuracy = 0.0;
        int iterations = 0;
    };
    const NafInfo& naf_info() const { return naf_info_; }
    const naf::RawParams& naf_params() const { return naf_params_; }

  private:
    friend MonotoneMap fit_naive(std::span<const double>);
    friend MonotoneMap fit_linear(std::span<const double>);
    friend MonotoneMap fit_random_given(std::span<const double>, double);
    friend MonotoneMap fit_naf(std::span<const double>, const NafConfig&);

    InterpKind kind_ = InterpKind::naive;
    std::vector<double> knots_;  // sorted scores
    std::size_t tie_count_ = 0;
    double random_u_ = 0.0;
    double tail_scale_ = 1.0;

    // naf: post-reparameterization weights for fast evaluation
    std::vector<double> naf_a_, naf_b_, naf_w_;
    double naf_shift_ = 0.0, naf_scale_ = 1.0;
    naf::RawParams naf_params_;
    NafInfo naf_info_;
};

// Step map q(u) = i/n on [u_(i), u_(i+1)), 0 below the first knot.
MonotoneMap fit_naive(std::span<const double> scores);

// Piecewise-linear map with q(u_(i)) = i/(n+1) exactly and exponential
// tails (scale = median knot spacing) so the map is a strictly increasing
// bijection onto (0,1).
MonotoneMap fit_linear(std::span<const double> scores);

// Step map q(u) = (i + U)/(n+1) with one shared uniform draw per fit.
MonotoneMap fit_random(std::span<const double> scores, std::uint64_t seed);
MonotoneMap fit_random_given(std::span<const double> scores, double u01);

// Single-block sigmoidal flow trained by full-batch gradient descent with
// adaptive moment estimates. Throws ConvergenceError (carrying the
// achieved accuracy) if target_accuracy is not reached in max_iters.
MonotoneMap fit_naf(std::span<const double> scores, const NafConfig& config = {});

MonotoneMap fit_map(InterpKind kind, std::span<const double> scores, std::uint64_t seed,
                    const NafConfig& naf_config = {});

// max_i |q(u_(i)) * (n+1) - i| over the sorted scores the map was fit on.
double lambda_accuracy(const MonotoneMap& map, std::span<const double> scores);

}  // namespace calib
