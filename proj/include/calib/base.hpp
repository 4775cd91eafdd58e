#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/mcc.hpp"
#include "calib/prediction.hpp"

namespace calib {

// Pinball (quantile) loss: alpha*(y-q) when y >= q, else (1-alpha)*(q-y).
double pinball_loss(double pred_q, double y, double alpha);

// Gaussian negative log likelihood: 0.5*ln(2*pi) + ln(std) + (y-mean)^2/(2*std^2).
double gaussian_nll_loss(double mean, double std, double y);

enum class BaseKind { point, interval, quantile, distribution, ensemble };

const char* base_kind_name(BaseKind k);
// "point" | "interval" | "quantile-K" | "distribution" | "ensemble"
// quantile-K carries the level count; returns it through k_out when given.
BaseKind parse_base_kind(std::string_view name, int* k_out = nullptr);

struct BaseHyper {
    int hidden = 64;
    int epochs = 2000;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    int quantile_k = 4;
    int ensemble_k = 5;
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

namespace nn {

// Fully-connected d -> h -> h -> out net with tanh hidden activations.
// Weights are stored input-major so forward passes are plain row-major
// matrix products over the batch.
struct DenseNet {
    int in = 1, hidden = 8, out = 1;
    std::vector<double> w1, b1, w2, b2, w3, b3;

    static DenseNet init(int in, int hidden, int out, std::uint64_t seed);

    struct Fwd {
        std::vector<double> h1, h2, y;
    };
    void forward(std::span<const double> x, std::size_t n, Fwd& f) const;

    // Accumulates nothing: grad is overwritten. Layout mirrors the net.
    struct Grad {
        std::vector<double> w1, b1, w2, b2, w3, b3;
        void resize_like(const DenseNet& net);
    };
    void backward(std::span<const double> x, std::size_t n, const Fwd& f,
                  std::span<const double> dy, Grad& grad) const;

    std::size_t param_count() const;
    // flat parameter access for the optimizer and finite-difference tests
    void to_flat(std::span<double> out) const;
    void from_flat(std::span<const double> in);
};

}  // namespace nn

// Loss of one head kind on raw network outputs, writing d(loss)/d(raw).
// quantile heads apply the cumulative-softplus transform internally so
// predicted quantiles are non-decreasing; distribution heads read
// (mean, softplus(raw2) + 1e-6).
double head_loss(BaseKind kind, std::span<const double> levels,
                 std::span<const double> raw, std::size_t n, std::size_t out_dim,
                 std::span<const double> labels, std::span<double> draw);

// Full training loss (forward + head) and its parameter gradient; shared
// by the training loop and the gradient-check tests.
double base_loss_and_gradient(const nn::DenseNet& net, BaseKind kind,
                              std::span<const double> levels, std::span<const double> x,
                              std::size_t n, std::span<const double> labels,
                              nn::DenseNet::Grad* grad_out);

class BasePredictor final : public Predictor {
  public:
    PredictionOutput predict(std::span<const double> x) const override;
    const SplitProvenance* train_provenance() const override {
        return prov_ ? &*prov_ : nullptr;
    }

    BaseKind kind() const { return kind_; }
    const TrainingMeta& meta() const { return meta_; }
    const std::vector<double>& levels() const { return levels_; }
    const std::vector<nn::DenseNet>& nets() const { return nets_; }

    // interval predictions whose raw heads crossed and were swapped
    std::uint64_t crossing_swaps() const { return swaps_.load(); }

  private:
    friend std::shared_ptr<BasePredictor> train_base(const Dataset&, BaseKind,
                                                     const BaseHyper&);
    BasePredictor() = default;

    BaseKind kind_ = BaseKind::point;
    int in_dim_ = 0;
    std::vector<double> levels_;
    std::vector<nn::DenseNet> nets_;  // one net, or ensemble_k members
    TrainingMeta meta_;
    std::optional<SplitProvenance> prov_;
    mutable std::atomic<std::uint64_t> swaps_{0};
};

// Full-batch training with adaptive moment estimates; deterministic in the
// seed. Throws ConvergenceError if the loss becomes non-finite.
std::shared_ptr<BasePredictor> train_base(const Dataset& train, BaseKind kind,
                                          const BaseHyper& hyper);

}  // namespace calib
