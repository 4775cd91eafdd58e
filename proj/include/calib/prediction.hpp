#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace calib {

class PredictionOutput;

struct PointPred {
    double value;
};

struct IntervalPred {
    double lo;
    double hi;
};

struct QuantilesPred {
    std::vector<double> levels;  // strictly increasing, in (0,1)
    std::vector<double> values;  // non-decreasing (ties allowed, scores resolve them)
};

struct GaussianPred {
    double mean;
    double std;  // strictly positive
};

struct EnsemblePred {
    std::vector<PredictionOutput> members;
    std::vector<double> weights;  // non-negative, same length, positive sum
};

// Tagged union of the supported base prediction types. Constructors
// validate the variant invariants and throw calib::Error on violation.
class PredictionOutput {
  public:
    enum class Kind { point, interval, quantiles, gaussian, ensemble };

    PredictionOutput(PointPred p);           // NOLINT(google-explicit-constructor)
    PredictionOutput(IntervalPred p);        // NOLINT
    PredictionOutput(QuantilesPred p);       // NOLINT
    PredictionOutput(GaussianPred p);        // NOLINT
    PredictionOutput(EnsemblePred p);        // NOLINT

    Kind kind() const;
    const char* kind_name() const;

    const PointPred& as_point() const;        // throws VariantMismatchError
    const IntervalPred& as_interval() const;
    const QuantilesPred& as_quantiles() const;
    const GaussianPred& as_gaussian() const;
    const EnsemblePred& as_ensemble() const;

    // Distribution support: available for Gaussian predictions and for
    // ensembles whose members all carry distributions (mixture).
    bool has_distribution() const;
    double dist_cdf(double y) const;
    double dist_pdf(double y) const;
    double dist_mean() const;
    double dist_std() const;  // mixture std via the law of total variance
    double dist_quantile(double p) const;
    std::pair<double, double> dist_support_hint() const;

  private:
    std::variant<PointPred, IntervalPred, QuantilesPred, GaussianPred, EnsemblePred> v_;
};

// Abstract CDF contract: eval is non-decreasing, quantile inverts eval
// wherever eval is continuous and strictly increasing.
class CdfView {
  public:
    virtual ~CdfView() = default;
    virtual double eval(double y) const = 0;
    virtual double quantile(double p) const;  // default: bracketed bisection
    virtual std::optional<double> mean() const = 0;
    virtual std::optional<double> std_dev() const = 0;
    virtual std::pair<double, double> support_hint() const = 0;
};

// CdfView over a distribution-typed PredictionOutput (owns a copy).
class PredictionCdf final : public CdfView {
  public:
    explicit PredictionCdf(PredictionOutput pred);
    double eval(double y) const override { return pred_.dist_cdf(y); }
    double quantile(double p) const override { return pred_.dist_quantile(p); }
    std::optional<double> mean() const override { return pred_.dist_mean(); }
    std::optional<double> std_dev() const override { return pred_.dist_std(); }
    std::pair<double, double> support_hint() const override {
        return pred_.dist_support_hint();
    }

  private:
    PredictionOutput pred_;
};

}  // namespace calib
