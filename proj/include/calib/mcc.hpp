#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/interp.hpp"
#include "calib/prediction.hpp"
#include "calib/scores.hpp"

namespace calib {

// Base predictor handle: anything mapping a feature vector to a
// PredictionOutput. Trained models report the provenance of their
// training rows so recalibration can reject overlapping data.
class Predictor {
  public:
    virtual ~Predictor() = default;
    virtual PredictionOutput predict(std::span<const double> x) const = 0;
    virtual const SplitProvenance* train_provenance() const { return nullptr; }
};

class FunctionPredictor final : public Predictor {
  public:
    using Fn = std::function<PredictionOutput(std::span<const double>)>;
    explicit FunctionPredictor(Fn fn) : fn_(std::move(fn)) {}
    PredictionOutput predict(std::span<const double> x) const override { return fn_(x); }

  private:
    Fn fn_;
};

// Score given directly as a function of (x, y), strictly increasing in y.
// Used when the score cannot be factored through a PredictionOutput
// (e.g. signed scores built from non-conformity functions).
using XYScore = std::function<double(std::span<const double>, double)>;

struct CalDiagnostics {
    std::size_t n = 0;
    std::size_t tie_count = 0;
    double lambda = 0.0;  // measured accuracy of the fitted map
};

struct RecalOptions {
    bool jitter_ties = false;  // add uniform noise of 1e-9 * range to tied scores
    std::uint64_t jitter_seed = 0;
};

class RecalibratedPredictor;

// CdfView over the recalibrated distribution at one fixed input.
class RecalibratedCdf final : public CdfView {
  public:
    double eval(double y) const override;
    double quantile(double p) const override;
    std::optional<double> mean() const override;
    std::optional<double> std_dev() const override;
    std::pair<double, double> support_hint() const override;

    double density(double y) const;  // 0-or-throw free; NaN when no density
    const PredictionOutput& base_prediction() const;

  private:
    friend class RecalibratedPredictor;
    RecalibratedCdf(const RecalibratedPredictor* parent, std::vector<double> x);

    const RecalibratedPredictor* parent_;
    std::vector<double> x_;
    std::optional<PredictionOutput> pred_;  // cached base prediction (score route)
};

// Composition H[x](y) = q(phi(f(x), y)) with full CDF support.
class RecalibratedPredictor {
  public:
    double cdf_eval(std::span<const double> x, double y) const;

    // Inverse CDF: |H[x](y) - p| <= 1e-9 for continuous maps, generalized
    // inverse for step maps. Throws BracketError when p is outside the
    // attainable range of a step map.
    double cdf_inverse(std::span<const double> x, double p) const;

    // Mean and std by quantile-grid quadrature (1000 midpoint nodes).
    // std is undefined for step maps.
    std::pair<double, std::optional<double>> predictive_moments(std::span<const double> x) const;

    // Centered credible interval (H^{-1}((1-c)/2), H^{-1}((1+c)/2)).
    std::pair<double, double> credible_interval(std::span<const double> x, double c) const;

    RecalibratedCdf cdf(std::span<const double> x) const { return {this, {x.begin(), x.end()}}; }

    const MonotoneMap& map() const { return map_; }
    const CalDiagnostics& diagnostics() const { return diag_; }

    bool has_score_route() const { return score_.has_value(); }
    const CalibrationScore& score() const;
    const Predictor& base() const;
    PredictionOutput predict_base(std::span<const double> x) const;

    // phi(f(x), y) (score route) or phi(x, y) (xy route)
    double score_value(std::span<const double> x, double y) const;
    double score_value(const PredictionOutput& pred, double y) const;

    // y with score = s at this x / prediction
    double score_inverse(std::span<const double> x, double s) const;
    double score_inverse(const PredictionOutput& pred, double s) const;

    const std::vector<double>& moment_grid_u() const { return moment_grid_u_; }

  private:
    friend RecalibratedPredictor recalibrate(std::shared_ptr<const Predictor>,
                                             CalibrationScore, InterpKind, const Dataset&,
                                             std::uint64_t, const NafConfig&,
                                             const RecalOptions&);
    friend RecalibratedPredictor recalibrate_xy(XYScore, InterpKind, const Dataset&,
                                                std::uint64_t, const NafConfig&,
                                                const RecalOptions&);

    RecalibratedPredictor() = default;
    void finish(std::vector<double> cal_scores, InterpKind kind, std::uint64_t seed,
                const NafConfig& naf_config, const RecalOptions& opts);

    std::shared_ptr<const Predictor> base_;
    std::optional<CalibrationScore> score_;
    XYScore xy_;
    MonotoneMap map_;
    CalDiagnostics diag_;
    std::vector<double> moment_grid_u_;  // map inverse at the 1000-node grid
};

// Algorithm: compute calibration scores on the held-out split, fit the
// interpolation map, return the composed CDF predictor.
RecalibratedPredictor recalibrate(std::shared_ptr<const Predictor> base,
                                  CalibrationScore score, InterpKind interpolator,
                                  const Dataset& cal, std::uint64_t seed,
                                  const NafConfig& naf_config = {},
                                  const RecalOptions& opts = {});

RecalibratedPredictor recalibrate_xy(XYScore score, InterpKind interpolator,
                                     const Dataset& cal, std::uint64_t seed,
                                     const NafConfig& naf_config = {},
                                     const RecalOptions& opts = {});

}  // namespace calib
