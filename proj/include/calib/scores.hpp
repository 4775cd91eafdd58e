#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "calib/prediction.hpp"

namespace calib {

// Calibration scores: functions of (prediction, y) that are strictly
// increasing in y for every fixed valid prediction.

// y - f(x), for point predictions.
double residue_score(const PredictionOutput& pred, double y);

// (y - lo)/(hi - lo); rejects intervals narrower than 1e-12.
double interval_score(const PredictionOutput& pred, double y);

// Predicted CDF at y, clamped into [delta, 1-delta] with delta = 1e-12.
double cdf_score(const PredictionOutput& pred, double y);
inline constexpr double kCdfScoreClamp = 1e-12;

// (y - mean)/std; ensemble moments are mixture moments.
double zscore_score(const PredictionOutput& pred, double y);

// Piecewise interpolation of the predicted quantile levels with slope-1
// tails. Tied quantile values are separated by a cumulative 1e-9 jitter
// (scaled by the value range) before scoring.
double quantile_score(const PredictionOutput& pred, double y);

class CalibrationScore;

// Weighted sum of member scores, one (score, prediction) pair per member.
double ensemble_score(std::span<const std::pair<CalibrationScore, PredictionOutput>> members,
                      std::span<const double> weights, double y);

enum class ScoreKind { residue, interval, cdf, zscore, quantile, ensemble_sum };

const char* score_kind_name(ScoreKind k);

// Dispatching wrapper around the score functions above. For ensemble-sum,
// optional per-member scores/weights may be configured; by default each
// member uses its natural score and the prediction's own weights.
class CalibrationScore {
  public:
    explicit CalibrationScore(ScoreKind kind);
    static CalibrationScore ensemble_sum(std::vector<CalibrationScore> member_scores,
                                         std::vector<double> member_weights);
    // Config strings: "residue" | "interval" | "cdf" | "zscore" | "quantile"
    // | "ensemble-sum".
    static CalibrationScore parse(std::string_view name);

    ScoreKind kind() const { return kind_; }
    const char* name() const { return score_kind_name(kind_); }

    double evaluate(const PredictionOutput& pred, double y) const;

    // Right-derivative of the score in y (analytic for every kind).
    double dy(const PredictionOutput& pred, double y) const;

    // Unique y with evaluate(pred, y) = s. Analytic where the score is
    // affine in y; bracketed bisection otherwise.
    double inverse(const PredictionOutput& pred, double s) const;

    // True when the score is globally affine in y for this prediction:
    // evaluate(pred, y) = a*y + b with a > 0. Used by the closed-form CRPS.
    bool affine_in_y(const PredictionOutput& pred) const;
    // The (a, b) coefficients; only valid when affine_in_y.
    std::pair<double, double> affine_coeffs(const PredictionOutput& pred) const;

    const std::vector<CalibrationScore>& member_scores() const { return member_scores_; }
    const std::vector<double>& member_weights() const { return member_weights_; }

  private:
    ScoreKind kind_;
    std::vector<CalibrationScore> member_scores_;  // ensemble-sum only
    std::vector<double> member_weights_;           // ensemble-sum only
};

// Natural score for a prediction variant (point->residue, interval->interval,
// quantiles->quantile, gaussian->zscore, ensemble->ensemble-sum).
ScoreKind natural_score_kind(PredictionOutput::Kind kind);

// Tie resolution used by quantile_score, exposed for tests.
std::vector<double> resolve_quantile_ties(std::span<const double> values);

}  // namespace calib
