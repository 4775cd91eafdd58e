#include "calib/mcc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calib/errors.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"

namespace calib {

namespace {

constexpr std::size_t kMomentNodes = 1000;

bool rows_overlap(const SplitProvenance& a, const SplitProvenance& b) {
    if (a.source_fingerprint != b.source_fingerprint) return false;
    auto i = a.row_ids.begin();
    auto j = b.row_ids.begin();
    while (i != a.row_ids.end() && j != b.row_ids.end()) {
        if (*i == *j) return true;
        if (*i < *j)
            ++i;
        else
            ++j;
    }
    return false;
}

}  // namespace

// ---------------------------------------------------------------------
// RecalibratedPredictor
// ---------------------------------------------------------------------

const CalibrationScore& RecalibratedPredictor::score() const {
    if (!score_) throw Error("recalibrated predictor has no calibration-score route");
    return *score_;
}

const Predictor& RecalibratedPredictor::base() const {
    if (!base_) throw Error("recalibrated predictor has no base predictor");
    return *base_;
}

PredictionOutput RecalibratedPredictor::predict_base(std::span<const double> x) const {
    return base().predict(x);
}

double RecalibratedPredictor::score_value(std::span<const double> x, double y) const {
    if (score_) return score_->evaluate(base_->predict(x), y);
    return xy_(x, y);
}

double RecalibratedPredictor::score_value(const PredictionOutput& pred, double y) const {
    return score().evaluate(pred, y);
}

double RecalibratedPredictor::score_inverse(const PredictionOutput& pred, double s) const {
    return score().inverse(pred, s);
}

double RecalibratedPredictor::score_inverse(std::span<const double> x, double s) const {
    if (score_) return score_->inverse(base_->predict(x), s);
    const auto& k = map_.knots();
    return solve_increasing([&](double y) { return xy_(x, y); }, s, k.front(), k.back());
}

double RecalibratedPredictor::cdf_eval(std::span<const double> x, double y) const {
    return map_.eval(score_value(x, y));
}

double RecalibratedPredictor::cdf_inverse(std::span<const double> x, double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("cdf_inverse: p must lie in (0,1)");
    return score_inverse(x, map_.inverse(p));
}

std::pair<double, std::optional<double>> RecalibratedPredictor::predictive_moments(
    std::span<const double> x) const {
    std::optional<PredictionOutput> pred;
    if (score_) pred = base_->predict(x);
    double mean = 0.0;
    std::vector<double> ys(moment_grid_u_.size());
    for (std::size_t j = 0; j < moment_grid_u_.size(); ++j) {
        ys[j] = pred ? score_->inverse(*pred, moment_grid_u_[j])
                     : score_inverse(x, moment_grid_u_[j]);
        mean += ys[j];
    }
    mean /= static_cast<double>(ys.size());
    if (!map_.has_density()) return {mean, std::nullopt};
    double var = 0.0;
    for (double yj : ys) var += (yj - mean) * (yj - mean);
    var /= static_cast<double>(ys.size());
    return {mean, std::sqrt(var)};
}

std::pair<double, double> RecalibratedPredictor::credible_interval(std::span<const double> x,
                                                                   double c) const {
    if (!(c > 0.0 && c < 1.0)) throw DomainError("credible_interval: c must lie in (0,1)");
    const double lo_p = 0.5 * (1.0 - c);
    const double hi_p = 0.5 * (1.0 + c);
    if (score_) {
        PredictionOutput pred = base_->predict(x);
        return {score_->inverse(pred, map_.inverse(lo_p)),
                score_->inverse(pred, map_.inverse(hi_p))};
    }
    return {cdf_inverse(x, lo_p), cdf_inverse(x, hi_p)};
}

void RecalibratedPredictor::finish(std::vector<double> cal_scores, InterpKind kind,
                                   std::uint64_t seed, const NafConfig& naf_config,
                                   const RecalOptions& opts) {
    if (opts.jitter_ties) {
        std::vector<double> sorted = cal_scores;
        std::sort(sorted.begin(), sorted.end());
        bool any_tie = false;
        for (std::size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i] == sorted[i - 1]) {
                any_tie = true;
                break;
            }
        if (any_tie) {
            const double range = sorted.back() - sorted.front();
            const double mag = 1e-9 * std::max(1.0, std::abs(range));
            Rng rng(opts.jitter_seed);
            for (double& s : cal_scores) s += rng.uniform(-mag, mag);
        }
    }

    map_ = fit_map(kind, cal_scores, seed, naf_config);
    diag_.n = cal_scores.size();
    diag_.tie_count = map_.tie_count();
    diag_.lambda = lambda_accuracy(map_, cal_scores);

    moment_grid_u_.resize(kMomentNodes);
    const bool clamp = !map_.continuous();
    for (std::size_t j = 0; j < kMomentNodes; ++j) {
        const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(kMomentNodes);
        moment_grid_u_[j] = map_.inverse(p, clamp);
    }
}

RecalibratedPredictor recalibrate(std::shared_ptr<const Predictor> base,
                                  CalibrationScore score, InterpKind interpolator,
                                  const Dataset& cal, std::uint64_t seed,
                                  const NafConfig& naf_config, const RecalOptions& opts) {
    if (cal.rows() == 0) throw EmptyInputError("recalibrate: empty calibration split");
    if (!base) throw Error("recalibrate: null base predictor");

    if (const SplitProvenance* train_prov = base->train_provenance(); train_prov) {
        if (cal.provenance() && rows_overlap(*train_prov, *cal.provenance()))
            throw ProvenanceError(
                "recalibrate: calibration rows overlap the base predictor's training rows");
    }

    std::vector<double> scores(cal.rows());
    for (std::size_t i = 0; i < cal.rows(); ++i)
        scores[i] = score.evaluate(base->predict(cal.row(i)), cal.label(i));

    RecalibratedPredictor out;
    out.base_ = std::move(base);
    out.score_ = std::move(score);
    out.finish(std::move(scores), interpolator, seed, naf_config, opts);
    return out;
}

RecalibratedPredictor recalibrate_xy(XYScore score, InterpKind interpolator,
                                     const Dataset& cal, std::uint64_t seed,
                                     const NafConfig& naf_config, const RecalOptions& opts) {
    if (cal.rows() == 0) throw EmptyInputError("recalibrate: empty calibration split");
    if (!score) throw Error("recalibrate: null score function");

    std::vector<double> scores(cal.rows());
    for (std::size_t i = 0; i < cal.rows(); ++i) scores[i] = score(cal.row(i), cal.label(i));

    RecalibratedPredictor out;
    out.xy_ = std::move(score);
    out.finish(std::move(scores), interpolator, seed, naf_config, opts);
    return out;
}

// ---------------------------------------------------------------------
// RecalibratedCdf
// ---------------------------------------------------------------------

RecalibratedCdf::RecalibratedCdf(const RecalibratedPredictor* parent, std::vector<double> x)
    : parent_(parent), x_(std::move(x)) {
    if (parent_->has_score_route()) pred_ = parent_->predict_base(x_);
}

double RecalibratedCdf::eval(double y) const {
    const double s = pred_ ? parent_->score_value(*pred_, y)
                           : parent_->score_value(x_, y);
    return parent_->map().eval(s);
}

double RecalibratedCdf::quantile(double p) const {
    const double u = parent_->map().inverse(p);
    return pred_ ? parent_->score_inverse(*pred_, u) : parent_->score_inverse(x_, u);
}

std::optional<double> RecalibratedCdf::mean() const {
    return parent_->predictive_moments(x_).first;
}

std::optional<double> RecalibratedCdf::std_dev() const {
    return parent_->predictive_moments(x_).second;
}

std::pair<double, double> RecalibratedCdf::support_hint() const {
    const auto& map = parent_->map();
    const bool clamp = !map.continuous();
    const double u_lo = map.inverse(clamp ? 0.5e-3 : 1e-9, clamp);
    const double u_hi = map.inverse(clamp ? 1.0 - 0.5e-3 : 1.0 - 1e-9, clamp);
    const double lo = pred_ ? parent_->score_inverse(*pred_, u_lo)
                            : parent_->score_inverse(x_, u_lo);
    const double hi = pred_ ? parent_->score_inverse(*pred_, u_hi)
                            : parent_->score_inverse(x_, u_hi);
    return {lo, hi};
}

double RecalibratedCdf::density(double y) const {
    if (!parent_->map().has_density()) return std::numeric_limits<double>::quiet_NaN();
    const double s = pred_ ? parent_->score_value(*pred_, y)
                           : parent_->score_value(x_, y);
    const double dq = parent_->map().derivative(s);
    double dphi;
    if (pred_) {
        dphi = parent_->score().dy(*pred_, y);
    } else {
        // central difference fallback for xy-route scores
        const double h = 1e-6 * (1.0 + std::abs(y));
        dphi = (parent_->score_value(x_, y + h) - parent_->score_value(x_, y - h)) / (2 * h);
    }
    return dq * dphi;
}

const PredictionOutput& RecalibratedCdf::base_prediction() const {
    if (!pred_) throw Error("xy-route predictor has no base prediction");
    return *pred_;
}

}  // namespace calib
