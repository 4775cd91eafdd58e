#include "calib/scores.hpp"

#include <algorithm>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/math.hpp"

namespace calib {

double residue_score(const PredictionOutput& pred, double y) {
    return y - pred.as_point().value;
}

double interval_score(const PredictionOutput& pred, double y) {
    const auto& iv = pred.as_interval();
    const double width = iv.hi - iv.lo;
    if (width < 1e-12) throw DomainError("interval_score: degenerate interval");
    return (y - iv.lo) / width;
}

double cdf_score(const PredictionOutput& pred, double y) {
    if (!pred.has_distribution())
        throw VariantMismatchError("cdf_score needs a distribution prediction");
    double p = pred.dist_cdf(y);
    return std::clamp(p, kCdfScoreClamp, 1.0 - kCdfScoreClamp);
}

double zscore_score(const PredictionOutput& pred, double y) {
    if (!pred.has_distribution())
        throw VariantMismatchError("zscore_score needs a distribution prediction");
    const double s = pred.dist_std();
    if (!(s > 0.0)) throw DomainError("zscore_score: zero predicted std");
    return (y - pred.dist_mean()) / s;
}

std::vector<double> resolve_quantile_ties(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    if (v.size() < 2) return v;
    const double scale = std::max(1.0, std::abs(v.back() - v.front()));
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] <= v[k - 1]) v[k] = v[k - 1] + 1e-9 * scale;
    return v;
}

double quantile_score(const PredictionOutput& pred, double y) {
    const auto& q = pred.as_quantiles();
    const auto& a = q.levels;
    const std::vector<double> f = resolve_quantile_ties(q.values);
    if (y <= f.front()) return a.front() + (y - f.front());
    if (y > f.back()) return a.back() + (y - f.back());
    // f_k < y <= f_{k+1}
    std::size_t k = static_cast<std::size_t>(
                        std::lower_bound(f.begin(), f.end(), y) - f.begin()) - 1;
    return a[k] + (y - f[k]) / (f[k + 1] - f[k]) * (a[k + 1] - a[k]);
}

double ensemble_score(std::span<const std::pair<CalibrationScore, PredictionOutput>> members,
                      std::span<const double> weights, double y) {
    if (members.empty()) throw EmptyInputError("ensemble_score: empty ensemble");
    if (weights.size() != members.size())
        throw Error("ensemble_score: weights length must equal member count");
    double acc = 0.0;
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (!(weights[k] > 0.0)) throw DomainError("ensemble_score: weights must be positive");
        acc += weights[k] * members[k].first.evaluate(members[k].second, y);
    }
    return acc;
}

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::residue: return "residue";
        case ScoreKind::interval: return "interval";
        case ScoreKind::cdf: return "cdf";
        case ScoreKind::zscore: return "zscore";
        case ScoreKind::quantile: return "quantile";
        case ScoreKind::ensemble_sum: return "ensemble-sum";
    }
    return "?";
}

CalibrationScore::CalibrationScore(ScoreKind kind) : kind_(kind) {}

CalibrationScore CalibrationScore::ensemble_sum(std::vector<CalibrationScore> member_scores,
                                                std::vector<double> member_weights) {
    CalibrationScore s(ScoreKind::ensemble_sum);
    for (double w : member_weights)
        if (!(w > 0.0)) throw DomainError("ensemble-sum: member weights must be positive");
    s.member_scores_ = std::move(member_scores);
    s.member_weights_ = std::move(member_weights);
    return s;
}

CalibrationScore CalibrationScore::parse(std::string_view name) {
    if (name == "residue") return CalibrationScore(ScoreKind::residue);
    if (name == "interval") return CalibrationScore(ScoreKind::interval);
    if (name == "cdf") return CalibrationScore(ScoreKind::cdf);
    if (name == "zscore") return CalibrationScore(ScoreKind::zscore);
    if (name == "quantile") return CalibrationScore(ScoreKind::quantile);
    if (name == "ensemble-sum") return CalibrationScore(ScoreKind::ensemble_sum);
    throw ConfigError("unknown calibration score: " + std::string(name));
}

ScoreKind natural_score_kind(PredictionOutput::Kind kind) {
    switch (kind) {
        case PredictionOutput::Kind::point: return ScoreKind::residue;
        case PredictionOutput::Kind::interval: return ScoreKind::interval;
        case PredictionOutput::Kind::quantiles: return ScoreKind::quantile;
        case PredictionOutput::Kind::gaussian: return ScoreKind::zscore;
        case PredictionOutput::Kind::ensemble: return ScoreKind::ensemble_sum;
    }
    throw Error("natural_score_kind: unknown prediction kind");
}

namespace {

// Member iteration for ensemble-sum: configured member scores if present,
// otherwise each member's natural score; configured weights if present,
// otherwise the prediction's own weights.
template <typename Fn>
double ensemble_sum_fold(const CalibrationScore& self, const PredictionOutput& pred, Fn&& fn) {
    const auto& e = pred.as_ensemble();
    const auto& mscores = self.member_scores();
    const auto& mweights = self.member_weights();
    if (!mscores.empty() && mscores.size() != e.members.size())
        throw Error("ensemble-sum: configured member scores do not match member count");
    if (!mweights.empty() && mweights.size() != e.members.size())
        throw Error("ensemble-sum: configured member weights do not match member count");
    double acc = 0.0;
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        const double w = mweights.empty() ? e.weights[k] : mweights[k];
        if (!(w > 0.0)) throw DomainError("ensemble-sum: member weight must be positive");
        CalibrationScore ms = mscores.empty()
                                  ? CalibrationScore(natural_score_kind(e.members[k].kind()))
                                  : mscores[k];
        acc += fn(w, ms, e.members[k]);
    }
    return acc;
}

}  // namespace

double CalibrationScore::evaluate(const PredictionOutput& pred, double y) const {
    switch (kind_) {
        case ScoreKind::residue: return residue_score(pred, y);
        case ScoreKind::interval: return interval_score(pred, y);
        case ScoreKind::cdf: return cdf_score(pred, y);
        case ScoreKind::zscore: return zscore_score(pred, y);
        case ScoreKind::quantile: return quantile_score(pred, y);
        case ScoreKind::ensemble_sum:
            return ensemble_sum_fold(*this, pred,
                                     [y](double w, const CalibrationScore& ms,
                                         const PredictionOutput& mp) {
                                         return w * ms.evaluate(mp, y);
                                     });
    }
    throw Error("CalibrationScore::evaluate: unknown kind");
}

double CalibrationScore::dy(const PredictionOutput& pred, double y) const {
    switch (kind_) {
        case ScoreKind::residue: return 1.0;
        case ScoreKind::interval: {
            const auto& iv = pred.as_interval();
            return 1.0 / (iv.hi - iv.lo);
        }
        case ScoreKind::cdf: {
            // zero outside the clamp band, matching the clamped evaluate
            double p = pred.dist_cdf(y);
            if (p < kCdfScoreClamp || p > 1.0 - kCdfScoreClamp) return 0.0;
            return pred.dist_pdf(y);
        }
        case ScoreKind::zscore: return 1.0 / pred.dist_std();
        case ScoreKind::quantile: {
            const auto& q = pred.as_quantiles();
            const auto& a = q.levels;
            const std::vector<double> f = resolve_quantile_ties(q.values);
            if (y < f.front() || y >= f.back()) return 1.0;
            std::size_t k = static_cast<std::size_t>(
                                std::upper_bound(f.begin(), f.end(), y) - f.begin()) - 1;
            return (a[k + 1] - a[k]) / (f[k + 1] - f[k]);
        }
        case ScoreKind::ensemble_sum:
            return ensemble_sum_fold(*this, pred,
                                     [y](double w, const CalibrationScore& ms,
                                         const PredictionOutput& mp) {
                                         return w * ms.dy(mp, y);
                                     });
    }
    throw Error("CalibrationScore::dy: unknown kind");
}

bool CalibrationScore::affine_in_y(const PredictionOutput& pred) const {
    (void)pred;
    switch (kind_) {
        case ScoreKind::residue:
        case ScoreKind::interval:
        case ScoreKind::zscore: return true;
        default: return false;
    }
}

std::pair<double, double> CalibrationScore::affine_coeffs(const PredictionOutput& pred) const {
    switch (kind_) {
        case ScoreKind::residue: return {1.0, -pred.as_point().value};
        case ScoreKind::interval: {
            const auto& iv = pred.as_interval();
            double a = 1.0 / (iv.hi - iv.lo);
            return {a, -iv.lo * a};
        }
        case ScoreKind::zscore: {
            double s = pred.dist_std();
            return {1.0 / s, -pred.dist_mean() / s};
        }
        default: throw Error("affine_coeffs: score is not affine in y");
    }
}

double CalibrationScore::inverse(const PredictionOutput& pred, double s) const {
    switch (kind_) {
        case ScoreKind::residue: return pred.as_point().value + s;
        case ScoreKind::interval: {
            const auto& iv = pred.as_interval();
            return iv.lo + s * (iv.hi - iv.lo);
        }
        case ScoreKind::zscore: return pred.dist_mean() + s * pred.dist_std();
        case ScoreKind::cdf: {
            double p = std::clamp(s, kCdfScoreClamp, 1.0 - kCdfScoreClamp);
            return pred.dist_quantile(p);
        }
        case ScoreKind::quantile: {
            const auto& q = pred.as_quantiles();
            const auto& a = q.levels;
            const std::vector<double> f = resolve_quantile_ties(q.values);
            if (s <= a.front()) return f.front() + (s - a.front());
            if (s > a.back()) return f.back() + (s - a.back());
            std::size_t k = static_cast<std::size_t>(
                                std::lower_bound(a.begin(), a.end(), s) - a.begin()) - 1;
            return f[k] + (s - a[k]) / (a[k + 1] - a[k]) * (f[k + 1] - f[k]);
        }
        case ScoreKind::ensemble_sum: {
            // strictly increasing in y; bracket from the member spreads
            auto [lo, hi] = [&] {
                const auto& e = pred.as_ensemble();
                double l = 0.0, h = 0.0;
                bool first = true;
                for (const auto& m : e.members) {
                    double c = 0.0, w = 1.0;
                    switch (m.kind()) {
                        case PredictionOutput::Kind::point: c = m.as_point().value; break;
                        case PredictionOutput::Kind::interval:
                            c = 0.5 * (m.as_interval().lo + m.as_interval().hi);
                            w = m.as_interval().hi - m.as_interval().lo;
                            break;
                        case PredictionOutput::Kind::quantiles:
                            c = m.as_quantiles().values.front();
                            w = 1.0 + std::abs(m.as_quantiles().values.back() - c);
                            break;
                        default: c = m.dist_mean(); w = m.dist_std();
                    }
                    if (first) {
                        l = c - 4 * w;
                        h = c + 4 * w;
                        first = false;
                    } else {
                        l = std::min(l, c - 4 * w);
                        h = std::max(h, c + 4 * w);
                    }
                }
                return std::pair<double, double>{l, h};
            }();
            return solve_increasing([&](double y) { return evaluate(pred, y); }, s, lo, hi);
        }
    }
    throw Error("CalibrationScore::inverse: unknown kind");
}

}  // namespace calib
