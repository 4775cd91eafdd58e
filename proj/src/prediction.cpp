#include "calib/prediction.hpp"

#include <algorithm>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/math.hpp"

namespace calib {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
}

}  // namespace

PredictionOutput::PredictionOutput(PointPred p) : v_(p) {
    require_finite(p.value, "point prediction");
}

PredictionOutput::PredictionOutput(IntervalPred p) : v_(p) {
    require_finite(p.lo, "interval prediction");
    require_finite(p.hi, "interval prediction");
    if (!(p.lo < p.hi)) throw Error("interval prediction: lo must be < hi");
}

PredictionOutput::PredictionOutput(QuantilesPred p) : v_(std::move(p)) {
    const auto& q = std::get<QuantilesPred>(v_);
    if (q.levels.empty() || q.levels.size() != q.values.size())
        throw Error("quantile prediction: levels/values must be non-empty and equal length");
    for (std::size_t k = 0; k < q.levels.size(); ++k) {
        require_finite(q.levels[k], "quantile level");
        require_finite(q.values[k], "quantile value");
        if (!(q.levels[k] > 0.0 && q.levels[k] < 1.0))
            throw Error("quantile prediction: levels must lie in (0,1)");
        if (k > 0 && !(q.levels[k] > q.levels[k - 1]))
            throw Error("quantile prediction: levels must be strictly increasing");
        if (k > 0 && q.values[k] < q.values[k - 1])
            throw Error("quantile prediction: values must be non-decreasing");
    }
}

PredictionOutput::PredictionOutput(GaussianPred p) : v_(p) {
    require_finite(p.mean, "gaussian prediction");
    require_finite(p.std, "gaussian prediction");
    if (!(p.std > 0.0)) throw Error("gaussian prediction: std must be positive");
}

PredictionOutput::PredictionOutput(EnsemblePred p) : v_(std::move(p)) {
    const auto& e = std::get<EnsemblePred>(v_);
    if (e.members.empty()) throw EmptyInputError("ensemble prediction: no members");
    if (e.weights.size() != e.members.size())
        throw Error("ensemble prediction: weights length must equal member count");
    double sum = 0.0;
    for (double w : e.weights) {
        require_finite(w, "ensemble weight");
        if (w < 0.0) throw Error("ensemble prediction: weights must be non-negative");
        sum += w;
    }
    if (!(sum > 0.0)) throw Error("ensemble prediction: weight sum must be positive");
}

PredictionOutput::Kind PredictionOutput::kind() const {
    return static_cast<Kind>(v_.index());
}

const char* PredictionOutput::kind_name() const {
    switch (kind()) {
        case Kind::point: return "point";
        case Kind::interval: return "interval";
        case Kind::quantiles: return "quantiles";
        case Kind::gaussian: return "gaussian";
        case Kind::ensemble: return "ensemble";
    }
    return "?";
}

namespace {
[[noreturn]] void mismatch(const char* want, const char* got) {
    throw VariantMismatchError(std::string("expected ") + want + " prediction, got " + got);
}
}  // namespace

const PointPred& PredictionOutput::as_point() const {
    if (auto* p = std::get_if<PointPred>(&v_)) return *p;
    mismatch("point", kind_name());
}
const IntervalPred& PredictionOutput::as_interval() const {
    if (auto* p = std::get_if<IntervalPred>(&v_)) return *p;
    mismatch("interval", kind_name());
}
const QuantilesPred& PredictionOutput::as_quantiles() const {
    if (auto* p = std::get_if<QuantilesPred>(&v_)) return *p;
    mismatch("quantiles", kind_name());
}
const GaussianPred& PredictionOutput::as_gaussian() const {
    if (auto* p = std::get_if<GaussianPred>(&v_)) return *p;
    mismatch("gaussian", kind_name());
}
const EnsemblePred& PredictionOutput::as_ensemble() const {
    if (auto* p = std::get_if<EnsemblePred>(&v_)) return *p;
    mismatch("ensemble", kind_name());
}

bool PredictionOutput::has_distribution() const {
    switch (kind()) {
        case Kind::gaussian: return true;
        case Kind::ensemble: {
            for (const auto& m : as_ensemble().members)
                if (!m.has_distribution()) return false;
            return true;
        }
        default: return false;
    }
}

double PredictionOutput::dist_cdf(double y) const {
    if (auto* g = std::get_if<GaussianPred>(&v_)) return normal_cdf((y - g->mean) / g->std);
    const auto& e = as_ensemble();
    double wsum = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        acc += e.weights[k] * e.members[k].dist_cdf(y);
        wsum += e.weights[k];
    }
    return acc / wsum;
}

double PredictionOutput::dist_pdf(double y) const {
    if (auto* g = std::get_if<GaussianPred>(&v_))
        return normal_pdf((y - g->mean) / g->std) / g->std;
    const auto& e = as_ensemble();
    double wsum = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        acc += e.weights[k] * e.members[k].dist_pdf(y);
        wsum += e.weights[k];
    }
    return acc / wsum;
}

double PredictionOutput::dist_mean() const {
    if (auto* g = std::get_if<GaussianPred>(&v_)) return g->mean;
    const auto& e = as_ensemble();
    double wsum = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        acc += e.weights[k] * e.members[k].dist_mean();
        wsum += e.weights[k];
    }
    return acc / wsum;
}

double PredictionOutput::dist_std() const {
    if (auto* g = std::get_if<GaussianPred>(&v_)) return g->std;
    const auto& e = as_ensemble();
    double wsum = 0.0, second = 0.0, first = 0.0;
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        double m = e.members[k].dist_mean();
        double s = e.members[k].dist_std();
        second += e.weights[k] * (s * s + m * m);
        first += e.weights[k] * m;
        wsum += e.weights[k];
    }
    first /= wsum;
    second /= wsum;
    double var = std::max(0.0, second - first * first);
    return std::sqrt(var);
}

std::pair<double, double> PredictionOutput::dist_support_hint() const {
    if (auto* g = std::get_if<GaussianPred>(&v_))
        return {g->mean - 10.0 * g->std, g->mean + 10.0 * g->std};
    const auto& e = as_ensemble();
    double lo = 0.0, hi = 0.0;
    bool firstm = true;
    for (const auto& m : e.members) {
        auto [l, h] = m.dist_support_hint();
        if (firstm) {
            lo = l;
            hi = h;
            firstm = false;
        } else {
            lo = std::min(lo, l);
            hi = std::max(hi, h);
        }
    }
    return {lo, hi};
}

double PredictionOutput::dist_quantile(double p) const {
    if (auto* g = std::get_if<GaussianPred>(&v_))
        return g->mean + g->std * normal_quantile(p);
    if (!(p > 0.0 && p < 1.0)) throw Error("dist_quantile: p must be in (0,1)");
    auto [lo, hi] = dist_support_hint();
    return solve_increasing([this](double y) { return dist_cdf(y); }, p, lo, hi);
}

double CdfView::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw Error("CdfView::quantile: p must be in (0,1)");
    auto [lo, hi] = support_hint();
    return solve_increasing([this](double y) { return eval(y); }, p, lo, hi);
}

PredictionCdf::PredictionCdf(PredictionOutput pred) : pred_(std::move(pred)) {
    if (!pred_.has_distribution())
        throw VariantMismatchError("PredictionCdf requires a distribution prediction");
}

}  // namespace calib
