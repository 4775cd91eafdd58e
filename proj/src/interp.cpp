#include "calib/interp.hpp"

#include <algorithm>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/kernels.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"

namespace calib {

const char* interp_kind_name(InterpKind k) {
    switch (k) {
        case InterpKind::naive: return "naive";
        case InterpKind::linear: return "linear";
        case InterpKind::random: return "random";
        case InterpKind::naf: return "naf";
    }
    return "?";
}

InterpKind parse_interp_kind(std::string_view name) {
    if (name == "naive") return InterpKind::naive;
    if (name == "linear") return InterpKind::linear;
    if (name == "random") return InterpKind::random;
    if (name == "naf") return InterpKind::naf;
    throw ConfigError("unknown interpolator: " + std::string(name));
}

namespace {

std::vector<double> sorted_knots(std::span<const double> scores, std::size_t* tie_count) {
    if (scores.empty()) throw EmptyInputError("interpolation: empty score vector");
    std::vector<double> k(scores.begin(), scores.end());
    for (double v : k)
        if (!std::isfinite(v)) throw DomainError("interpolation: non-finite score");
    std::stable_sort(k.begin(), k.end());
    std::size_t ties = 0;
    for (std::size_t i = 1; i < k.size(); ++i)
        if (k[i] == k[i - 1]) ++ties;
    *tie_count = ties;
    return k;
}

double median_positive_spacing(const std::vector<double>& k) {
    std::vector<double> sp;
    sp.reserve(k.size());
    for (std::size_t i = 1; i < k.size(); ++i)
        if (k[i] > k[i - 1]) sp.push_back(k[i] - k[i - 1]);
    if (sp.empty()) return 1.0;
    std::nth_element(sp.begin(), sp.begin() + sp.size() / 2, sp.end());
    return sp[sp.size() / 2];
}

// number of knots <= u
std::size_t rank_leq(const std::vector<double>& k, double u) {
    return static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), u) - k.begin());
}

}  // namespace

MonotoneMap fit_naive(std::span<const double> scores) {
    MonotoneMap m;
    m.kind_ = InterpKind::naive;
    m.knots_ = sorted_knots(scores, &m.tie_count_);
    return m;
}

MonotoneMap fit_linear(std::span<const double> scores) {
    MonotoneMap m;
    m.kind_ = InterpKind::linear;
    m.knots_ = sorted_knots(scores, &m.tie_count_);
    m.tail_scale_ = median_positive_spacing(m.knots_);
    return m;
}

MonotoneMap fit_random_given(std::span<const double> scores, double u01) {
    if (!(u01 > 0.0 && u01 < 1.0)) throw DomainError("fit_random: U must lie in (0,1)");
    MonotoneMap m;
    m.kind_ = InterpKind::random;
    m.knots_ = sorted_knots(scores, &m.tie_count_);
    m.random_u_ = u01;
    return m;
}

MonotoneMap fit_random(std::span<const double> scores, std::uint64_t seed) {
    Rng rng(seed);
    return fit_random_given(scores, rng.uniform_open());
}

MonotoneMap fit_map(InterpKind kind, std::span<const double> scores, std::uint64_t seed,
                    const NafConfig& naf_config) {
    switch (kind) {
        case InterpKind::naive: return fit_naive(scores);
        case InterpKind::linear: return fit_linear(scores);
        case InterpKind::random: return fit_random(scores, seed);
        case InterpKind::naf: return fit_naf(scores, naf_config);
    }
    throw Error("fit_map: unknown kind");
}

double MonotoneMap::eval(double u) const {
    const std::size_t n = knots_.size();
    const double np1 = static_cast<double>(n + 1);
    switch (kind_) {
        case InterpKind::naive: {
            std::size_t r = rank_leq(knots_, u);
            return static_cast<double>(r) / static_cast<double>(n);
        }
        case InterpKind::random: {
            std::size_t r = rank_leq(knots_, u);
            return (static_cast<double>(r) + random_u_) / np1;
        }
        case InterpKind::linear: {
            std::size_t r = rank_leq(knots_, u);
            if (r == 0) return std::exp((u - knots_.front()) / tail_scale_) / np1;
            if (r == n) return 1.0 - std::exp(-(u - knots_.back()) / tail_scale_) / np1;
            const double lo = knots_[r - 1], hi = knots_[r];
            return (static_cast<double>(r) + (u - lo) / (hi - lo)) / np1;
        }
        case InterpKind::naf: {
            double z = (u - naf_shift_) / naf_scale_;
            double acc = 0.0;
            for (std::size_t j = 0; j < naf_w_.size(); ++j)
                acc += naf_w_[j] * sigmoid(naf_a_[j] * z + naf_b_[j]);
            return acc;
        }
    }
    throw Error("MonotoneMap::eval: unknown kind");
}

void MonotoneMap::eval_batch(std::span<const double> u, std::span<double> out) const {
    if (kind_ != InterpKind::naf) {
        for (std::size_t i = 0; i < u.size(); ++i) out[i] = eval(u[i]);
        return;
    }
    const auto& ops = kernels::active();
    const std::size_t J = naf_w_.size();
    std::vector<double> zbuf(J), sbuf(J);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double z = (u[i] - naf_shift_) / naf_scale_;
        for (std::size_t j = 0; j < J; ++j) zbuf[j] = naf_a_[j] * z + naf_b_[j];
        ops.vsigmoid(zbuf.data(), sbuf.data(), J);
        out[i] = ops.dot(naf_w_.data(), sbuf.data(), J);
    }
}

double MonotoneMap::derivative(double u) const {
    const std::size_t n = knots_.size();
    const double np1 = static_cast<double>(n + 1);
    switch (kind_) {
        case InterpKind::naive:
        case InterpKind::random: return 0.0;
        case InterpKind::linear: {
            std::size_t r = rank_leq(knots_, u);
            if (r == 0)
                return std::exp((u - knots_.front()) / tail_scale_) / (np1 * tail_scale_);
            if (r == n)
                return std::exp(-(u - knots_.back()) / tail_scale_) / (np1 * tail_scale_);
            return 1.0 / (np1 * (knots_[r] - knots_[r - 1]));
        }
        case InterpKind::naf: {
            double z = (u - naf_shift_) / naf_scale_;
            double acc = 0.0;
            for (std::size_t j = 0; j < naf_w_.size(); ++j) {
                double s = sigmoid(naf_a_[j] * z + naf_b_[j]);
                acc += naf_w_[j] * naf_a_[j] * s * (1.0 - s);
            }
            return acc / naf_scale_;
        }
    }
    throw Error("MonotoneMap::derivative: unknown kind");
}

double MonotoneMap::inverse(double p, bool clamp_to_knots) const {
    const std::size_t n = knots_.size();
    const double np1 = static_cast<double>(n + 1);
    if (!(p > 0.0 && p < 1.0) && kind_ != InterpKind::naive)
        throw DomainError("MonotoneMap::inverse: p must lie in (0,1)");
    switch (kind_) {
        case InterpKind::naive: {
            if (!(p >= 0.0 && p <= 1.0))
                throw DomainError("MonotoneMap::inverse: p outside [0,1]");
            if (p <= 0.0) return knots_.front();
            auto i = static_cast<std::size_t>(
                std::ceil(p * static_cast<double>(n) - 1e-12));
            i = std::max<std::size_t>(1, std::min(i, n));
            return knots_[i - 1];
        }
        case InterpKind::random: {
            double t = p * np1 - random_u_;
            auto i = static_cast<long long>(std::ceil(t - 1e-12));
            if (i < 1) {
                if (clamp_to_knots) return knots_.front();
                throw BracketError("MonotoneMap::inverse: p below the range of a random step map");
            }
            if (i > static_cast<long long>(n)) {
                if (clamp_to_knots) return knots_.back();
                throw BracketError("MonotoneMap::inverse: p above the range of a random step map");
            }
            return knots_[static_cast<std::size_t>(i - 1)];
        }
        case InterpKind::linear: {
            double t = p * np1;
            if (t <= 1.0) return knots_.front() + tail_scale_ * std::log(t);
            if (t >= static_cast<double>(n))
                return knots_.back() - tail_scale_ * std::log(np1 * (1.0 - p));
            auto i = static_cast<std::size_t>(std::floor(t));
            double frac = t - static_cast<double>(i);
            return knots_[i - 1] + frac * (knots_[i] - knots_[i - 1]);
        }
        case InterpKind::naf: {
            double lo = knots_.front(), hi = knots_.back();
            if (hi <= lo) {
                lo -= 1.0;
                hi += 1.0;
            }
            return solve_increasing([this](double u) { return eval(u); }, p, lo, hi, 1e-14);
        }
    }
    throw Error("MonotoneMap::inverse: unknown kind");
}

double lambda_accuracy(const MonotoneMap& map, std::span<const double> scores) {
    std::size_t ties = 0;
    std::vector<double> k = sorted_knots(scores, &ties);
    const double np1 = static_cast<double>(k.size() + 1);
    std::vector<double> q(k.size());
    map.eval_batch(k, q);
    double worst = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i)
        worst = std::max(worst, std::abs(q[i] * np1 - static_cast<double>(i + 1)));
    return worst;
}

}  // namespace calib
