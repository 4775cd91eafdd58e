#include "calib/base.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "calib/errors.hpp"
#include "calib/kernels.hpp"
#include "calib/math.hpp"
#include "calib/rng.hpp"

namespace calib {

double pinball_loss(double pred_q, double y, double alpha) {
    return y >= pred_q ? alpha * (y - pred_q) : (1.0 - alpha) * (pred_q - y);
}

double gaussian_nll_loss(double mean, double std, double y) {
    if (!(std > 0.0)) throw DomainError("gaussian_nll_loss: std must be positive");
    static const double half_log_2pi = 0.9189385332046727418;
    const double z = (y - mean) / std;
    return half_log_2pi + std::log(std) + 0.5 * z * z;
}

const char* base_kind_name(BaseKind k) {
    switch (k) {
        case BaseKind::point: return "point";
        case BaseKind::interval: return "interval";
        case BaseKind::quantile: return "quantile";
        case BaseKind::distribution: return "distribution";
        case BaseKind::ensemble: return "ensemble";
    }
    return "?";
}

BaseKind parse_base_kind(std::string_view name, int* k_out) {
    if (name == "point") return BaseKind::point;
    if (name == "interval") return BaseKind::interval;
    if (name == "distribution") return BaseKind::distribution;
    if (name == "ensemble") return BaseKind::ensemble;
    if (name.rfind("quantile", 0) == 0) {
        int k = 4;
        if (name.size() > 9 && name[8] == '-') {
            k = 0;
            for (std::size_t i = 9; i < name.size(); ++i) {
                if (name[i] < '0' || name[i] > '9')
                    throw ConfigError("bad quantile count in base kind: " + std::string(name));
                k = k * 10 + (name[i] - '0');
            }
        } else if (name != "quantile") {
            throw ConfigError("unknown base kind: " + std::string(name));
        }
        if (k < 1) throw ConfigError("quantile base kind needs K >= 1");
        if (k_out) *k_out = k;
        return BaseKind::quantile;
    }
    throw ConfigError("unknown base kind: " + std::string(name));
}

namespace nn {

namespace {

void transpose(std::span<const double> a, std::size_t rows, std::size_t cols,
               std::span<double> out) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
}

void add_bias_rows(std::span<double> m, std::size_t n, std::span<const double> bias) {
    const std::size_t d = bias.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m[i * d + j] += bias[j];
}

void column_sums(std::span<const double> m, std::size_t n, std::size_t d,
                 std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += m[i * d + j];
}

}  // namespace

DenseNet DenseNet::init(int in, int hidden, int out, std::uint64_t seed) {
    DenseNet net;
    net.in = in;
    net.hidden = hidden;
    net.out = out;
    Rng rng(seed);
    auto fill = [&rng](std::vector<double>& w, int fan_in, int fan_out, std::size_t count) {
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        w.resize(count);
        for (double& v : w) v = rng.uniform(-s, s);
    };
    fill(net.w1, in, hidden, static_cast<std::size_t>(in) * hidden);
    net.b1.assign(hidden, 0.0);
    fill(net.w2, hidden, hidden, static_cast<std::size_t>(hidden) * hidden);
    net.b2.assign(hidden, 0.0);
    fill(net.w3, hidden, out, static_cast<std::size_t>(hidden) * out);
    net.b3.assign(out, 0.0);
    return net;
}

void DenseNet::forward(std::span<const double> x, std::size_t n, Fwd& f) const {
    const auto& ops = kernels::active();
    const auto h = static_cast<std::size_t>(hidden);
    const auto o = static_cast<std::size_t>(out);
    f.h1.resize(n * h);
    f.h2.resize(n * h);
    f.y.resize(n * o);

    ops.matmul(x.data(), w1.data(), f.h1.data(), n, static_cast<std::size_t>(in), h);
    add_bias_rows(f.h1, n, b1);
    ops.vtanh(f.h1.data(), f.h1.data(), n * h);

    ops.matmul(f.h1.data(), w2.data(), f.h2.data(), n, h, h);
    add_bias_rows(f.h2, n, b2);
    ops.vtanh(f.h2.data(), f.h2.data(), n * h);

    ops.matmul(f.h2.data(), w3.data(), f.y.data(), n, h, o);
    add_bias_rows(f.y, n, b3);
}

void DenseNet::Grad::resize_like(const DenseNet& net) {
    w1.resize(net.w1.size());
    b1.resize(net.b1.size());
    w2.resize(net.w2.size());
    b2.resize(net.b2.size());
    w3.resize(net.w3.size());
    b3.resize(net.b3.size());
}

void DenseNet::backward(std::span<const double> x, std::size_t n, const Fwd& f,
                        std::span<const double> dy, Grad& grad) const {
    const auto& ops = kernels::active();
    const auto h = static_cast<std::size_t>(hidden);
    const auto o = static_cast<std::size_t>(out);
    const auto d = static_cast<std::size_t>(in);
    grad.resize_like(*this);

    std::vector<double> scratch_t(std::max({n * h, n * o, n * d}));
    std::vector<double> dh(n * h), dz2(n * h), dz1(n * h), wt;

    // output layer
    transpose(f.h2, n, h, std::span<double>(scratch_t.data(), n * h));
    ops.matmul(scratch_t.data(), dy.data(), grad.w3.data(), h, n, o);
    column_sums(dy, n, o, grad.b3);

    wt.resize(o * h);
    transpose(w3, h, o, wt);
    ops.matmul(dy.data(), wt.data(), dh.data(), n, o, h);
    for (std::size_t i = 0; i < n * h; ++i) dz2[i] = dh[i] * (1.0 - f.h2[i] * f.h2[i]);

    // second hidden layer
    transpose(f.h1, n, h, std::span<double>(scratch_t.data(), n * h));
    ops.matmul(scratch_t.data(), dz2.data(), grad.w2.data(), h, n, h);
    column_sums(dz2, n, h, grad.b2);

    wt.resize(h * h);
    transpose(w2, h, h, wt);
    ops.matmul(dz2.data(), wt.data(), dh.data(), n, h, h);
    for (std::size_t i = 0; i < n * h; ++i) dz1[i] = dh[i] * (1.0 - f.h1[i] * f.h1[i]);

    // first hidden layer
    transpose(x, n, d, std::span<double>(scratch_t.data(), n * d));
    ops.matmul(scratch_t.data(), dz1.data(), grad.w1.data(), d, n, h);
    column_sums(dz1, n, h, grad.b1);
}

std::size_t DenseNet::param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

void DenseNet::to_flat(std::span<double> outp) const {
    std::size_t off = 0;
    for (const auto* v : {&w1, &b1, &w2, &b2, &w3, &b3}) {
        std::copy(v->begin(), v->end(), outp.begin() + off);
        off += v->size();
    }
}

void DenseNet::from_flat(std::span<const double> inp) {
    std::size_t off = 0;
    for (auto* v : {&w1, &b1, &w2, &b2, &w3, &b3}) {
        std::copy(inp.begin() + off, inp.begin() + off + v->size(), v->begin());
        off += v->size();
    }
}

}  // namespace nn

namespace {

// cumulative-softplus transform: v_1 = raw_1, v_k = v_{k-1} + softplus(raw_k)
void quantile_transform(std::span<const double> raw, std::span<double> values) {
    values[0] = raw[0];
    for (std::size_t k = 1; k < values.size(); ++k)
        values[k] = values[k - 1] + softplus(raw[k]);
}

constexpr double kStdFloor = 1e-6;

}  // namespace

double head_loss(BaseKind kind, std::span<const double> levels,
                 std::span<const double> raw, std::size_t n, std::size_t out_dim,
                 std::span<const double> labels, std::span<double> draw) {
    std::fill(draw.begin(), draw.end(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;

    switch (kind) {
        case BaseKind::point: {
            for (std::size_t i = 0; i < n; ++i) {
                const double r = raw[i] - labels[i];
                loss += r * r;
                draw[i] = 2.0 * r * inv_n;
            }
            break;
        }
        case BaseKind::interval:
        case BaseKind::quantile: {
            const std::size_t K = levels.size();
            std::vector<double> v(K), dv(K);
            const bool cumulative = kind == BaseKind::quantile;
            for (std::size_t i = 0; i < n; ++i) {
                auto r = raw.subspan(i * out_dim, out_dim);
                if (cumulative)
                    quantile_transform(r, v);
                else
                    std::copy(r.begin(), r.end(), v.begin());
                for (std::size_t k = 0; k < K; ++k) {
                    loss += pinball_loss(v[k], labels[i], levels[k]);
                    dv[k] = (labels[i] >= v[k] ? -levels[k] : 1.0 - levels[k]) * inv_n;
                }
                auto dr = draw.subspan(i * out_dim, out_dim);
                if (cumulative) {
                    // v_k depends on raw_j for all j <= k: suffix sums
                    double suffix = 0.0;
                    for (std::size_t k = K; k-- > 0;) {
                        suffix += dv[k];
                        dr[k] = k == 0 ? suffix : suffix * sigmoid(r[k]);
                    }
                } else {
                    std::copy(dv.begin(), dv.end(), dr.begin());
                }
            }
            break;
        }
        case BaseKind::distribution: {
            for (std::size_t i = 0; i < n; ++i) {
                const double mean = raw[i * 2];
                const double sraw = raw[i * 2 + 1];
                const double sd = softplus(sraw) + kStdFloor;
                loss += gaussian_nll_loss(mean, sd, labels[i]);
                const double z = (labels[i] - mean) / sd;
                draw[i * 2] = -(z / sd) * inv_n;
                const double dsd = (1.0 / sd) * (1.0 - z * z);
                draw[i * 2 + 1] = dsd * sigmoid(sraw) * inv_n;
            }
            break;
        }
        case BaseKind::ensemble:
            throw Error("head_loss: ensemble members are trained as distribution heads");
    }
    return loss * inv_n;
}

double base_loss_and_gradient(const nn::DenseNet& net, BaseKind kind,
                              std::span<const double> levels, std::span<const double> x,
                              std::size_t n, std::span<const double> labels,
                              nn::DenseNet::Grad* grad_out) {
    nn::DenseNet::Fwd fwd;
    net.forward(x, n, fwd);
    const auto out_dim = static_cast<std::size_t>(net.out);
    std::vector<double> draw(n * out_dim);
    const double loss = head_loss(kind, levels, fwd.y, n, out_dim, labels, draw);
    if (grad_out) net.backward(x, n, fwd, draw, *grad_out);
    return loss;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    int t = 0;

    explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(0.9, t);
        const double bc2 = 1.0 - std::pow(0.999, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = 0.9 * m[i] + 0.1 * grad[i];
            v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
        }
    }
};

std::vector<double> default_levels(BaseKind kind, int quantile_k) {
    if (kind == BaseKind::interval) return {0.05, 0.95};
    if (kind == BaseKind::quantile) {
        std::vector<double> lv(quantile_k);
        for (int k = 0; k < quantile_k; ++k)
            lv[k] = (2.0 * k + 1.0) / (2.0 * quantile_k);
        return lv;
    }
    return {};
}

// Train one dense net on one head kind; returns (initial, final) loss.
std::pair<double, double> train_net(nn::DenseNet& net, BaseKind kind,
                                    std::span<const double> levels, const Dataset& data,
                                    int epochs, double lr) {
    const std::size_t n = data.rows();
    std::vector<double> theta(net.param_count()), gflat(net.param_count());
    net.to_flat(theta);
    AdamState adam(theta.size());
    nn::DenseNet::Grad grad;

    double initial = 0.0, last = 0.0;
    for (int e = 0; e < epochs; ++e) {
        const double loss =
            base_loss_and_gradient(net, kind, levels, data.features(), n, data.labels(), &grad);
        if (!std::isfinite(loss))
            throw ConvergenceError("train_base: loss became non-finite",
                                   std::numeric_limits<double>::quiet_NaN());
        if (e == 0) initial = loss;
        std::size_t off = 0;
        for (const auto* g : {&grad.w1, &grad.b1, &grad.w2, &grad.b2, &grad.w3, &grad.b3}) {
            std::copy(g->begin(), g->end(), gflat.begin() + off);
            off += g->size();
        }
        adam.step(theta, gflat, lr);
        net.from_flat(theta);
        last = loss;
    }
    const double final_loss =
        base_loss_and_gradient(net, kind, levels, data.features(), n, data.labels(), nullptr);
    (void)last;
    return {initial, final_loss};
}

}  // namespace

std::shared_ptr<BasePredictor> train_base(const Dataset& train, BaseKind kind,
                                          const BaseHyper& hyper) {
    if (train.rows() == 0) throw EmptyInputError("train_base: empty training split");
    if (hyper.hidden < 1 || hyper.epochs < 1) throw ConfigError("train_base: bad hyperparameters");

    auto model = std::shared_ptr<BasePredictor>(new BasePredictor());
    model->kind_ = kind;
    model->in_dim_ = static_cast<int>(train.dim());
    model->levels_ = default_levels(kind, hyper.quantile_k);
    model->prov_ = train.provenance();
    model->meta_.seed = hyper.seed;
    model->meta_.epochs = hyper.epochs;

    const int members = kind == BaseKind::ensemble ? std::max(1, hyper.ensemble_k) : 1;
    const BaseKind head = kind == BaseKind::ensemble ? BaseKind::distribution : kind;
    int out_dim = 1;
    switch (head) {
        case BaseKind::point: out_dim = 1; break;
        case BaseKind::interval: out_dim = 2; break;
        case BaseKind::quantile: out_dim = static_cast<int>(model->levels_.size()); break;
        case BaseKind::distribution: out_dim = 2; break;
        case BaseKind::ensemble: break;
    }

    double init_sum = 0.0, final_sum = 0.0;
    for (int k = 0; k < members; ++k) {
        nn::DenseNet net = nn::DenseNet::init(model->in_dim_, hyper.hidden, out_dim,
                                              derive_seed(hyper.seed, k));
        auto [i0, f0] = train_net(net, head, model->levels_, train, hyper.epochs, hyper.lr);
        init_sum += i0;
        final_sum += f0;
        model->nets_.push_back(std::move(net));
    }
    model->meta_.initial_loss = init_sum / members;
    model->meta_.final_loss = final_sum / members;
    return model;
}

PredictionOutput BasePredictor::predict(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(in_dim_))
        throw Error("predict: feature dimension mismatch");

    auto eval_net = [&](const nn::DenseNet& net) {
        nn::DenseNet::Fwd f;
        net.forward(x, 1, f);
        return f.y;
    };

    switch (kind_) {
        case BaseKind::point: return PointPred{eval_net(nets_[0])[0]};
        case BaseKind::interval: {
            auto y = eval_net(nets_[0]);
            double lo = y[0], hi = y[1];
            if (lo > hi) {
                std::swap(lo, hi);
                swaps_.fetch_add(1, std::memory_order_relaxed);
            }
            if (!(lo < hi)) hi = lo + 1e-9 * std::max(1.0, std::abs(lo));
            return IntervalPred{lo, hi};
        }
        case BaseKind::quantile: {
            auto y = eval_net(nets_[0]);
            std::vector<double> values(y.size());
            quantile_transform(y, values);
            return QuantilesPred{levels_, std::move(values)};
        }
        case BaseKind::distribution: {
            auto y = eval_net(nets_[0]);
            return GaussianPred{y[0], softplus(y[1]) + kStdFloor};
        }
        case BaseKind::ensemble: {
            std::vector<PredictionOutput> members;
            members.reserve(nets_.size());
            for (const auto& net : nets_) {
                auto y = eval_net(net);
                members.emplace_back(GaussianPred{y[0], softplus(y[1]) + kStdFloor});
            }
            std::vector<double> weights(nets_.size(), 1.0 / static_cast<double>(nets_.size()));
            return EnsemblePred{std::move(members), std::move(weights)};
        }
    }
    throw Error("predict: unknown base kind");
}

}  // namespace calib
