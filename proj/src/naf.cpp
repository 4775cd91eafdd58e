#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <vector>

#include "calib/errors.hpp"
#include "calib/interp.hpp"
#include "calib/kernels.hpp"
#include "calib/math.hpp"

namespace calib {

namespace naf {
namespace {

double inverse_softplus(double a) {
    // log(exp(a) - 1), stable for both small and large a
    if (a > 30.0) return a;
    return std::log(std::expm1(a));
}

struct Buffers {
    std::vector<double> a, w, srow, zrow;
};

// One full-batch pass: flow values, loss, and (optionally) raw-parameter
// gradients. Shared by training and by the public gradient-check hooks.
void pass(const RawParams& p, std::span<const double> z, std::span<const double> targets,
          Buffers& buf, double* loss_out, std::vector<double>* m_out, RawParams* grad_out) {
    const std::size_t J = p.a_hat.size();
    const std::size_t n = z.size();
    const auto& ops = kernels::active();

    buf.a.resize(J);
    buf.w.resize(J);
    buf.srow.resize(J);
    buf.zrow.resize(J);

    for (std::size_t j = 0; j < J; ++j) buf.a[j] = softplus(p.a_hat[j]);
    double wmax = *std::max_element(p.w_hat.begin(), p.w_hat.end());
    double wsum = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        buf.w[j] = std::exp(p.w_hat[j] - wmax);
        wsum += buf.w[j];
    }
    for (std::size_t j = 0; j < J; ++j) buf.w[j] /= wsum;

    std::vector<double> gw, ga, gb;
    if (grad_out) {
        gw.assign(J, 0.0);
        ga.assign(J, 0.0);
        gb.assign(J, 0.0);
    }

    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double zi = z[i];
        for (std::size_t j = 0; j < J; ++j) buf.zrow[j] = buf.a[j] * zi + p.b[j];
        ops.vsigmoid(buf.zrow.data(), buf.srow.data(), J);
        const double mi = ops.dot(buf.w.data(), buf.srow.data(), J);
        const double r = mi - targets[i];
        loss += r * r;
        if (m_out) (*m_out)[i] = mi;
        if (grad_out) {
            const double g = 2.0 * r * inv_n;
            for (std::size_t j = 0; j < J; ++j) {
                const double s = buf.srow[j];
                const double t = g * buf.w[j] * s * (1.0 - s);
                gw[j] += g * s;
                gb[j] += t;
                ga[j] += t * zi;
            }
        }
    }
    loss *= inv_n;
    if (loss_out) *loss_out = loss;

    if (grad_out) {
        grad_out->a_hat.resize(J);
        grad_out->b = std::move(gb);
        grad_out->w_hat.resize(J);
        grad_out->in_shift = 0.0;
        grad_out->in_scale = 0.0;
        double dot_wg = 0.0;
        for (std::size_t j = 0; j < J; ++j) dot_wg += buf.w[j] * gw[j];
        for (std::size_t j = 0; j < J; ++j) {
            grad_out->a_hat[j] = ga[j] * sigmoid(p.a_hat[j]);  // softplus chain
            grad_out->w_hat[j] = buf.w[j] * (gw[j] - dot_wg);  // softmax chain
        }
    }
}

}  // namespace

void debug_forward(const RawParams& p, std::span<const double> z,
                   std::span<const double> targets, std::vector<double>& m_out) {
    Buffers buf;
    m_out.resize(z.size());
    pass(p, z, targets, buf, nullptr, &m_out, nullptr);
}

double training_loss(const RawParams& p, std::span<const double> z,
                     std::span<const double> targets) {
    Buffers buf;
    double loss = 0.0;
    pass(p, z, targets, buf, &loss, nullptr, nullptr);
    return loss;
}

RawParams loss_gradient(const RawParams& p, std::span<const double> z,
                        std::span<const double> targets, double* loss_out) {
    Buffers buf;
    RawParams grad;
    double loss = 0.0;
    pass(p, z, targets, buf, &loss, nullptr, &grad);
    if (loss_out) *loss_out = loss;
    return grad;
}

}  // namespace naf

namespace {

double logit(double v) { return std::log(v / (1.0 - v)); }

// ---------------------------------------------------------------------
// Constructive initialization. Each sigmoid owns a short run of
// consecutive sorted points (at most three); its weight is the target
// mass of the run's window and its slope/offset are solved so the flow
// passes through the run's targets given the contribution of everyone
// else. The partition cuts at the widest gaps so steep local features
// (near-tied scores) stay inside a single run.
// ---------------------------------------------------------------------

struct Runs {
    std::vector<std::size_t> begin;  // first point index of each run
    std::vector<std::size_t> size;
};

// Assign at most three consecutive points per unit. Which points share a
// unit is chosen by dynamic programming: a pair prefers a tight gap, and
// a triple is cheap only when its two internal gaps are balanced (a
// single sigmoid through three equally spaced targets needs equal logit
// spacing, hence equal gaps).
Runs partition_runs(const std::vector<double>& z, std::size_t max_runs) {
    const std::size_t n = z.size();
    const std::size_t r_total = std::min(max_runs, n);
    std::size_t merges = n - r_total;

    double med_gap = 1.0;
    if (n > 1) {
        std::vector<double> gaps(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) gaps[i] = z[i + 1] - z[i];
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        med_gap = std::max(gaps[gaps.size() / 2], 1e-300);
    }
    auto pair_cost = [&](std::size_t i) {
        return 0.05 * (z[i + 1] - z[i]) / med_gap;  // prefer tight pairs
    };
    auto triple_cost = [&](std::size_t i) {
        const double g1 = std::max(z[i + 1] - z[i], 1e-300);
        const double g2 = std::max(z[i + 2] - z[i + 1], 1e-300);
        // a triple's sigmoid keeps ~1/6 of its mass past its last point
        // (and before its first); it needs roomy outer gaps to saturate
        const double g_in = std::max(g1, g2);
        const double g_left = i > 0 ? std::max(z[i] - z[i - 1], 1e-300) : 1e300;
        const double g_right = i + 3 < n ? std::max(z[i + 3] - z[i + 2], 1e-300) : 1e300;
        const double crowding =
            0.4 * (std::min(g_in / g_left, 50.0) + std::min(g_in / g_right, 50.0));
        return std::abs(std::log(g1 / g2)) + crowding + pair_cost(i) + pair_cost(i + 1);
    };

    if (merges > 2 * (n / 3) + 2) {
        // more than three points per unit on average: fall back to even
        // contiguous blocks (the polish owns the residual in this regime)
        Runs runs;
        std::size_t i = 0, left = r_total;
        while (i < n) {
            const std::size_t s = (n - i + left - 1) / left;
            runs.begin.push_back(i);
            runs.size.push_back(s);
            i += s;
            --left;
        }
        return runs;
    }

    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t M = merges + 1;
    std::vector<double> cost((n + 1) * M, inf);
    std::vector<std::uint8_t> choice((n + 1) * M, 0);
    cost[0 * M + 0] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t m = 0; m < M; ++m) {
            const double c = cost[i * M + m];
            if (c == inf) continue;
            if (c < cost[(i + 1) * M + m]) {
                cost[(i + 1) * M + m] = c;
                choice[(i + 1) * M + m] = 1;
            }
            if (i + 2 <= n && m + 1 < M) {
                const double c2 = c + pair_cost(i);
                if (c2 < cost[(i + 2) * M + m + 1]) {
                    cost[(i + 2) * M + m + 1] = c2;
                    choice[(i + 2) * M + m + 1] = 2;
                }
            }
            if (i + 3 <= n && m + 2 < M) {
                const double c3 = c + triple_cost(i);
                if (c3 < cost[(i + 3) * M + m + 2]) {
                    cost[(i + 3) * M + m + 2] = c3;
                    choice[(i + 3) * M + m + 2] = 3;
                }
            }
        }

    std::vector<std::uint8_t> sizes_rev;
    std::size_t i = n, m = merges;
    while (i > 0) {
        const std::uint8_t s = choice[i * M + m];
        sizes_rev.push_back(s);
        i -= s;
        m -= (s - 1);
    }
    Runs runs;
    std::size_t pos = 0;
    for (auto it = sizes_rev.rbegin(); it != sizes_rev.rend(); ++it) {
        runs.begin.push_back(pos);
        runs.size.push_back(*it);
        pos += *it;
    }
    return runs;
}

struct FlowState {
    // working copies in natural parameters (post-reparameterization);
    // weights are kept normalized (sum 1) between run updates
    std::vector<double> a, b, w;

    double eval(double zi) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) acc += w[j] * sigmoid(a[j] * zi + b[j]);
        return acc;
    }
    double eval_excluding(double zi, std::size_t skip) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j)
            if (j != skip) acc += w[j] * sigmoid(a[j] * zi + b[j]);
        return acc;
    }
};

bool cholesky_solve(std::vector<double>& a, std::vector<double>& rhs, std::size_t d);

// Shape solve for one unit with its weight held fixed: hit the run's
// first and last point exactly in logit space (a singleton keeps a
// saturation-driven slope and only places its center). The middle point
// of a three-point run is matched only when the logits happen to be
// collinear; persistent gaps there flag the run for partition repair.
void solve_run_shape(FlowState& st, std::size_t r, std::span<const double> zs,
                     std::span<double> es, double outer_gap, bool* infeasible) {
    const std::size_t s = zs.size();
    const double w = st.w[r];
    const double v_lo = 1e-9, v_hi = 1.0 - 1e-9;
    bool clamped = false;
    std::vector<double> v(s);
    for (std::size_t k = 0; k < s; ++k) {
        v[k] = es[k] / w;
        if (!(v[k] > v_lo)) {
            v[k] = v_lo;
            clamped = true;
        }
        if (v[k] > v_hi) {
            v[k] = v_hi;
            clamped = true;
        }
        if (k > 0 && v[k] <= v[k - 1]) {
            v[k] = std::min(v[k - 1] * (1.0 + 1e-9) + 1e-12, v_hi);
            clamped = true;
        }
    }
    if (clamped && s > 1 && infeasible) *infeasible = true;

    const double a_steep = std::min(14.0 / std::max(outer_gap, 1e-12), 1e12);
    if (s == 1) {
        st.a[r] = a_steep;
        st.b[r] = logit(v[0]) - st.a[r] * zs[0];
        return;
    }
    const double l0 = logit(v[0]);
    const double l1 = logit(v[s - 1]);
    double a = (l1 - l0) / (zs[s - 1] - zs[0]);
    a = std::clamp(a, 1e-9, 1e12);
    st.a[r] = a;
    st.b[r] = l0 - a * zs[0];
    if (s == 3 && infeasible) {
        // middle-point fit quality in logit space
        const double lm_pred = l0 + a * (zs[1] - zs[0]);
        const double lm_want = logit(v[1]);
        if (std::abs(lm_pred - lm_want) > 0.25) *infeasible = true;
    }
}

struct InitContext {
    Runs runs;
    std::vector<double> base;  // window boundaries in target space
    std::size_t n = 0, J = 0, R = 0;
};

FlowState init_flow(const std::vector<double>& z, InitContext& ctx, std::size_t hidden_units) {
    const std::size_t n = z.size();
    const std::size_t J = hidden_units;
    const double np1 = static_cast<double>(n + 1);

    ctx.runs = partition_runs(z, J);
    const std::size_t R = ctx.runs.begin.size();
    ctx.n = n;
    ctx.J = J;
    ctx.R = R;

    FlowState st;
    st.a.assign(J, 1.0);
    st.b.assign(J, 0.0);
    st.w.assign(J, 0.0);

    // window masses: midpoints in target space between adjacent runs
    ctx.base.assign(R + 1, 0.0);
    for (std::size_t r = 1; r < R; ++r)
        ctx.base[r] = (static_cast<double>(ctx.runs.begin[r]) + 0.5) / np1;
    ctx.base[R] = 1.0;

    const double spare_mass = 1e-10;
    const double spare_total = spare_mass * static_cast<double>(J - R);
    for (std::size_t r = 0; r < R; ++r)
        st.w[r] = (ctx.base[r + 1] - ctx.base[r]) * (1.0 - spare_total);

    // spare units: negligible weight, spread across the range; they give
    // the polish extra capacity without disturbing the init
    for (std::size_t j = R; j < J; ++j) {
        st.w[j] = spare_mass;
        const double fr = (static_cast<double>(j - R) + 0.5) / static_cast<double>(J - R);
        const double c = z.front() + fr * (z.back() - z.front());
        st.a[j] = 2.0 / std::max(1e-3, (z.back() - z.front()) / static_cast<double>(R));
        st.b[j] = -st.a[j] * c;
    }

    // rough placement so the first sweep sees sane neighbors
    for (std::size_t r = 0; r < R; ++r) {
        const std::size_t i0 = ctx.runs.begin[r], s = ctx.runs.size[r];
        const double gap_l = i0 > 0 ? z[i0] - z[i0 - 1] : 1.0;
        const double gap_r = i0 + s < n ? z[i0 + s] - z[i0 + s - 1] : 1.0;
        const double c = 0.5 * (z[i0] + z[i0 + s - 1]);
        st.a[r] = std::min(14.0 / std::max(1e-12, std::min(gap_l, gap_r)), 1e12);
        st.b[r] = -st.a[r] * c;
    }
    return st;
}

// Alternate two exactly solvable subproblems: local shape solves with
// weights fixed, then a global ridge least-squares reallocation of all
// weights (the flow is linear in them), which removes the oscillatory
// mass chains a per-unit weight update would create. Returns the best
// accuracy seen; st is left at the best state.
double gs_sweeps(FlowState& st, const std::vector<double>& z, const InitContext& ctx,
                 double target, int max_sweeps, std::vector<char>* infeasible_out = nullptr) {
    const std::size_t n = ctx.n, R = ctx.R;
    const std::size_t J = st.a.size();
    const double np1 = static_cast<double>(n + 1);
    const bool dbg = std::getenv("CALIB_NAF_DEBUG") != nullptr;
    const auto& ops = kernels::active();

    std::vector<double> smat(n * J), smat_t(J * n), zrow(J), gram(J * J), rhs(J),
        targets(n);
    for (std::size_t i = 0; i < n; ++i)
        targets[i] = static_cast<double>(i + 1) / np1;

    double best_lambda = std::numeric_limits<double>::infinity();
    FlowState best_state = st;
    std::vector<char> best_flags;
    int since_improve = 0;
    std::vector<double> es(3);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double lambda = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            lambda = std::max(lambda,
                              std::abs(st.eval(z[i]) * np1 - static_cast<double>(i + 1)));
        if (dbg && sweep % 20 == 0)
            std::fprintf(stderr, "gs sweep=%d lambda=%.6g\n", sweep, lambda);
        if (lambda < best_lambda) {
            best_state = st;
            if (infeasible_out) best_flags = *infeasible_out;
        }
        if (lambda < 0.9995 * best_lambda) {
            best_lambda = std::min(best_lambda, lambda);
            since_improve = 0;
        } else if (++since_improve >= 25) {
            break;
        }
        best_lambda = std::min(best_lambda, lambda);
        if (lambda <= 0.3 * target) break;

        // local shapes, weights fixed
        if (infeasible_out) infeasible_out->assign(R, 0);
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t i0 = ctx.runs.begin[r], s = ctx.runs.size[r];
            std::span<const double> zs(z.data() + i0, s);
            es.resize(s);
            for (std::size_t k = 0; k < s; ++k) {
                const double t = static_cast<double>(i0 + k + 1) / np1;
                es[k] = t - st.eval_excluding(zs[k], r);
            }
            const double gap_l = i0 > 0 ? z[i0] - z[i0 - 1] : 1.0;
            const double gap_r = i0 + s < n ? z[i0 + s] - z[i0 + s - 1] : 1.0;
            bool bad = false;
            solve_run_shape(st, r, zs, es, std::min(gap_l, gap_r), &bad);
            if (bad && infeasible_out) (*infeasible_out)[r] = 1;
        }

        // global weights, shapes fixed: ridge least squares clamped into
        // the simplex
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < J; ++j) zrow[j] = st.a[j] * z[i] + st.b[j];
            ops.vsigmoid(zrow.data(), smat.data() + i * J, J);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < J; ++j) smat_t[j * n + i] = smat[i * J + j];
        ops.matmul(smat_t.data(), smat.data(), gram.data(), J, n, J);
        double trace = 0.0;
        for (std::size_t j = 0; j < J; ++j) trace += gram[j * J + j];
        const double eps = 1e-10 * std::max(trace / static_cast<double>(J), 1e-12);
        for (std::size_t j = 0; j < J; ++j) gram[j * J + j] += eps;
        std::fill(rhs.begin(), rhs.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            ops.axpy(targets[i], smat.data() + i * J, rhs.data(), J);
        if (cholesky_solve(gram, rhs, J)) {
            double wsum = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                rhs[j] = std::max(rhs[j], 1e-14);
                wsum += rhs[j];
            }
            for (std::size_t j = 0; j < J; ++j) st.w[j] = rhs[j] / wsum;
        }
    }
    st = std::move(best_state);
    if (infeasible_out && !best_flags.empty()) *infeasible_out = std::move(best_flags);
    return best_lambda;
}

// Rebuild the window boundaries after a partition change.
void rebuild_base(InitContext& ctx, std::size_t n) {
    const double np1 = static_cast<double>(n + 1);
    const std::size_t R = ctx.runs.begin.size();
    ctx.base.assign(R + 1, 0.0);
    for (std::size_t r = 1; r < R; ++r)
        ctx.base[r] = (static_cast<double>(ctx.runs.begin[r]) + 0.5) / np1;
    ctx.base[R] = 1.0;
    ctx.R = R;
}

// A three-point run no single sigmoid can interpolate gets split at its
// wider internal gap; the unit budget is repaid by merging adjacent runs
// into a pair (always representable) or a gap-balanced triple elsewhere.
// Returns the number of repairs applied.
std::size_t repair_partition(InitContext& ctx, const std::vector<double>& z,
                             const std::vector<char>& infeasible, std::size_t max_repairs) {
    // collect the flagged triples by their first point index, which stays
    // stable while the run layout changes underneath
    std::vector<std::size_t> flagged;
    for (std::size_t r = 0; r < ctx.runs.begin.size() && r < infeasible.size(); ++r)
        if (infeasible[r] && ctx.runs.size[r] == 3) flagged.push_back(ctx.runs.begin[r]);

    std::size_t repairs = 0;
    for (std::size_t i0 : flagged) {
        if (repairs >= max_repairs) break;
        const auto& begin = ctx.runs.begin;
        const auto& size = ctx.runs.size;
        const std::size_t R = begin.size();
        const std::size_t bad = static_cast<std::size_t>(
            std::lower_bound(begin.begin(), begin.end(), i0) - begin.begin());
        if (bad >= R || begin[bad] != i0 || size[bad] != 3) continue;

        // merge candidate: adjacent runs that combine into a pair (always
        // representable) or into a gap-balanced triple, cheapest first
        std::size_t merge_left = R;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r + 1 < R; ++r) {
            if (r == bad || r + 1 == bad) continue;
            const std::size_t total = size[r] + size[r + 1];
            if (total > 3) continue;
            double cost;
            if (total == 2) {
                cost = z[begin[r + 1]] - z[begin[r]];
            } else {
                const std::size_t p0 = begin[r];
                const double g1 = std::max(z[p0 + 1] - z[p0], 1e-300);
                const double g2 = std::max(z[p0 + 2] - z[p0 + 1], 1e-300);
                const double balance = std::abs(std::log(g1 / g2));
                if (balance > 0.7) continue;  // would just create a new bad triple
                cost = 10.0 * balance + (z[p0 + 2] - z[p0]);
            }
            if (cost < best_cost) {
                best_cost = cost;
                merge_left = r;
            }
        }
        if (merge_left == R) break;  // no budget left to repair with

        Runs next;
        for (std::size_t r = 0; r < R; ++r) {
            if (r == merge_left) {
                next.begin.push_back(begin[r]);
                next.size.push_back(size[r] + size[r + 1]);
                ++r;  // consume the right neighbor
                continue;
            }
            if (r == bad) {
                const std::size_t b0 = begin[r];
                const double g12 = z[b0 + 1] - z[b0];
                const double g23 = z[b0 + 2] - z[b0 + 1];
                if (g12 >= g23) {  // pair owns the tight side
                    next.begin.push_back(b0);
                    next.size.push_back(1);
                    next.begin.push_back(b0 + 1);
                    next.size.push_back(2);
                } else {
                    next.begin.push_back(b0);
                    next.size.push_back(2);
                    next.begin.push_back(b0 + 2);
                    next.size.push_back(1);
                }
                continue;
            }
            next.begin.push_back(begin[r]);
            next.size.push_back(size[r]);
        }
        ctx.runs = std::move(next);
        ++repairs;
    }
    return repairs;
}

naf::RawParams flow_to_raw(const FlowState& st, double shift, double scale) {
    naf::RawParams p;
    p.in_shift = shift;
    p.in_scale = scale;
    const std::size_t J = st.a.size();
    p.a_hat.resize(J);
    p.b = st.b;
    p.w_hat.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
        p.a_hat[j] = naf::inverse_softplus(std::max(st.a[j], 1e-9));
        p.w_hat[j] = std::log(std::max(st.w[j], 1e-300));
    }
    return p;
}

FlowState raw_to_flow(const naf::RawParams& p) {
    FlowState st;
    const std::size_t J = p.a_hat.size();
    st.a.resize(J);
    st.b = p.b;
    st.w.resize(J);
    double wmax = *std::max_element(p.w_hat.begin(), p.w_hat.end());
    double wsum = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        st.a[j] = softplus(p.a_hat[j]);
        st.w[j] = std::exp(p.w_hat[j] - wmax);
        wsum += st.w[j];
    }
    for (std::size_t j = 0; j < J; ++j) st.w[j] /= wsum;
    return st;
}

// ---------------------------------------------------------------------
// Damped Gauss-Newton (Levenberg-Marquardt) refinement of the squared
// error. The first-order path plateaus orders of magnitude short of the
// accuracy target on realistic score sets, so the polish solves the
// normal equations instead. Parameter count is 3J (<= a few hundred),
// which keeps each iteration cheap.
// ---------------------------------------------------------------------

bool cholesky_solve(std::vector<double>& a, std::vector<double>& rhs, std::size_t d) {
    for (std::size_t c = 0; c < d; ++c) {
        double diag = a[c * d + c];
        for (std::size_t k = 0; k < c; ++k) diag -= a[c * d + k] * a[c * d + k];
        if (!(diag > 0.0)) return false;
        diag = std::sqrt(diag);
        a[c * d + c] = diag;
        for (std::size_t r = c + 1; r < d; ++r) {
            double v = a[r * d + c];
            for (std::size_t k = 0; k < c; ++k) v -= a[r * d + k] * a[c * d + k];
            a[r * d + c] = v / diag;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        double v = rhs[i];
        for (std::size_t k = 0; k < i; ++k) v -= a[i * d + k] * rhs[k];
        rhs[i] = v / a[i * d + i];
    }
    for (std::size_t i = d; i-- > 0;) {
        double v = rhs[i];
        for (std::size_t k = i + 1; k < d; ++k) v -= a[k * d + i] * rhs[k];
        rhs[i] = v / a[i * d + i];
    }
    return true;
}

struct LmResult {
    double best_lambda = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

LmResult lm_refine(naf::RawParams& p, const std::vector<double>& z,
                   const std::vector<double>& targets, double target_accuracy,
                   int max_iters) {
    const std::size_t n = z.size();
    const std::size_t J = p.a_hat.size();
    const std::size_t D = 3 * J;
    const double np1 = static_cast<double>(n + 1);
    const auto& ops = kernels::active();

    std::vector<double> jac(n * D), jac_t(D * n), jtj(D * D), jtr(D), delta(D), r(n);
    std::vector<double> a(J), w(J), sig(J), zrow(J);

    auto eval = [&](const naf::RawParams& q, bool with_jac) {
        for (std::size_t j = 0; j < J; ++j) a[j] = softplus(q.a_hat[j]);
        double wmax = *std::max_element(q.w_hat.begin(), q.w_hat.end());
        double wsum = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            w[j] = std::exp(q.w_hat[j] - wmax);
            wsum += w[j];
        }
        for (std::size_t j = 0; j < J; ++j) w[j] /= wsum;
        double loss = 0.0, lambda = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < J; ++j) zrow[j] = a[j] * z[i] + q.b[j];
            ops.vsigmoid(zrow.data(), sig.data(), J);
            const double mi = ops.dot(w.data(), sig.data(), J);
            r[i] = mi - targets[i];
            loss += r[i] * r[i];
            lambda = std::max(lambda, std::abs(r[i]) * np1);
            if (with_jac) {
                double* row = jac.data() + i * D;
                for (std::size_t j = 0; j < J; ++j) {
                    const double sp = sig[j] * (1.0 - sig[j]) * w[j];
                    row[j] = sp * z[i] * sigmoid(q.a_hat[j]);
                    row[J + j] = sp;
                    row[2 * J + j] = w[j] * (sig[j] - mi);
                }
            }
        }
        return std::pair<double, double>(loss / static_cast<double>(n), lambda);
    };

    LmResult result;
    naf::RawParams best = p;
    double mu = 1e-6;
    for (int iter = 0; iter < max_iters; ++iter) {
        auto [loss, lambda] = eval(p, true);
        if (!std::isfinite(loss))
            throw ConvergenceError("fit_naf: loss became non-finite", result.best_lambda);
        if (lambda < result.best_lambda) {
            result.best_lambda = lambda;
            best = p;
        }
        result.iterations = iter + 1;
        if (std::getenv("CALIB_NAF_DEBUG") && iter % 25 == 0)
            std::fprintf(stderr, "lm iter=%d loss=%.4g lambda=%.5g mu=%.2g\n", iter, loss,
                         lambda, mu);
        if (result.best_lambda <= target_accuracy) break;

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < D; ++d) jac_t[d * n + i] = jac[i * D + d];
        ops.matmul(jac_t.data(), jac.data(), jtj.data(), D, n, D);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            ops.axpy(r[i], jac.data() + i * D, jtr.data(), D);

        bool stepped = false;
        for (int attempt = 0; attempt < 16 && !stepped; ++attempt) {
            std::vector<double> m = jtj;
            for (std::size_t d = 0; d < D; ++d)
                m[d * D + d] += mu * (jtj[d * D + d] + 1e-12);
            delta = jtr;
            for (double& v : delta) v = -v;
            if (!cholesky_solve(m, delta, D)) {
                mu *= 8.0;
                continue;
            }
            naf::RawParams q = p;
            for (std::size_t j = 0; j < J; ++j) {
                q.a_hat[j] += delta[j];
                q.b[j] += delta[J + j];
                q.w_hat[j] += delta[2 * J + j];
            }
            auto [loss2, lambda2] = eval(q, false);
            (void)lambda2;
            if (std::isfinite(loss2) && loss2 < loss) {
                p = std::move(q);
                mu = std::max(mu / 3.0, 1e-14);
                stepped = true;
            } else {
                mu *= 8.0;
            }
        }
        if (!stepped) break;  // no descent direction left at any damping
    }
    p = best;
    return result;
}

}  // namespace

MonotoneMap fit_naf(std::span<const double> scores, const NafConfig& config) {
    if (scores.empty()) throw EmptyInputError("fit_naf: empty score vector");
    if (config.hidden_units < 1) throw ConfigError("fit_naf: hidden_units must be >= 1");

    MonotoneMap m;
    m.kind_ = InterpKind::naf;
    m.knots_ = [&] {
        std::vector<double> k(scores.begin(), scores.end());
        for (double v : k)
            if (!std::isfinite(v)) throw DomainError("fit_naf: non-finite score");
        std::stable_sort(k.begin(), k.end());
        return k;
    }();
    std::size_t ties = 0;
    for (std::size_t i = 1; i < m.knots_.size(); ++i)
        if (m.knots_[i] == m.knots_[i - 1]) ++ties;
    m.tie_count_ = ties;

    // tie resolution: cumulative jitter scaled by the score range
    std::vector<double> u = m.knots_;
    if (ties > 0) {
        const double jitter = 1e-9 * std::max(1.0, std::abs(u.back() - u.front()));
        for (std::size_t i = 1; i < u.size(); ++i)
            if (u[i] <= u[i - 1]) u[i] = u[i - 1] + jitter;
    }

    const std::size_t n = u.size();
    const double shift = 0.5 * (u.front() + u.back());
    const double scale = u.back() > u.front() ? 0.25 * (u.back() - u.front()) : 1.0;

    std::vector<double> z(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = (u[i] - shift) / scale;
        targets[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    }

    // Alternate algebraic placement (which can move saturated steps the
    // gradient cannot see) with damped-Newton refinement of the squared
    // error. Each damped-Newton iteration is worth hundreds of
    // first-order steps, so the budget scales accordingly.
    InitContext ctx;
    FlowState st = init_flow(z, ctx, static_cast<std::size_t>(config.hidden_units));
    const int rounds = 6;
    const int lm_iters = std::clamp(config.max_iters / 25, 1, 240) / rounds + 1;
    naf::RawParams params;
    naf::RawParams best_params;
    LmResult lm;
    double best_lambda = std::numeric_limits<double>::infinity();
    int iters_total = 0;
    std::vector<char> infeasible;
    for (int round = 0; round < rounds; ++round) {
        const double gs_lambda =
            gs_sweeps(st, z, ctx, config.target_accuracy, 300, &infeasible);
        params = flow_to_raw(st, shift, scale);
        if (gs_lambda < best_lambda) {
            best_lambda = gs_lambda;
            best_params = params;
        }
        if (best_lambda > config.target_accuracy) {
            LmResult step = lm_refine(params, z, targets, config.target_accuracy, lm_iters);
            iters_total += step.iterations;
            if (step.best_lambda < best_lambda) {
                best_lambda = step.best_lambda;
                best_params = params;
            }
        }
        if (best_lambda <= config.target_accuracy) break;
        if (round + 1 < rounds) {
            const std::size_t fixed = repair_partition(ctx, z, infeasible, 80);
            if (fixed > 0) rebuild_base(ctx, z.size());
            if (std::getenv("CALIB_NAF_DEBUG"))
                std::fprintf(stderr, "round=%d best=%.4g repairs=%zu\n", round,
                             best_lambda, fixed);
            st = raw_to_flow(params);
        }
    }
    params = best_params;
    lm.best_lambda = best_lambda;
    lm.iterations = iters_total;

    if (std::getenv("CALIB_NAF_DEBUG")) {
        std::vector<double> mv;
        naf::debug_forward(params, z, targets, mv);
        for (std::size_t i = 0; i < n; ++i) {
            const double err = (mv[i] - targets[i]) * static_cast<double>(n + 1);
            if (std::abs(err) > 0.3)
                std::fprintf(stderr, "FINAL i=%zu z=%.6f err=%+.4f\n", i, z[i], err);
        }
    }

    const std::size_t J = params.a_hat.size();
    m.naf_params_ = params;
    m.naf_shift_ = params.in_shift;
    m.naf_scale_ = params.in_scale;
    m.naf_a_.resize(J);
    m.naf_b_ = params.b;
    m.naf_w_.resize(J);
    for (std::size_t j = 0; j < J; ++j) m.naf_a_[j] = softplus(params.a_hat[j]);
    {
        double wmax = *std::max_element(params.w_hat.begin(), params.w_hat.end());
        double wsum = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            m.naf_w_[j] = std::exp(params.w_hat[j] - wmax);
            wsum += m.naf_w_[j];
        }
        for (std::size_t j = 0; j < J; ++j) m.naf_w_[j] /= wsum;
    }
    m.naf_info_ = {lm.best_lambda, lm.iterations};

    if (lm.best_lambda > config.target_accuracy)
        throw ConvergenceError("fit_naf: accuracy target not reached", lm.best_lambda);
    return m;
}

}  // namespace calib
