#include "calib/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "calib/errors.hpp"
#include "calib/rng.hpp"
#include "calib/synth.hpp"

namespace calib {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
    try {
        return std::stoull(s);
    } catch (...) {
        throw ConfigError("config key '" + key + "': bad unsigned integer '" + s + "'");
    }
}

double parse_f64(const std::string& s, const std::string& key) {
    try {
        return std::stod(s);
    } catch (...) {
        throw ConfigError("config key '" + key + "': bad number '" + s + "'");
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        if (key == "datasets") cfg.datasets = split_list(value);
        else if (key == "bases") cfg.bases = split_list(value);
        else if (key == "scores") cfg.scores = split_list(value);
        else if (key == "interpolators") cfg.interpolators = split_list(value);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& s : split_list(value)) cfg.seeds.push_back(parse_u64(s, key));
        } else if (key == "train_frac") cfg.split.train_frac = parse_f64(value, key);
        else if (key == "cal_frac") cfg.split.cal_frac = parse_f64(value, key);
        else if (key == "test_frac") cfg.split.test_frac = parse_f64(value, key);
        else if (key == "output_dir") cfg.output_dir = value;
        else if (key == "epochs") cfg.base_hyper.epochs = static_cast<int>(parse_u64(value, key));
        else if (key == "hidden") cfg.base_hyper.hidden = static_cast<int>(parse_u64(value, key));
        else if (key == "lr") cfg.base_hyper.lr = parse_f64(value, key);
        else if (key == "ensemble_k")
            cfg.base_hyper.ensemble_k = static_cast<int>(parse_u64(value, key));
        else if (key == "naf_hidden")
            cfg.naf.hidden_units = static_cast<int>(parse_u64(value, key));
        else if (key == "naf_max_iters")
            cfg.naf.max_iters = static_cast<int>(parse_u64(value, key));
        else if (key == "naf_lr") cfg.naf.learning_rate = parse_f64(value, key);
        else if (key == "naf_target") cfg.naf.target_accuracy = parse_f64(value, key);
        else throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

namespace {

bool score_compatible(BaseKind base, ScoreKind score) {
    switch (score) {
        case ScoreKind::residue: return base == BaseKind::point;
        case ScoreKind::interval: return base == BaseKind::interval;
        case ScoreKind::quantile: return base == BaseKind::quantile;
        case ScoreKind::cdf:
        case ScoreKind::zscore:
            return base == BaseKind::distribution || base == BaseKind::ensemble;
        case ScoreKind::ensemble_sum: return base == BaseKind::ensemble;
    }
    return false;
}

struct ResolvedCell {
    CellKey key;          // score/interp recorded as resolved names
    BaseKind base_kind;
    int quantile_k = 4;
    ScoreKind score_kind;
    InterpKind interp_kind;
};

// Expand the configured grid into concrete cells. Aliases pin both score
// and interpolator; duplicates after resolution are dropped.
std::vector<ResolvedCell> expand_cells(const ExperimentConfig& cfg) {
    std::vector<ResolvedCell> cells;
    auto add = [&cells](ResolvedCell c) {
        for (const auto& prev : cells) {
            const auto& a = prev.key;
            const auto& b = c.key;
            if (a.dataset == b.dataset && a.base == b.base && a.score == b.score &&
                a.interp == b.interp && a.seed == b.seed)
                return;
        }
        cells.push_back(std::move(c));
    };

    for (const auto& ds : cfg.datasets) {
        for (const auto& base_name : cfg.bases) {
            int qk = 4;
            const BaseKind bk = parse_base_kind(base_name, &qk);
            bool base_has_score = false;
            for (const auto& score_name : cfg.scores) {
                std::vector<std::pair<ScoreKind, std::optional<InterpKind>>> expanded;
                if (score_name == "auto") {
                    expanded.emplace_back(
                        CalibrationScore::parse(auto_score_for(base_name)).kind(),
                        std::nullopt);
                } else if (score_name == "isotonic") {
                    if (bk != BaseKind::distribution && bk != BaseKind::ensemble) continue;
                    expanded.emplace_back(ScoreKind::cdf, InterpKind::linear);
                } else if (score_name == "conformal-calibration") {
                    if (bk != BaseKind::distribution && bk != BaseKind::ensemble) continue;
                    expanded.emplace_back(ScoreKind::cdf, InterpKind::random);
                } else {
                    ScoreKind sk = CalibrationScore::parse(score_name).kind();
                    if (!score_compatible(bk, sk)) continue;
                    expanded.emplace_back(sk, std::nullopt);
                }
                base_has_score = true;
                for (auto [sk, pinned] : expanded) {
                    std::vector<InterpKind> interps;
                    if (pinned)
                        interps.push_back(*pinned);
                    else
                        for (const auto& iname : cfg.interpolators)
                            interps.push_back(parse_interp_kind(iname));
                    for (InterpKind ik : interps) {
                        for (std::uint64_t seed : cfg.seeds) {
                            ResolvedCell c;
                            c.key = {ds, base_name, score_kind_name(sk),
                                     interp_kind_name(ik), seed};
                            c.base_kind = bk;
                            c.quantile_k = qk;
                            c.score_kind = sk;
                            c.interp_kind = ik;
                            add(std::move(c));
                        }
                    }
                }
            }
            if (!base_has_score)
                throw ConfigError("no configured score is compatible with base '" +
                                  base_name + "'");
        }
    }
    return cells;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (datasets.empty()) throw ConfigError("config needs at least one dataset");
    if (bases.empty()) throw ConfigError("config needs at least one base kind");
    if (scores.empty()) throw ConfigError("config needs at least one score");
    if (interpolators.empty()) throw ConfigError("config needs at least one interpolator");
    if (seeds.empty()) throw ConfigError("config needs at least one seed");
    split.validate();
    for (const auto& i : interpolators) parse_interp_kind(i);
    for (const auto& s : scores)
        if (s != "auto" && s != "isotonic" && s != "conformal-calibration")
            CalibrationScore::parse(s);
    expand_cells(*this);  // throws on incompatible score/base configurations
    for (const auto& d : datasets) {
        if (d.rfind("synth:", 0) != 0) continue;
        std::stringstream ss(d);
        std::vector<std::string> parts;
        std::string item;
        while (std::getline(ss, item, ':')) parts.push_back(trim(item));
        if (parts.size() < 3 || parts.size() > 4)
            throw ConfigError("bad synthetic spec '" + d + "'");
        auto names = synthetic_names();
        if (std::find(names.begin(), names.end(), parts[1]) == names.end())
            throw ConfigError("unknown synthetic generator '" + parts[1] + "'");
        parse_u64(parts[2], "synthetic rows");
        if (parts.size() == 4) parse_u64(parts[3], "synthetic seed");
    }
}

std::string auto_score_for(const std::string& base) {
    int qk = 4;
    switch (parse_base_kind(base, &qk)) {
        case BaseKind::point: return "residue";
        case BaseKind::interval: return "interval";
        case BaseKind::quantile: return "quantile";
        case BaseKind::distribution: return "zscore";
        case BaseKind::ensemble: return "ensemble-sum";
    }
    throw ConfigError("unknown base kind: " + base);
}

Dataset resolve_dataset(const std::string& spec) {
    if (spec.rfind("synth:", 0) != 0) return load_csv(spec);
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(trim(item));
    if (parts.size() < 3 || parts.size() > 4)
        throw ConfigError("bad synthetic spec '" + spec + "' (want synth:<name>:<rows>[:<seed>])");
    const std::size_t rows = parse_u64(parts[2], "synthetic rows");
    const std::uint64_t seed = parts.size() == 4 ? parse_u64(parts[3], "synthetic seed") : 1234;
    return make_synthetic(parts[1], rows, seed);
}

unsigned thread_cap() {
    if (const char* env = std::getenv("CALIB_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

namespace {

CalibrationScore make_score(ScoreKind kind) {
    // ensemble-sum uses each member's natural score and the prediction's
    // own weights by default
    return CalibrationScore(kind);
}

struct CellRuntime {
    const ExperimentConfig* cfg;
    const std::map<std::string, std::shared_ptr<const Dataset>>* data;
};

CellResult run_cell(const CellRuntime& rt, const ResolvedCell& cell) {
    CellResult result;
    result.key = cell.key;
    try {
        const Dataset& data = *rt.data->at(cell.key.dataset);
        SplitSpec split = rt.cfg->split;
        split.seed = cell.key.seed;
        auto [train, cal, test] = split_dataset(data, split);
        const Standardizer std_ = fit_standardizer(train);
        const Dataset train_s = std_.apply(train);
        const Dataset cal_s = std_.apply(cal);
        const Dataset test_s = std_.apply(test);

        const std::uint64_t cell_uid =
            derive_seed(derive_seed(hash_string(cell.key.dataset.c_str()),
                                    hash_string(cell.key.base.c_str())),
                        derive_seed(hash_string(cell.key.score.c_str()),
                                    hash_string(cell.key.interp.c_str())));

        BaseHyper hyper = rt.cfg->base_hyper;
        hyper.quantile_k = cell.quantile_k;
        hyper.seed = derive_seed(cell_uid, cell.key.seed);
        auto base = train_base(train_s, cell.base_kind, hyper);

        RecalibratedPredictor h =
            recalibrate(base, make_score(cell.score_kind), cell.interp_kind, cal_s,
                        derive_seed(hyper.seed, 1), rt.cfg->naf);

        result.metrics = evaluate_metrics(h, test_s, derive_seed(hyper.seed, 2));

        auto pits = pit_values(h, test_s);
        result.pit_hist.assign(20, 0);
        for (double p : pits) {
            auto b = static_cast<std::size_t>(std::clamp(p, 0.0, 1.0 - 1e-12) * 20.0);
            ++result.pit_hist[b];
        }
    } catch (const std::exception& e) {
        result.metrics.reset();
        result.error = e.what();
    }
    return result;
}

template <typename Work>
void parallel_over(std::size_t count, Work&& work) {
    const unsigned threads = std::min<unsigned>(thread_cap(), std::max<std::size_t>(count, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) break;
                work(i);
            }
        });
    for (auto& th : pool) th.join();
}

std::map<std::string, std::shared_ptr<const Dataset>> load_datasets(
    const ExperimentConfig& cfg) {
    std::map<std::string, std::shared_ptr<const Dataset>> data;
    for (const auto& spec : cfg.datasets)
        if (!data.count(spec))
            data.emplace(spec, std::make_shared<Dataset>(resolve_dataset(spec)));
    return data;
}

void accumulate(std::optional<double>& mean, std::optional<double>& se,
                const std::vector<double>& vals) {
    if (vals.empty()) {
        mean.reset();
        se.reset();
        return;
    }
    double m = 0;
    for (double v : vals) m += v;
    m /= static_cast<double>(vals.size());
    double s2 = 0;
    for (double v : vals) s2 += (v - m) * (v - m);
    mean = m;
    se = vals.size() > 1
             ? std::sqrt(s2 / (static_cast<double>(vals.size()) - 1.0) /
                         static_cast<double>(vals.size()))
             : 0.0;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto cells = expand_cells(config);
    const auto data = load_datasets(config);

    ExperimentReport report;
    report.config = config;
    report.rows.resize(cells.size());

    CellRuntime rt{&config, &data};
    parallel_over(cells.size(), [&](std::size_t i) { report.rows[i] = run_cell(rt, cells[i]); });

    for (const auto& r : report.rows)
        if (!r.metrics) ++report.failed_cells;

    // aggregates per configuration, in first-seen row order
    std::vector<std::array<std::string, 4>> seen;
    for (const auto& r : report.rows) {
        std::array<std::string, 4> key{r.key.dataset, r.key.base, r.key.score, r.key.interp};
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        AggregateRow agg;
        agg.dataset = key[0];
        agg.base = key[1];
        agg.score = key[2];
        agg.interp = key[3];
        std::vector<double> nlls, crpss, stds, cis, eces, kss;
        for (const auto& q : report.rows) {
            if (!(q.key.dataset == key[0] && q.key.base == key[1] && q.key.score == key[2] &&
                  q.key.interp == key[3]))
                continue;
            if (!q.metrics) continue;
            ++agg.count;
            const MetricRow& m = *q.metrics;
            if (m.nll && std::isfinite(*m.nll)) nlls.push_back(*m.nll);
            crpss.push_back(m.crps);
            if (m.std_dev) stds.push_back(*m.std_dev);
            cis.push_back(m.ci95_width);
            eces.push_back(m.ece);
            kss.push_back(m.pit_ks);
        }
        accumulate(agg.nll_mean, agg.nll_se, nlls);
        accumulate(agg.std_mean, agg.std_se, stds);
        std::optional<double> tmp_m, tmp_s;
        accumulate(tmp_m, tmp_s, crpss);
        agg.crps_mean = tmp_m.value_or(0);
        agg.crps_se = tmp_s.value_or(0);
        accumulate(tmp_m, tmp_s, cis);
        agg.ci95_mean = tmp_m.value_or(0);
        agg.ci95_se = tmp_s.value_or(0);
        accumulate(tmp_m, tmp_s, eces);
        agg.ece_mean = tmp_m.value_or(0);
        agg.ece_se = tmp_s.value_or(0);
        accumulate(tmp_m, tmp_s, kss);
        agg.ks_mean = tmp_m.value_or(0);
        agg.ks_se = tmp_s.value_or(0);
        report.aggregates.push_back(std::move(agg));
    }
    return report;
}

std::vector<IntervalComparisonRow> run_interval_comparison(const ExperimentConfig& config,
                                                           double level) {
    config.validate();
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("interval comparison level must lie in (0,1)");
    const auto data = load_datasets(config);

    struct Job {
        std::string dataset, base;
        BaseKind kind;
        int qk;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& ds : config.datasets)
        for (const auto& base_name : config.bases) {
            int qk = 4;
            BaseKind bk = parse_base_kind(base_name, &qk);
            for (std::uint64_t seed : config.seeds) jobs.push_back({ds, base_name, bk, qk, seed});
        }

    std::vector<IntervalComparisonRow> rows(jobs.size());
    std::mutex err_mutex;
    std::string first_error;
    parallel_over(jobs.size(), [&](std::size_t i) {
        try {
        const Job& job = jobs[i];
        IntervalComparisonRow row;
        row.dataset = job.dataset;
        row.base = job.base;
        row.seed = job.seed;

        const Dataset& raw = *data.at(job.dataset);
        SplitSpec split = config.split;
        split.seed = job.seed;
        auto [train, cal, test] = split_dataset(raw, split);
        const Standardizer std_ = fit_standardizer(train);
        const Dataset train_s = std_.apply(train);
        const Dataset cal_s = std_.apply(cal);
        const Dataset test_s = std_.apply(test);

        BaseHyper hyper = config.base_hyper;
        hyper.quantile_k = job.qk;
        hyper.seed = derive_seed(hash_string(job.base.c_str()), job.seed);
        auto base = train_base(train_s, job.kind, hyper);
        CalibrationScore score = CalibrationScore::parse(auto_score_for(job.base));

        RecalibratedPredictor h = recalibrate(base, score, InterpKind::linear, cal_s,
                                              derive_seed(hyper.seed, 1), config.naf);

        // score-space center of the non-conformity |phi - c0|
        const double c0 = [&] {
            switch (score.kind()) {
                case ScoreKind::interval:
                case ScoreKind::cdf:
                case ScoreKind::quantile: return 0.5;
                default: return 0.0;  // residue, zscore, ensemble-sum of those
            }
        }();

        std::vector<double> nc(cal_s.rows());
        for (std::size_t r = 0; r < cal_s.rows(); ++r)
            nc[r] = std::abs(score.evaluate(base->predict(cal_s.row(r)), cal_s.label(r)) - c0);
        std::sort(nc.begin(), nc.end());
        const auto k = static_cast<std::size_t>(
            std::floor(level * static_cast<double>(nc.size()) + 1e-9));
        const double v_star = k >= nc.size() ? std::numeric_limits<double>::infinity() : nc[k];

        double conf_w = 0, conf_cov = 0, cred_w = 0, cred_cov = 0;
        for (std::size_t r = 0; r < test_s.rows(); ++r) {
            auto x = test_s.row(r);
            const double y = test_s.label(r);
            PredictionOutput pred = base->predict(x);
            const double s_obs = score.evaluate(pred, y);
            // conformal interval endpoints: score = c0 -/+ v*
            const double lo_c = score.inverse(pred, c0 - v_star);
            const double hi_c = score.inverse(pred, c0 + v_star);
            conf_w += hi_c - lo_c;
            if (std::abs(s_obs - c0) <= v_star) conf_cov += 1.0;
            auto [lo_r, hi_r] = h.credible_interval(x, level);
            cred_w += hi_r - lo_r;
            if (y >= lo_r && y <= hi_r) cred_cov += 1.0;
        }
        const double m = static_cast<double>(test_s.rows());
        row.conformal_width = conf_w / m;
        row.conformal_coverage = conf_cov / m;
        row.credible_width = cred_w / m;
        row.credible_coverage = cred_cov / m;
        rows[i] = std::move(row);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (first_error.empty()) first_error = e.what();
        }
    });
    if (!first_error.empty()) throw Error("interval comparison failed: " + first_error);
    return rows;
}

// ---------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opt_cell(const std::optional<double>& v) {
    if (!v || !std::isfinite(*v)) return "NA";
    return fmt_double(*v);
}

ordered_json config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["datasets"] = c.datasets;
    j["bases"] = c.bases;
    j["scores"] = c.scores;
    j["interpolators"] = c.interpolators;
    j["seeds"] = c.seeds;
    j["split"] = {{"train_frac", c.split.train_frac},
                  {"cal_frac", c.split.cal_frac},
                  {"test_frac", c.split.test_frac}};
    j["output_dir"] = c.output_dir;
    j["base_hyper"] = {{"hidden", c.base_hyper.hidden},
                       {"epochs", c.base_hyper.epochs},
                       {"lr", c.base_hyper.lr},
                       {"ensemble_k", c.base_hyper.ensemble_k}};
    j["naf"] = {{"hidden_units", c.naf.hidden_units},
                {"max_iters", c.naf.max_iters},
                {"learning_rate", c.naf.learning_rate},
                {"target_accuracy", c.naf.target_accuracy}};
    return j;
}

void config_from_json(const ordered_json& j, ExperimentConfig& c) {
    c.datasets = j.at("datasets").get<std::vector<std::string>>();
    c.bases = j.at("bases").get<std::vector<std::string>>();
    c.scores = j.at("scores").get<std::vector<std::string>>();
    c.interpolators = j.at("interpolators").get<std::vector<std::string>>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.split.train_frac = j.at("split").at("train_frac").get<double>();
    c.split.cal_frac = j.at("split").at("cal_frac").get<double>();
    c.split.test_frac = j.at("split").at("test_frac").get<double>();
    c.output_dir = j.at("output_dir").get<std::string>();
    c.base_hyper.hidden = j.at("base_hyper").at("hidden").get<int>();
    c.base_hyper.epochs = j.at("base_hyper").at("epochs").get<int>();
    c.base_hyper.lr = j.at("base_hyper").at("lr").get<double>();
    c.base_hyper.ensemble_k = j.at("base_hyper").at("ensemble_k").get<int>();
    c.naf.hidden_units = j.at("naf").at("hidden_units").get<int>();
    c.naf.max_iters = j.at("naf").at("max_iters").get<int>();
    c.naf.learning_rate = j.at("naf").at("learning_rate").get<double>();
    c.naf.target_accuracy = j.at("naf").at("target_accuracy").get<double>();
}

ordered_json opt_json(const std::optional<double>& v) {
    if (!v || !std::isfinite(*v)) return nullptr;
    return *v;
}

std::optional<double> opt_from_json(const ordered_json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
    ordered_json j;
    j["config"] = config_to_json(report.config);
    j["failed_cells"] = report.failed_cells;
    j["rows"] = ordered_json::array();
    for (const auto& r : report.rows) {
        ordered_json row;
        row["dataset"] = r.key.dataset;
        row["base"] = r.key.base;
        row["score"] = r.key.score;
        row["interp"] = r.key.interp;
        row["seed"] = r.key.seed;
        if (r.metrics) {
            row["metrics"] = {{"nll", opt_json(r.metrics->nll)},
                              {"crps", r.metrics->crps},
                              {"std", opt_json(r.metrics->std_dev)},
                              {"ci95_width", r.metrics->ci95_width},
                              {"ece", r.metrics->ece},
                              {"pit_ks", r.metrics->pit_ks}};
            row["pit_hist"] = r.pit_hist;
        } else {
            row["error"] = r.error;
        }
        j["rows"].push_back(std::move(row));
    }
    j["aggregates"] = ordered_json::array();
    for (const auto& a : report.aggregates) {
        ordered_json agg;
        agg["dataset"] = a.dataset;
        agg["base"] = a.base;
        agg["score"] = a.score;
        agg["interp"] = a.interp;
        agg["count"] = a.count;
        agg["nll"] = {{"mean", opt_json(a.nll_mean)}, {"se", opt_json(a.nll_se)}};
        agg["crps"] = {{"mean", a.crps_mean}, {"se", a.crps_se}};
        agg["std"] = {{"mean", opt_json(a.std_mean)}, {"se", opt_json(a.std_se)}};
        agg["ci95_width"] = {{"mean", a.ci95_mean}, {"se", a.ci95_se}};
        agg["ece"] = {{"mean", a.ece_mean}, {"se", a.ece_se}};
        agg["pit_ks"] = {{"mean", a.ks_mean}, {"se", a.ks_se}};
        j["aggregates"].push_back(std::move(agg));
    }
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& json_text) {
    const ordered_json j = ordered_json::parse(json_text);
    ExperimentReport report;
    config_from_json(j.at("config"), report.config);
    report.failed_cells = j.at("failed_cells").get<std::size_t>();
    for (const auto& row : j.at("rows")) {
        CellResult r;
        r.key.dataset = row.at("dataset").get<std::string>();
        r.key.base = row.at("base").get<std::string>();
        r.key.score = row.at("score").get<std::string>();
        r.key.interp = row.at("interp").get<std::string>();
        r.key.seed = row.at("seed").get<std::uint64_t>();
        if (row.contains("metrics")) {
            MetricRow m;
            m.nll = opt_from_json(row.at("metrics").at("nll"));
            m.crps = row.at("metrics").at("crps").get<double>();
            m.std_dev = opt_from_json(row.at("metrics").at("std"));
            m.ci95_width = row.at("metrics").at("ci95_width").get<double>();
            m.ece = row.at("metrics").at("ece").get<double>();
            m.pit_ks = row.at("metrics").at("pit_ks").get<double>();
            r.metrics = m;
            r.pit_hist = row.at("pit_hist").get<std::vector<std::uint32_t>>();
        } else {
            r.error = row.at("error").get<std::string>();
        }
        report.rows.push_back(std::move(r));
    }
    for (const auto& agg : j.at("aggregates")) {
        AggregateRow a;
        a.dataset = agg.at("dataset").get<std::string>();
        a.base = agg.at("base").get<std::string>();
        a.score = agg.at("score").get<std::string>();
        a.interp = agg.at("interp").get<std::string>();
        a.count = agg.at("count").get<std::size_t>();
        a.nll_mean = opt_from_json(agg.at("nll").at("mean"));
        a.nll_se = opt_from_json(agg.at("nll").at("se"));
        a.crps_mean = agg.at("crps").at("mean").get<double>();
        a.crps_se = agg.at("crps").at("se").get<double>();
        a.std_mean = opt_from_json(agg.at("std").at("mean"));
        a.std_se = opt_from_json(agg.at("std").at("se"));
        a.ci95_mean = agg.at("ci95_width").at("mean").get<double>();
        a.ci95_se = agg.at("ci95_width").at("se").get<double>();
        a.ece_mean = agg.at("ece").at("mean").get<double>();
        a.ece_se = agg.at("ece").at("se").get<double>();
        a.ks_mean = agg.at("pit_ks").at("mean").get<double>();
        a.ks_se = agg.at("pit_ks").at("se").get<double>();
        report.aggregates.push_back(std::move(a));
    }
    return report;
}

std::string report_to_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "dataset,base,score,interp,seed,nll,crps,std,ci95,ece,pit_ks\n";
    for (const auto& r : report.rows) {
        out << r.key.dataset << ',' << r.key.base << ',' << r.key.score << ','
            << r.key.interp << ',' << r.key.seed << ',';
        if (r.metrics) {
            const MetricRow& m = *r.metrics;
            out << opt_cell(m.nll) << ',' << fmt_double(m.crps) << ',' << opt_cell(m.std_dev)
                << ',' << fmt_double(m.ci95_width) << ',' << fmt_double(m.ece) << ','
                << fmt_double(m.pit_ks) << '\n';
        } else {
            out << "NA,NA,NA,NA,NA,NA\n";
        }
    }
    return out.str();
}

void emit_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());

    auto write_file = [&](const std::string& name, const std::string& contents) {
        const std::string path = dir + "/" + name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write output file: " + path);
        out << contents;
        if (!out) throw Error("write failed: " + path);
    };

    write_file("report.csv", report_to_csv(report));
    write_file("report.json", report_to_json(report));

    std::ostringstream hist;
    hist << "dataset,base,score,interp,seed";
    for (int b = 0; b < 20; ++b) hist << ",bin" << b;
    hist << '\n';
    for (const auto& r : report.rows) {
        if (!r.metrics) continue;
        hist << r.key.dataset << ',' << r.key.base << ',' << r.key.score << ','
             << r.key.interp << ',' << r.key.seed;
        for (auto c : r.pit_hist) hist << ',' << c;
        hist << '\n';
    }
    write_file("pit_histograms.csv", hist.str());
}

void emit_interval_comparison(const std::vector<IntervalComparisonRow>& rows,
                              const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());

    std::ostringstream out;
    out << "dataset,base,seed,conformal_width,conformal_coverage,credible_width,"
           "credible_coverage\n";
    for (const auto& r : rows)
        out << r.dataset << ',' << r.base << ',' << r.seed << ','
            << fmt_double(r.conformal_width) << ',' << fmt_double(r.conformal_coverage) << ','
            << fmt_double(r.credible_width) << ',' << fmt_double(r.credible_coverage) << '\n';

    std::ostringstream summary;
    summary << "dataset,base,seeds,conformal_width,conformal_coverage,credible_width,"
               "credible_coverage\n";
    std::vector<std::pair<std::string, std::string>> seen;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.dataset, r.base);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        double cw = 0, cc = 0, rw = 0, rc = 0;
        std::size_t cnt = 0;
        for (const auto& q : rows)
            if (q.dataset == r.dataset && q.base == r.base) {
                cw += q.conformal_width;
                cc += q.conformal_coverage;
                rw += q.credible_width;
                rc += q.credible_coverage;
                ++cnt;
            }
        const double n = static_cast<double>(cnt);
        summary << r.dataset << ',' << r.base << ',' << cnt << ',' << fmt_double(cw / n) << ','
                << fmt_double(cc / n) << ',' << fmt_double(rw / n) << ',' << fmt_double(rc / n)
                << '\n';
    }

    const std::string path = dir + "/intervals.csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write output file: " + path);
    f << out.str();
    const std::string spath = dir + "/intervals_summary.csv";
    std::ofstream sf(spath, std::ios::binary);
    if (!sf) throw Error("cannot write output file: " + spath);
    sf << summary.str();
}

}  // namespace calib
