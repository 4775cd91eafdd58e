#include "calib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "calib/errors.hpp"
#include "calib/rng.hpp"

namespace calib {

namespace {

std::uint64_t data_fingerprint(const std::string& name, std::size_t rows, std::size_t dim,
                               std::span<const double> labels) {
    std::uint64_t h = hash_string(name.c_str());
    h = derive_seed(h, rows);
    h = derive_seed(h, dim);
    // fold in a few label bit patterns so same-shaped datasets differ
    std::size_t stride = std::max<std::size_t>(1, rows / 16);
    for (std::size_t i = 0; i < rows; i += stride) {
        std::uint64_t bits;
        double v = labels[i];
        std::memcpy(&bits, &v, sizeof bits);
        h = derive_seed(h, bits);
    }
    return h;
}

}  // namespace

Dataset::Dataset(std::vector<double> features, std::size_t dim, std::vector<double> labels,
                 std::string name)
    : features_(std::move(features)), dim_(dim), labels_(std::move(labels)),
      name_(std::move(name)) {
    if (dim_ == 0) throw DataError(name_ + ": dataset needs at least one feature column");
    if (features_.size() != labels_.size() * dim_)
        throw DataError(name_ + ": feature matrix shape does not match label count");
    for (double v : features_)
        if (!std::isfinite(v)) throw DataError(name_ + ": non-finite feature value");
    for (double v : labels_)
        if (!std::isfinite(v)) throw DataError(name_ + ": non-finite label value");
    fingerprint_ = data_fingerprint(name_, labels_.size(), dim_, labels_);
}

void SplitSpec::validate() const {
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(train_frac) || !in_unit(cal_frac) || !in_unit(test_frac))
        throw ConfigError("split fractions must lie in (0,1)");
    if (std::abs(train_frac + cal_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
}

std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& data,
                                                    const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = data.rows();
    if (n < 10) throw DataError(data.name() + ": need at least 10 rows to split");

    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * n));
    const auto n_cal = static_cast<std::size_t>(std::llround(spec.cal_frac * n));
    if (n_train == 0 || n_cal == 0 || n_train + n_cal >= n)
        throw DataError(data.name() + ": split would leave an empty part");
    const std::size_t n_test = n - n_train - n_cal;

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(spec.seed);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.index(i + 1)]);

    auto take = [&](std::size_t begin, std::size_t count, SplitProvenance::Origin origin,
                    const char* tag) {
        std::vector<double> feats(count * data.dim());
        std::vector<double> labels(count);
        std::vector<std::uint32_t> ids(order.begin() + begin, order.begin() + begin + count);
        std::sort(ids.begin(), ids.end());
        for (std::size_t i = 0; i < count; ++i) {
            auto src = data.row(ids[i]);
            std::copy(src.begin(), src.end(), feats.begin() + i * data.dim());
            labels[i] = data.label(ids[i]);
        }
        Dataset part(std::move(feats), data.dim(), std::move(labels),
                     data.name() + "/" + tag);
        part.set_provenance({data.fingerprint(), origin, std::move(ids)});
        return part;
    };

    return {take(0, n_train, SplitProvenance::Origin::train, "train"),
            take(n_train, n_cal, SplitProvenance::Origin::cal, "cal"),
            take(n_train + n_cal, n_test, SplitProvenance::Origin::test, "test")};
}

Standardizer fit_standardizer(const Dataset& train) {
    const std::size_t n = train.rows();
    if (n == 0) throw EmptyInputError("fit_standardizer: empty training split");
    const std::size_t d = train.dim();

    Standardizer s;
    s.feature_means.assign(d, 0.0);
    s.feature_stds.assign(d, 1.0);

    for (std::size_t i = 0; i < n; ++i) {
        auto x = train.row(i);
        for (std::size_t j = 0; j < d; ++j) s.feature_means[j] += x[j];
    }
    for (double& m : s.feature_means) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = train.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            double c = x[j] - s.feature_means[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        double sd = std::sqrt(var[j] / static_cast<double>(n));
        // constant column: keep the transform invertible
        s.feature_stds[j] = sd > 1e-12 * std::max(1.0, std::abs(s.feature_means[j])) ? sd : 1.0;
    }

    double lm = 0.0;
    for (std::size_t i = 0; i < n; ++i) lm += train.label(i);
    lm /= static_cast<double>(n);
    double lv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double c = train.label(i) - lm;
        lv += c * c;
    }
    double lsd = std::sqrt(lv / static_cast<double>(n));
    s.label_mean = lm;
    s.label_std = lsd > 1e-12 * std::max(1.0, std::abs(lm)) ? lsd : 1.0;
    return s;
}

void Standardizer::apply_features(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = (x[j] - feature_means[j]) / feature_stds[j];
}

Dataset Standardizer::apply(const Dataset& d) const {
    std::vector<double> feats(d.rows() * d.dim());
    std::vector<double> labels(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) {
        apply_features(d.row(i), {feats.data() + i * d.dim(), d.dim()});
        labels[i] = apply_label(d.label(i));
    }
    Dataset out(std::move(feats), d.dim(), std::move(labels), d.name());
    if (d.provenance()) out.set_provenance(*d.provenance());
    return out;
}

namespace {

bool parse_double(const std::string& cell, double& out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        std::size_t b = cur.find_first_not_of(" \t\r");
        std::size_t e = cur.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
    }
    return cells;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path);

    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    bool first = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_line(line);
        std::vector<double> vals(cells.size());
        bool numeric = true;
        for (std::size_t j = 0; j < cells.size(); ++j)
            if (!parse_double(cells[j], vals[j])) {
                numeric = false;
                break;
            }
        if (first) {
            first = false;
            width = cells.size();
            if (!numeric) continue;  // header row
        }
        if (!numeric)
            throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric cell");
        if (cells.size() != width)
            throw DataError(path + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");
    if (width < 2) throw DataError(path + ": need at least one feature column plus label");

    const std::size_t d = width - 1;
    std::vector<double> feats(rows.size() * d);
    std::vector<double> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].begin() + d, feats.begin() + i * d);
        labels[i] = rows[i][d];
    }
    std::string name = path;
    if (auto pos = name.find_last_of("/\\"); pos != std::string::npos) name = name.substr(pos + 1);
    if (auto pos = name.rfind('.'); pos != std::string::npos) name = name.substr(0, pos);
    return Dataset(std::move(feats), d, std::move(labels), name);
}

}  // namespace calib
