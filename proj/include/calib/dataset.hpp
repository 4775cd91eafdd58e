#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace calib {

// Which split of a parent dataset a Dataset came from. Used to enforce
// that recalibration never sees rows the base predictor was trained on.
struct SplitProvenance {
    std::uint64_t source_fingerprint = 0;
    enum class Origin { none, train, cal, test };
    Origin origin = Origin::none;
    std::vector<std::uint32_t> row_ids;  // original row indices, sorted
};

// Immutable feature matrix + label vector. Construction validates shape
// agreement and rejects NaN/Inf entries.
class Dataset {
  public:
    Dataset(std::vector<double> features, std::size_t dim, std::vector<double> labels,
            std::string name);

    std::size_t rows() const { return labels_.size(); }
    std::size_t dim() const { return dim_; }
    std::span<const double> row(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }
    double label(std::size_t i) const { return labels_[i]; }
    std::span<const double> labels() const { return labels_; }
    std::span<const double> features() const { return features_; }
    const std::string& name() const { return name_; }

    const std::optional<SplitProvenance>& provenance() const { return provenance_; }
    void set_provenance(SplitProvenance p) { provenance_ = std::move(p); }

    // Fingerprint of the underlying data, used to match split provenance.
    std::uint64_t fingerprint() const { return fingerprint_; }

  private:
    std::vector<double> features_;  // rows x dim, row-major
    std::size_t dim_;
    std::vector<double> labels_;
    std::string name_;
    std::uint64_t fingerprint_;
    std::optional<SplitProvenance> provenance_;
};

struct SplitSpec {
    double train_frac = 0.6;
    double cal_frac = 0.2;
    double test_frac = 0.2;
    std::uint64_t seed = 0;

    void validate() const;  // fracs in (0,1), sum to 1 within 1e-9
};

// Deterministic disjoint/exhaustive partition; proportions match the spec
// within one row per split. Requires at least 10 rows and every split
// non-empty.
std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& data,
                                                    const SplitSpec& spec);

// Column-wise affine transform fitted on the training split only.
// Constant columns keep std 1 so the transform stays invertible.
struct Standardizer {
    std::vector<double> feature_means;
    std::vector<double> feature_stds;
    double label_mean = 0.0;
    double label_std = 1.0;

    Dataset apply(const Dataset& d) const;
    double apply_label(double y) const { return (y - label_mean) / label_std; }
    double invert_label(double z) const { return z * label_std + label_mean; }
    void apply_features(std::span<const double> x, std::span<double> out) const;
    double invert_feature(std::size_t j, double z) const {
        return z * feature_stds[j] + feature_means[j];
    }
};

Standardizer fit_standardizer(const Dataset& train);

// CSV ingestion: numeric cells, comma separated, last column is the label.
// A non-numeric first row is treated as a header and skipped.
Dataset load_csv(const std::string& path);

}  // namespace calib
