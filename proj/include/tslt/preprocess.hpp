#pragma once

#include "tslt/csv.hpp"
#include "tslt/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tslt {

inline constexpr double kStdFloor = 1e-12;

/// Fitted statistics for one input column.
struct FeatureStats {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    // numeric
    double median = 0.0;
    double mean = 0.0;
    double std = 1.0;
    // categorical: codes are positions in `categories`; unseen values get categories.size()
    std::string mode;
    std::vector<std::string> categories;

    bool operator==(const FeatureStats&) const = default;
};

/// Everything needed to turn raw rows into model inputs, frozen at fit time.
struct PreprocessState {
    std::string label_column;
    std::vector<FeatureStats> features;
    /// Raw label string → class index. Several names may share an index
    /// (binary relabeling folds every attack class into one).
    std::map<std::string, std::uint32_t> label_map;
    /// Display name per class index.
    std::vector<std::string> class_names;

    std::size_t input_dim() const noexcept { return features.size(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
    bool operator==(const PreprocessState&) const = default;
};

struct FeatureMatrix {
    Matrix x;
    std::vector<int> y;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return x.rows(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
};

enum class LabelPolicy {
    /// The label column must exist and every label must be known.
    required,
    /// Labels are mapped when the column exists; otherwise `y` stays empty.
    optional,
    /// Labels are never read; `y` stays empty.
    ignore,
};

/// Medians, means and population stds over non-missing cells; modes with
/// lexicographic tie-breaking; classes indexed by sorted name.
PreprocessState fit_preprocessor(const FlowTable& table);

/// Imputes, standardizes and encodes with the fitted statistics only.
FeatureMatrix transform(const PreprocessState& state, const FlowTable& table,
                        LabelPolicy labels = LabelPolicy::required);

/// Folds every class except `benign` into "Anomaly"; the result has classes
/// {0: "Benign", 1: "Anomaly"}.
PreprocessState binarize_labels(const PreprocessState& state, std::string_view benign);

double median_of(std::vector<double> values);

}  // namespace tslt
