#pragma once

#include "tslt/matrix.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tslt {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::uint64_t>> counts;

    std::size_t size() const noexcept { return counts.size(); }
    std::uint64_t total() const noexcept;
    std::uint64_t row_sum(std::size_t k) const noexcept;
    std::uint64_t col_sum(std::size_t k) const noexcept;
    std::uint64_t trace() const noexcept;
};

/// Class names default to "0".."K-1" when not given.
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes,
                          std::vector<std::string> class_names = {});

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct AverageMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    std::vector<ClassMetrics> classes;
    double accuracy = 0.0;
    AverageMetrics macro_avg;
    AverageMetrics weighted_avg;
    ConfusionMatrix confusion;
    std::uint64_t total = 0;
};

/// Precision/recall with an empty column/row are 0; F1 is 0 when P + R = 0.
/// Averages use full-precision per-class values.
EvalReport report(const ConfusionMatrix& cm);

/// Index of each row's maximum; ties go to the lowest index.
std::vector<int> argmax_labels(const Matrix& probs);

/// Five decimals, as in published classification tables.
std::string display5(double value);

nlohmann::json report_to_json(const EvalReport& r);
/// Plain-text classification report followed by the confusion matrix.
std::string format_report(const EvalReport& r);

}  // namespace tslt
