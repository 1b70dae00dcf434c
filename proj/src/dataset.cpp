#include "tslt/dataset.hpp"

#include "tslt/error.hpp"
#include "tslt/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tslt {

SplitIndices stratified_split_indices(std::span<const int> labels, std::size_t num_classes, double test_fraction,
                                      std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error("split fraction must lie in (0, 1), got " + std::to_string(test_fraction));
    }
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " is outside [0, " + std::to_string(num_classes) + ")");
        }
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    RandSource rng(seed);
    SplitIndices split;
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& members = by_class[c];
        if (members.empty()) {
            continue;
        }
        if (members.size() < 2) {
            throw DataError("class " + std::to_string(c) + " has a single sample; a stratified split needs at least 2");
        }
        rng.shuffle(std::span<std::size_t>(members));
        const double wanted = std::floor(test_fraction * static_cast<double>(members.size()) + 0.5);
        const auto n_test = std::min(static_cast<std::size_t>(wanted), members.size() - 1);
        split.test.insert(split.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.insert(split.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

FeatureMatrix subset(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
    FeatureMatrix out;
    out.class_names = fm.class_names;
    out.x = Matrix(rows.size(), fm.x.cols());
    out.y.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = fm.x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.x.row(i).begin());
        if (!fm.y.empty()) {
            out.y.push_back(fm.y[rows[i]]);
        }
    }
    return out;
}

std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& fm, double test_fraction,
                                                         std::uint64_t seed) {
    if (fm.y.size() != fm.size()) {
        throw DataError("stratified split needs one label per row");
    }
    const auto split = stratified_split_indices(fm.y, fm.num_classes(), test_fraction, seed);
    return {subset(fm, split.train), subset(fm, split.test)};
}

FeatureMatrix to_binary_labels(const FeatureMatrix& fm, std::string_view benign_class_name) {
    const auto it = std::find(fm.class_names.begin(), fm.class_names.end(), benign_class_name);
    if (it == fm.class_names.end()) {
        throw DataError("benign class '" + std::string(benign_class_name) + "' is not among the dataset labels");
    }
    const int benign = static_cast<int>(it - fm.class_names.begin());
    FeatureMatrix out;
    out.x = fm.x;
    out.class_names = {"Benign", "Anomaly"};
    out.y.reserve(fm.y.size());
    std::size_t anomalies = 0;
    for (const int label : fm.y) {
        out.y.push_back(label == benign ? 0 : 1);
        anomalies += label == benign ? 0 : 1;
    }
    if (anomalies == 0 || anomalies == fm.y.size()) {
        throw DataError("binary relabeling produced a single-class dataset");
    }
    return out;
}

std::vector<std::size_t> class_counts(const FeatureMatrix& fm) {
    std::vector<std::size_t> counts(fm.num_classes(), 0);
    for (const int label : fm.y) {
        ++counts.at(static_cast<std::size_t>(label));
    }
    return counts;
}

}  // namespace tslt
