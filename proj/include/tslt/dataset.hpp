#pragma once

#include "tslt/preprocess.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace tslt {

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per class, round(fraction · n_c) samples (at most n_c - 1) go to the test
/// side after a seeded shuffle. Both index lists come back sorted.
SplitIndices stratified_split_indices(std::span<const int> labels, std::size_t num_classes, double test_fraction,
                                      std::uint64_t seed);

FeatureMatrix subset(const FeatureMatrix& fm, std::span<const std::size_t> rows);

/// (train, test)
std::pair<FeatureMatrix, FeatureMatrix> stratified_split(const FeatureMatrix& fm, double test_fraction,
                                                         std::uint64_t seed);

/// Class `benign_class_name` becomes 0 ("Benign"), every other class 1 ("Anomaly").
FeatureMatrix to_binary_labels(const FeatureMatrix& fm, std::string_view benign_class_name);

std::vector<std::size_t> class_counts(const FeatureMatrix& fm);

}  // namespace tslt
