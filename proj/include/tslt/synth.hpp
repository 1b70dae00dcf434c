#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace tslt {

enum class ImbalanceProfile {
    uniform,
    /// One dominant benign class (54.42%), attack classes sharing the rest with weights ∝ 1/k.
    isot,
};

ImbalanceProfile parse_profile(const std::string& name);

struct SynthConfig {
    std::size_t classes = 10;
    std::size_t features = 32;
    std::size_t rows = 20000;
    double separation = 8.0;
    ImbalanceProfile profile = ImbalanceProfile::uniform;
    std::uint64_t seed = 7;
};

struct SynthSummary {
    std::vector<std::string> class_names;
    std::vector<std::size_t> class_counts;
    /// Accuracy of assigning each row to the nearest true class mean.
    double centroid_oracle_accuracy = 0.0;
    double majority_fraction = 0.0;
    std::size_t blanked_cells = 0;
};

/// Gaussian flow-like records: numeric columns f0..f{d-1} around class means
/// separation · u_k (u_k seeded unit directions) with unit covariance, a
/// categorical "proto" column correlated with the class, and a "label"
/// column. Exactly 5% of f0 is blanked. Rows are written in shuffled order.
SynthSummary synth_dataset(const SynthConfig& cfg, std::ostream& out);
SynthSummary synth_dataset(const SynthConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> synth_class_names(std::size_t classes, ImbalanceProfile profile);
std::vector<std::size_t> synth_class_counts(std::size_t classes, std::size_t rows, ImbalanceProfile profile);

}  // namespace tslt
