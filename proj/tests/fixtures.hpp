#pragma once

#include "tslt/bundle.hpp"
#include "tslt/random.hpp"

#include <string>

namespace testing {

inline std::string random_name(tslt::RandSource& rng, std::size_t max_len = 12) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz_ ABCXYZ0123456789-";
    std::string s(1 + rng.uniform_index(max_len), ' ');
    for (char& c : s) {
        c = alphabet[rng.uniform_index(alphabet.size())];
    }
    return s;
}

/// Preprocessing state with `dims` features, some categorical, and `classes` labels.
inline tslt::PreprocessState random_preprocess(std::size_t dims, std::size_t classes, tslt::RandSource& rng) {
    tslt::PreprocessState s;
    s.label_column = "label";
    for (std::size_t i = 0; i < dims; ++i) {
        tslt::FeatureStats f;
        f.name = "f" + std::to_string(i);
        if (rng.uniform() < 0.25) {
            f.kind = tslt::ColumnKind::categorical;
            const auto n = 1 + rng.uniform_index(4);
            for (std::size_t c = 0; c < n; ++c) {
                f.categories.push_back("c" + std::to_string(c));
            }
            f.mode = f.categories[rng.uniform_index(n)];
        } else {
            f.median = rng.normal();
            f.mean = rng.normal();
            f.std = 0.1 + rng.uniform();
        }
        s.features.push_back(f);
    }
    for (std::size_t k = 0; k < classes; ++k) {
        std::string name = "class_" + std::to_string(k) + "_" + random_name(rng, 5);
        s.class_names.push_back(name);
        s.label_map[name] = static_cast<std::uint32_t>(k);
    }
    return s;
}

/// A bundle with random dimensions, weights perturbed away from their init, and f32-exact values.
inline tslt::ModelBundle random_bundle(tslt::RandSource& rng) {
    const auto arch = rng.uniform() < 0.8 ? tslt::Architecture::tslt : tslt::Architecture::mlp;
    const std::size_t dims = 1 + rng.uniform_index(arch == tslt::Architecture::tslt ? 40 : 6);
    const std::size_t classes = 2 + rng.uniform_index(arch == tslt::Architecture::tslt ? 9 : 3);
    tslt::ModelBundle b;
    b.task = classes == 2 && rng.uniform() < 0.5 ? tslt::Task::binary : tslt::Task::multiclass;
    b.params = tslt::build_model(arch, dims, classes, rng.next_u64());
    for (auto& t : tslt::stored_tensors(b.params)) {
        for (double& v : t.value->values()) {
            v += 1e-3 * rng.normal();
        }
    }
    tslt::quantize_to_float(b.params);
    b.preprocess = random_preprocess(dims, classes, rng);
    b.class_names = b.preprocess.class_names;
    return b;
}

}  // namespace testing
