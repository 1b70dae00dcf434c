#pragma once

#include "tslt/gradcheck.hpp"
#include "tslt/matrix.hpp"
#include "tslt/random.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing {

inline tslt::Matrix random_matrix(std::size_t rows, std::size_t cols, tslt::RandSource& rng, double scale = 1.0) {
    tslt::Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = scale * rng.normal();
    }
    return m;
}

/// Weighted sum Σ y ⊙ r; gives every output entry a distinct upstream gradient r.
inline double weighted_sum(const tslt::Matrix& y, const tslt::Matrix& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y.values()[i] * r.values()[i];
    }
    return s;
}

/// Which ReLU units fire; a change between probes means a kink was crossed.
inline std::vector<bool> active_units(std::initializer_list<const tslt::Matrix*> outputs) {
    std::vector<bool> on;
    for (const tslt::Matrix* m : outputs) {
        for (double v : m->values()) {
            on.push_back(v > 0.0);
        }
    }
    return on;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tslt_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace testing
