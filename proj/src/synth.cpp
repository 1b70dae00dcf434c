#include "tslt/synth.hpp"

#include "tslt/csv.hpp"
#include "tslt/error.hpp"
#include "tslt/random.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace tslt {

namespace {

constexpr double kBenignShare = 0.5442;
constexpr double kBlankFraction = 0.05;
constexpr double kProtoAgreement = 0.8;
const std::array<std::string, 3> kProtocols = {"tcp", "udp", "icmp"};

const std::array<std::string, 10> kIsotNames = {
    "Benign Data",          "DoS Attacks",   "Injection",     "Ip Spoofing",
    "MITM",                 "Password Cracking", "Payload Manipulation", "Replay Attack",
    "Unauthorized UDP Packets", "Video Interception Attack",
};

std::string format_real(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

ImbalanceProfile parse_profile(const std::string& name) {
    if (name == "uniform") {
        return ImbalanceProfile::uniform;
    }
    if (name == "isot") {
        return ImbalanceProfile::isot;
    }
    throw Error("unknown imbalance profile '" + name + "' (expected uniform or isot)");
}

std::vector<std::string> synth_class_names(std::size_t classes, ImbalanceProfile profile) {
    std::vector<std::string> names;
    if (profile == ImbalanceProfile::isot && classes == kIsotNames.size()) {
        names.assign(kIsotNames.begin(), kIsotNames.end());
        return names;
    }
    names.push_back("Benign");
    for (std::size_t k = 1; k < classes; ++k) {
        names.push_back("Attack_" + std::to_string(k));
    }
    return names;
}

std::vector<std::size_t> synth_class_counts(std::size_t classes, std::size_t rows, ImbalanceProfile profile) {
    std::vector<double> weights(classes, 1.0 / static_cast<double>(classes));
    if (profile == ImbalanceProfile::isot) {
        double harmonic = 0.0;
        for (std::size_t k = 1; k < classes; ++k) {
            harmonic += 1.0 / static_cast<double>(k);
        }
        weights[0] = kBenignShare;
        for (std::size_t k = 1; k < classes; ++k) {
            weights[k] = (1.0 - kBenignShare) / static_cast<double>(k) / harmonic;
        }
    }
    // largest-remainder apportionment
    std::vector<std::size_t> counts(classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < classes; ++k) {
        const double exact = weights[k] * static_cast<double>(rows);
        counts[k] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[k];
        remainders.emplace_back(exact - std::floor(exact), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < rows; ++i, ++assigned) {
        ++counts[remainders[i % classes].second];
    }
    // every class keeps at least two rows so it survives a stratified split
    for (std::size_t k = 0; k < classes; ++k) {
        while (counts[k] < 2) {
            const auto donor = static_cast<std::size_t>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
            --counts[donor];
            ++counts[k];
        }
    }
    return counts;
}

SynthSummary synth_dataset(const SynthConfig& cfg, std::ostream& out) {
    if (cfg.classes < 2 || cfg.features < 2 || cfg.rows < 10 * cfg.classes) {
        throw Error("synthetic dataset needs classes >= 2, features >= 2 and rows >= 10 x classes");
    }
    if (!(cfg.separation >= 0.0) || !std::isfinite(cfg.separation)) {
        throw Error("separation must be a finite non-negative number");
    }
    RandSource rng(cfg.seed);
    const std::size_t k_count = cfg.classes;
    const std::size_t d = cfg.features;

    std::vector<std::vector<double>> means(k_count, std::vector<double>(d));
    for (auto& mean : means) {
        double norm = 0.0;
        for (double& v : mean) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : mean) {
            v = cfg.separation * v / norm;
        }
    }

    SynthSummary summary;
    summary.class_names = synth_class_names(k_count, cfg.profile);
    summary.class_counts = synth_class_counts(k_count, cfg.rows, cfg.profile);

    std::vector<std::uint32_t> labels;
    labels.reserve(cfg.rows);
    for (std::size_t k = 0; k < k_count; ++k) {
        labels.insert(labels.end(), summary.class_counts[k], static_cast<std::uint32_t>(k));
    }
    rng.shuffle(std::span<std::uint32_t>(labels));

    std::vector<std::size_t> order(cfg.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_blank = static_cast<std::size_t>(std::floor(kBlankFraction * static_cast<double>(cfg.rows) + 0.5));
    std::vector<bool> blank(cfg.rows, false);
    for (std::size_t i = 0; i < n_blank; ++i) {
        blank[order[i]] = true;
    }
    summary.blanked_cells = n_blank;

    std::vector<std::string> record(d + 2);
    for (std::size_t j = 0; j < d; ++j) {
        record[j] = "f" + std::to_string(j);
    }
    record[d] = "proto";
    record[d + 1] = "label";
    write_csv_record(out, record);

    std::vector<double> x(d);
    std::size_t oracle_hits = 0;
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        const std::size_t k = labels[r];
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = means[k][j] + rng.normal();
        }
        std::size_t proto = k % kProtocols.size();
        if (rng.uniform() >= kProtoAgreement) {
            proto = static_cast<std::size_t>(rng.uniform_index(kProtocols.size()));
        }

        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k_count; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dist += (x[j] - means[c][j]) * (x[j] - means[c][j]);
            }
            if (dist < best) {
                best = dist;
                nearest = c;
            }
        }
        oracle_hits += nearest == k ? 1 : 0;

        for (std::size_t j = 0; j < d; ++j) {
            record[j] = (j == 0 && blank[r]) ? std::string() : format_real(x[j]);
        }
        record[d] = kProtocols[proto];
        record[d + 1] = summary.class_names[k];
        write_csv_record(out, record);
    }

    summary.centroid_oracle_accuracy = static_cast<double>(oracle_hits) / static_cast<double>(cfg.rows);
    summary.majority_fraction =
        static_cast<double>(*std::max_element(summary.class_counts.begin(), summary.class_counts.end())) /
        static_cast<double>(cfg.rows);
    return summary;
}

SynthSummary synth_dataset(const SynthConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    auto summary = synth_dataset(cfg, out);
    out.flush();
    if (!out) {
        throw Error("failed writing " + path.string());
    }
    return summary;
}

}  // namespace tslt
