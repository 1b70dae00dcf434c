#include "tslt/metrics.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace tslt {

std::uint64_t ConfusionMatrix::total() const noexcept {
    std::uint64_t t = 0;
    for (const auto& row : counts) {
        for (const auto c : row) {
            t += c;
        }
    }
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t k) const noexcept {
    std::uint64_t t = 0;
    for (const auto c : counts[k]) {
        t += c;
    }
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t k) const noexcept {
    std::uint64_t t = 0;
    for (const auto& row : counts) {
        t += row[k];
    }
    return t;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
    std::uint64_t t = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        t += counts[k][k];
    }
    return t;
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes,
                          std::vector<std::string> class_names) {
    if (y_true.size() != y_pred.size()) {
        throw ShapeError("confusion needs equal-length label vectors, got " + std::to_string(y_true.size()) +
                         " and " + std::to_string(y_pred.size()));
    }
    if (class_names.empty()) {
        for (std::size_t k = 0; k < num_classes; ++k) {
            class_names.push_back(std::to_string(k));
        }
    }
    if (class_names.size() != num_classes) {
        throw ShapeError("confusion got " + std::to_string(class_names.size()) + " names for " +
                         std::to_string(num_classes) + " classes");
    }
    ConfusionMatrix cm;
    cm.class_names = std::move(class_names);
    cm.counts.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
    const auto in_range = [num_classes](int v) { return v >= 0 && static_cast<std::size_t>(v) < num_classes; };
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (!in_range(y_true[i]) || !in_range(y_pred[i])) {
            throw DataError("label pair (" + std::to_string(y_true[i]) + ", " + std::to_string(y_pred[i]) +
                            ") at position " + std::to_string(i) + " is outside [0, " +
                            std::to_string(num_classes) + ")");
        }
        ++cm.counts[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
    }
    return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport report(const ConfusionMatrix& cm) {
    EvalReport r;
    r.confusion = cm;
    r.total = cm.total();
    const std::size_t k_count = cm.size();
    for (std::size_t k = 0; k < k_count; ++k) {
        ClassMetrics m;
        m.name = k < cm.class_names.size() ? cm.class_names[k] : std::to_string(k);
        m.support = cm.row_sum(k);
        m.precision = ratio(cm.counts[k][k], cm.col_sum(k));
        m.recall = ratio(cm.counts[k][k], m.support);
        const double pr = m.precision + m.recall;
        m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
        r.classes.push_back(std::move(m));
    }
    r.accuracy = ratio(cm.trace(), r.total);
    if (k_count > 0) {
        for (const auto& m : r.classes) {
            r.macro_avg.precision += m.precision;
            r.macro_avg.recall += m.recall;
            r.macro_avg.f1 += m.f1;
        }
        const double k = static_cast<double>(k_count);
        r.macro_avg.precision /= k;
        r.macro_avg.recall /= k;
        r.macro_avg.f1 /= k;
    }
    if (r.total > 0) {
        for (const auto& m : r.classes) {
            const double w = static_cast<double>(m.support);
            r.weighted_avg.precision += w * m.precision;
            r.weighted_avg.recall += w * m.recall;
            r.weighted_avg.f1 += w * m.f1;
        }
        const double t = static_cast<double>(r.total);
        r.weighted_avg.precision /= t;
        r.weighted_avg.recall /= t;
        r.weighted_avg.f1 /= t;
    }
    return r;
}

std::vector<int> argmax_labels(const Matrix& probs) {
    if (probs.cols() == 0 && probs.rows() > 0) {
        throw ShapeError("argmax over empty rows");
    }
    std::vector<int> labels(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        // max_element returns the first maximum, so ties resolve to the lowest index
        labels[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return labels;
}

std::string display5(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.5f", value);
    return buf;
}

namespace {

nlohmann::json averages_json(const AverageMetrics& a) {
    return {{"precision", a.precision},
            {"recall", a.recall},
            {"f1", a.f1},
            {"display", {{"precision", display5(a.precision)}, {"recall", display5(a.recall)}, {"f1", display5(a.f1)}}}};
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& m : r.classes) {
        classes.push_back({{"name", m.name},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1},
                           {"support", m.support},
                           {"display",
                            {{"precision", display5(m.precision)},
                             {"recall", display5(m.recall)},
                             {"f1", display5(m.f1)}}}});
    }
    return {{"classes", classes},
            {"accuracy", r.accuracy},
            {"accuracy_display", display5(r.accuracy)},
            {"macro_avg", averages_json(r.macro_avg)},
            {"weighted_avg", averages_json(r.weighted_avg)},
            {"support", r.total},
            {"confusion", r.confusion.counts}};
}

std::string format_report(const EvalReport& r) {
    std::size_t width = 12;
    for (std::size_t k = 0; k < r.classes.size(); ++k) {
        width = std::max(width, r.classes[k].name.size() + std::to_string(k).size() + 3);
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "Label" << std::right << std::setw(12) << "Precision"
        << std::setw(12) << "Recall" << std::setw(12) << "F1-score" << std::setw(10) << "Support" << "\n";
    for (std::size_t k = 0; k < r.classes.size(); ++k) {
        const auto& m = r.classes[k];
        out << std::left << std::setw(static_cast<int>(width)) << (std::to_string(k) + " (" + m.name + ")")
            << std::right << std::setw(12) << display5(m.precision) << std::setw(12) << display5(m.recall)
            << std::setw(12) << display5(m.f1) << std::setw(10) << m.support << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width)) << "Accuracy" << std::right << std::setw(36)
        << display5(r.accuracy) << std::setw(10) << r.total << "\n";
    const auto avg_row = [&](const char* label, const AverageMetrics& a) {
        out << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::setw(12)
            << display5(a.precision) << std::setw(12) << display5(a.recall) << std::setw(12) << display5(a.f1)
            << std::setw(10) << r.total << "\n";
    };
    avg_row("Macro Avg", r.macro_avg);
    avg_row("Weighted Avg", r.weighted_avg);

    out << "\nConfusion matrix (rows = true, columns = predicted)\n";
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        out << std::setw(4) << i << " |";
        for (const auto c : r.confusion.counts[i]) {
            out << std::setw(9) << c;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace tslt
