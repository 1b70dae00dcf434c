#include "tslt/preprocess.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tslt {

double median_of(std::vector<double> values) {
    if (values.empty()) {
        throw EmptyInputError("median of an empty set");
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) {
        return values[mid];
    }
    return 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

FeatureStats fit_numeric(const ColumnSchema& column, const std::vector<std::string>& cells) {
    std::vector<double> values;
    values.reserve(cells.size());
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (is_missing(cells[r])) {
            continue;
        }
        const auto v = parse_real(cells[r]);
        if (!v) {
            throw DataError("non-numeric value '" + cells[r] + "' in numeric column '" + column.name + "' at row " +
                            std::to_string(r + 1));
        }
        values.push_back(*v);
    }
    if (values.empty()) {
        throw DataError("column '" + column.name + "' has no non-missing values");
    }
    FeatureStats stats;
    stats.name = column.name;
    stats.kind = ColumnKind::numeric;
    stats.median = median_of(values);
    // moments over the median-filled column
    values.resize(cells.size(), stats.median);
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    stats.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - stats.mean) * (v - stats.mean);
    }
    stats.std = std::max(std::sqrt(ss / static_cast<double>(values.size())), kStdFloor);
    return stats;
}

FeatureStats fit_categorical(const ColumnSchema& column, const std::vector<std::string>& cells) {
    std::map<std::string, std::size_t> counts;
    for (const auto& cell : cells) {
        if (!is_missing(cell)) {
            ++counts[cell];
        }
    }
    if (counts.empty()) {
        throw DataError("column '" + column.name + "' has no non-missing values");
    }
    FeatureStats stats;
    stats.name = column.name;
    stats.kind = ColumnKind::categorical;
    std::size_t best = 0;
    for (const auto& [value, count] : counts) {
        stats.categories.push_back(value);
        // map iteration is sorted, so a strict comparison keeps the smallest tied value
        if (count > best) {
            best = count;
            stats.mode = value;
        }
    }
    return stats;
}

}  // namespace

PreprocessState fit_preprocessor(const FlowTable& table) {
    if (!table.label_index) {
        throw DataError("cannot fit a preprocessor without a label column");
    }
    if (table.rows == 0) {
        throw DataError("cannot fit a preprocessor on an empty table");
    }
    PreprocessState state;
    state.label_column = table.schema[*table.label_index].name;
    for (std::size_t c = 0; c < table.schema.size(); ++c) {
        const auto& column = table.schema[c];
        if (c == *table.label_index) {
            continue;
        }
        if (column.kind == ColumnKind::numeric) {
            state.features.push_back(fit_numeric(column, table.cells[c]));
        } else {
            state.features.push_back(fit_categorical(column, table.cells[c]));
        }
    }

    std::set<std::string> labels;
    const auto& label_cells = table.cells[*table.label_index];
    for (std::size_t r = 0; r < label_cells.size(); ++r) {
        if (is_missing(label_cells[r])) {
            throw DataError("missing label in column '" + state.label_column + "' at row " + std::to_string(r + 1));
        }
        labels.insert(label_cells[r]);
    }
    std::uint32_t index = 0;
    for (const auto& name : labels) {
        state.label_map.emplace(name, index++);
        state.class_names.push_back(name);
    }
    return state;
}

FeatureMatrix transform(const PreprocessState& state, const FlowTable& table, LabelPolicy labels) {
    std::vector<std::size_t> sources;
    std::vector<std::string> missing;
    for (const auto& f : state.features) {
        const auto idx = table.find(f.name);
        if (!idx) {
            missing.push_back(f.name);
        } else {
            sources.push_back(*idx);
        }
    }
    const auto label_idx = labels == LabelPolicy::ignore ? std::nullopt : table.find(state.label_column);
    if (labels == LabelPolicy::required && !label_idx) {
        missing.push_back(state.label_column);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        throw SchemaError("input is missing required columns: " + list, missing);
    }

    FeatureMatrix fm;
    fm.class_names = state.class_names;
    fm.x = Matrix(table.rows, state.features.size());
    for (std::size_t j = 0; j < state.features.size(); ++j) {
        const auto& f = state.features[j];
        const auto& cells = table.cells[sources[j]];
        for (std::size_t r = 0; r < table.rows; ++r) {
            const std::string& cell = cells[r];
            if (f.kind == ColumnKind::numeric) {
                double v = f.median;
                if (!is_missing(cell)) {
                    const auto parsed = parse_real(cell);
                    if (!parsed) {
                        throw DataError("non-numeric value '" + cell + "' in numeric column '" + f.name +
                                        "' at row " + std::to_string(r + 1));
                    }
                    v = *parsed;
                }
                fm.x(r, j) = (v - f.mean) / f.std;
            } else {
                const std::string& value = is_missing(cell) ? f.mode : cell;
                const auto it = std::lower_bound(f.categories.begin(), f.categories.end(), value);
                const bool known = it != f.categories.end() && *it == value;
                fm.x(r, j) = static_cast<double>(known ? static_cast<std::size_t>(it - f.categories.begin())
                                                       : f.categories.size());
            }
        }
    }

    if (label_idx) {
        const auto& cells = table.cells[*label_idx];
        fm.y.resize(table.rows);
        for (std::size_t r = 0; r < table.rows; ++r) {
            const auto it = state.label_map.find(cells[r]);
            if (it == state.label_map.end()) {
                throw DataError("unseen label class '" + cells[r] + "' at row " + std::to_string(r + 1));
            }
            fm.y[r] = static_cast<int>(it->second);
        }
    }
    return fm;
}

PreprocessState binarize_labels(const PreprocessState& state, std::string_view benign) {
    const auto it = state.label_map.find(std::string(benign));
    if (it == state.label_map.end()) {
        throw DataError("benign class '" + std::string(benign) + "' is not among the dataset labels");
    }
    PreprocessState out = state;
    const std::uint32_t benign_index = it->second;
    bool any_anomaly = false;
    for (auto& [name, index] : out.label_map) {
        index = index == benign_index ? 0U : 1U;
        any_anomaly = any_anomaly || index == 1U;
    }
    if (!any_anomaly) {
        throw DataError("binary relabeling needs at least one non-benign class");
    }
    out.class_names = {"Benign", "Anomaly"};
    return out;
}

}  // namespace tslt
