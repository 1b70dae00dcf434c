#include "tslt/csv.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace tslt {

std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::numeric:
            return "numeric";
        case ColumnKind::categorical:
            return "categorical";
        case ColumnKind::label:
            return "label";
    }
    return "unknown";
}

std::optional<std::size_t> FlowTable::find(std::string_view name) const {
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::string> FlowTable::header() const {
    std::vector<std::string> names;
    names.reserve(schema.size());
    for (const auto& c : schema) {
        names.push_back(c.name);
    }
    return names;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

void refresh_column_stats(ColumnSchema& column, const std::vector<std::string>& cells) {
    column.missing = 0;
    std::set<std::string> seen;
    for (const auto& cell : cells) {
        if (is_missing(cell)) {
            ++column.missing;
        } else if (column.kind == ColumnKind::categorical) {
            seen.insert(cell);
        }
    }
    column.categories.assign(seen.begin(), seen.end());
}

}  // namespace

bool is_missing(std::string_view cell) {
    const auto t = trim(cell);
    return t.empty() || iequals(t, "nan") || iequals(t, "null");
}

std::optional<double> parse_real(std::string_view cell) {
    auto t = trim(cell);
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    if (t.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

CsvReader::CsvReader(std::istream& in) : in_(in) {}

bool CsvReader::next(std::vector<std::string>& record) {
    record.clear();
    std::string line;
    if (!std::getline(in_, line)) {
        return false;
    }
    ++line_;
    record_line_ = line_;
    if (first_) {
        first_ = false;
        if (line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
    }

    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (true) {
        if (i >= line.size()) {
            if (quoted) {
                // embedded newline inside a quoted field
                std::string more;
                if (!std::getline(in_, more)) {
                    throw DataError("unterminated quoted field starting on line " + std::to_string(record_line_));
                }
                ++line_;
                field.push_back('\n');
                line = std::move(more);
                i = 0;
                continue;
            }
            break;
        }
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // CRLF terminator
        } else {
            field.push_back(c);
        }
        ++i;
    }
    record.push_back(std::move(field));
    return true;
}

void write_csv_record(std::ostream& out, std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i != 0) {
            out << ',';
        }
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\r\n") == std::string::npos) {
            out << f;
            continue;
        }
        out << '"';
        for (const char c : f) {
            if (c == '"') {
                out << '"';
            }
            out << c;
        }
        out << '"';
    }
    out << '\n';
}

FlowTable make_table(std::vector<std::string> header, const std::vector<std::vector<std::string>>& records,
                     std::optional<std::string_view> label_column, bool label_required, std::size_t first_line) {
    FlowTable table;
    table.rows = records.size();
    table.schema.resize(header.size());
    table.cells.assign(header.size(), {});
    for (std::size_t c = 0; c < header.size(); ++c) {
        table.schema[c].name = std::move(header[c]);
        table.cells[c].reserve(records.size());
    }
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].size() != table.schema.size()) {
            throw DataError("ragged row " + std::to_string(r + 1) + " (line " + std::to_string(first_line + r) +
                            "): expected " + std::to_string(table.schema.size()) + " fields, found " +
                            std::to_string(records[r].size()));
        }
        for (std::size_t c = 0; c < records[r].size(); ++c) {
            table.cells[c].push_back(records[r][c]);
        }
    }
    if (label_column) {
        table.label_index = table.find(*label_column);
    }
    if (label_required && !table.label_index) {
        throw DataError("label column '" + std::string(label_column.value_or("")) + "' is not in the header");
    }
    for (std::size_t c = 0; c < table.schema.size(); ++c) {
        auto& column = table.schema[c];
        if (table.label_index == c) {
            column.kind = ColumnKind::label;
        } else {
            const bool numeric = std::all_of(table.cells[c].begin(), table.cells[c].end(), [](const auto& cell) {
                return is_missing(cell) || parse_real(cell).has_value();
            });
            column.kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
        }
        refresh_column_stats(column, table.cells[c]);
    }
    return table;
}

FlowTable read_csv(const std::filesystem::path& path, std::string_view label_column) {
    return read_csv(path, label_column, true);
}

FlowTable read_csv(const std::filesystem::path& path, std::optional<std::string_view> label_column,
                   bool label_required) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open data file " + path.string());
    }
    CsvReader reader(in);
    std::vector<std::string> header;
    if (!reader.next(header)) {
        throw DataError("data file " + path.string() + " has no header row");
    }
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    while (reader.next(record)) {
        if (record.size() == 1 && record[0].empty() && header.size() > 1) {
            continue;  // blank line
        }
        records.push_back(record);
    }
    return make_table(std::move(header), records, label_column, label_required);
}

FlowTable select_rows(const FlowTable& table, std::span<const std::size_t> rows) {
    FlowTable out;
    out.schema = table.schema;
    out.label_index = table.label_index;
    out.rows = rows.size();
    out.cells.resize(table.cells.size());
    for (std::size_t c = 0; c < table.cells.size(); ++c) {
        out.cells[c].reserve(rows.size());
        for (const std::size_t r : rows) {
            out.cells[c].push_back(table.cells[c].at(r));
        }
        refresh_column_stats(out.schema[c], out.cells[c]);
    }
    return out;
}

void write_csv(std::ostream& out, const FlowTable& table) {
    write_csv_record(out, table.header());
    std::vector<std::string> record(table.cells.size());
    for (std::size_t r = 0; r < table.rows; ++r) {
        for (std::size_t c = 0; c < table.cells.size(); ++c) {
            record[c] = table.cells[c][r];
        }
        write_csv_record(out, record);
    }
}

}  // namespace tslt
