#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tslt {

enum class ColumnKind : std::uint8_t { numeric = 0, categorical = 1, label = 2 };

std::string to_string(ColumnKind kind);

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    /// Sorted distinct non-missing values (categorical columns only).
    std::vector<std::string> categories;
    std::size_t missing = 0;
};

/// Raw flow records, stored column-major as the original cell strings.
struct FlowTable {
    std::vector<ColumnSchema> schema;
    std::vector<std::vector<std::string>> cells;
    std::size_t rows = 0;
    std::optional<std::size_t> label_index;

    std::optional<std::size_t> find(std::string_view name) const;
    std::vector<std::string> header() const;
};

/// Empty string and "nan"/"null" in any letter case.
bool is_missing(std::string_view cell);
/// Finite real number, surrounding blanks ignored.
std::optional<double> parse_real(std::string_view cell);

/// RFC-4180 record reader: quoted fields, doubled quotes, embedded newlines, CRLF.
class CsvReader {
public:
    explicit CsvReader(std::istream& in);

    /// Returns false at end of input.
    bool next(std::vector<std::string>& record);
    /// 1-based line number where the last record started.
    std::size_t line() const noexcept { return record_line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
    std::size_t record_line_ = 0;
    bool first_ = true;
};

void write_csv_record(std::ostream& out, std::span<const std::string> fields);

/// Builds a table and infers column kinds: a column is numeric iff every
/// non-missing cell parses as a real number. When `label_required` is set the
/// label column must exist.
FlowTable make_table(std::vector<std::string> header, const std::vector<std::vector<std::string>>& records,
                     std::optional<std::string_view> label_column, bool label_required = true,
                     std::size_t first_line = 2);

FlowTable read_csv(const std::filesystem::path& path, std::string_view label_column);
FlowTable read_csv(const std::filesystem::path& path, std::optional<std::string_view> label_column,
                   bool label_required);

/// Row subset in the given order; column kinds are kept, missing counts and
/// categories are recomputed.
FlowTable select_rows(const FlowTable& table, std::span<const std::size_t> rows);

void write_csv(std::ostream& out, const FlowTable& table);

}  // namespace tslt
