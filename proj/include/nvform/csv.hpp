#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nvform {

/// Numeric CSV with one header row. Blank lines and lines starting with '#' are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::optional<std::size_t> find(std::string_view name) const;
    /// Index of `name`; throws InvalidInput naming the missing column.
    std::size_t column(std::string_view name) const;
    std::vector<double> values(std::string_view name) const;
};

/// Throws InvalidInput with the line number on malformed rows.
CsvTable read_csv(std::istream& is);

}  // namespace nvform
