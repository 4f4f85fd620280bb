#include "nvform/csv.hpp"

#include <charconv>
#include <istream>

#include <fmt/format.h>

#include "nvform/errors.hpp"

namespace nvform {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    for (;;) {
        const auto comma = line.find(',');
        out.push_back(trim(line.substr(0, comma)));
        if (comma == std::string_view::npos) return out;
        line.remove_prefix(comma + 1);
    }
}

}  // namespace

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw InvalidInput(fmt::format("CSV is missing column '{}'", name));
}

std::vector<double> CsvTable::values(std::string_view name) const {
    const auto c = column(name);
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
}

CsvTable read_csv(std::istream& is) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = split(body);
        if (t.header.empty()) {
            for (auto f : fields) t.header.emplace_back(f);
            continue;
        }
        if (fields.size() != t.header.size())
            throw InvalidInput(fmt::format("CSV line {}: expected {} fields, found {}", lineno, t.header.size(), fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || p != f.data() + f.size())
                throw InvalidInput(fmt::format("CSV line {}: '{}' is not a number", lineno, f));
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw InvalidInput("CSV has no header row");
    return t;
}

}  // namespace nvform
