#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "causal_audit/error.hpp"
#include "causal_audit/graph_io.hpp"

namespace causal_audit {

/// Named numeric columns; `values` is rows x columns.
struct Dataset {
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }

    std::size_t column_index(const std::string& name) const {
        auto i = find(name);
        if (!i) fail("UnknownColumn", "no column named '" + name + "'");
        return *i;
    }

    Eigen::VectorXd column(const std::string& name) const { return values.col(column_index(name)); }

    /// Rows selected by index, all columns.
    Dataset subset(std::span<const std::size_t> row_indices) const {
        Dataset d{names, Eigen::MatrixXd(row_indices.size(), values.cols())};
        for (std::size_t r = 0; r < row_indices.size(); ++r) d.values.row(r) = values.row(row_indices[r]);
        return d;
    }
};

inline Dataset make_dataset(std::vector<std::string> names, Eigen::MatrixXd values) {
    if (static_cast<std::size_t>(values.cols()) != names.size())
        fail("InvalidDataset", "column count does not match the number of names");
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        fail("InvalidDataset", "duplicate column names");
    for (const auto& n : names)
        if (!is_valid_node_name(n)) fail("InvalidDataset", "invalid column name '" + n + "'");
    if (!values.allFinite()) fail("NonFiniteValue", "dataset contains NaN or infinite values");
    return Dataset{std::move(names), std::move(values)};
}

/// The stricter shape discovery and estimation need: at least three rows.
inline void require_analysable(const Dataset& d) {
    if (d.rows() < 3) fail("InvalidDataset", "at least 3 rows are required");
    if (d.cols() == 0) fail("InvalidDataset", "dataset has no columns");
}

// ---------------------------------------------------------------------------
// Ordinal encodings: {column: [level0, level1, ...]} maps text levels to 0, 1, ...

using OrdinalEncoding = std::map<std::string, std::vector<std::string>>;

inline OrdinalEncoding encoding_from_json(const json& j) {
    if (!j.is_object()) fail("ParseError", "encoding must be a JSON object of level lists");
    OrdinalEncoding enc;
    for (const auto& [col, levels] : j.items()) {
        if (col == "format_version") continue;
        if (!levels.is_array()) fail("ParseError", "levels for '" + col + "' must be an array");
        for (const auto& l : levels) {
            if (!l.is_string()) fail("ParseError", "levels for '" + col + "' must be strings");
            enc[col].push_back(l.get<std::string>());
        }
    }
    return enc;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const OrdinalEncoding& encoding = {}) {
    std::string line;
    if (!std::getline(in, line)) fail("ParseError", "empty CSV");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> names;
    for (auto& c : detail::split_csv_line(line)) names.push_back(detail::trim(c));

    std::vector<const std::vector<std::string>*> levels(names.size(), nullptr);
    for (std::size_t c = 0; c < names.size(); ++c)
        if (auto it = encoding.find(names[c]); it != encoding.end()) levels[c] = &it->second;
    for (const auto& [col, lv] : encoding)
        if (std::find(names.begin(), names.end(), col) == names.end())
            fail("UnknownColumn", "encoding refers to missing column '" + col + "'");

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != names.size())
            fail("ParseError", "line " + std::to_string(lineno) + ": expected " + std::to_string(names.size()) +
                                   " fields, got " + std::to_string(cells.size()));
        std::vector<double> row(names.size());
        for (std::size_t c = 0; c < names.size(); ++c) {
            auto cell = detail::trim(cells[c]);
            if (cell.empty())
                fail("MissingValue", "line " + std::to_string(lineno) + ": empty value in '" + names[c] + "'");
            if (levels[c]) {
                auto it = std::find(levels[c]->begin(), levels[c]->end(), cell);
                if (it != levels[c]->end()) {
                    row[c] = static_cast<double>(it - levels[c]->begin());
                    continue;
                }
            }
            if (!detail::parse_number(cell, row[c]))
                fail("ParseError", "line " + std::to_string(lineno) + ": '" + cell + "' in column '" + names[c] +
                                       "' is not a number" + (levels[c] ? " or a declared level" : ""));
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(rows.size(), names.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < names.size(); ++c) m(r, c) = rows[r][c];
    return make_dataset(std::move(names), std::move(m));
}

inline Dataset parse_csv(const std::string& text, const OrdinalEncoding& encoding = {}) {
    std::istringstream in(text);
    return parse_csv(in, encoding);
}

inline Dataset load_csv(const std::string& path, const OrdinalEncoding& encoding = {}) {
    return parse_csv(read_file(path), encoding);
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string to_csv(const Dataset& d) {
    std::string out;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        if (c) out += ',';
        out += d.names[c];
    }
    out += '\n';
    for (std::size_t r = 0; r < d.rows(); ++r) {
        for (std::size_t c = 0; c < d.cols(); ++c) {
            if (c) out += ',';
            out += format_double(d.values(r, c));
        }
        out += '\n';
    }
    return out;
}

}  // namespace causal_audit
