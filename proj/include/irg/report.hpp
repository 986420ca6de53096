#pragma once

// Tabular reports written as CSV (RFC 4180 with a schema comment line) or as
// JSON (metadata object plus one object per row).

#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace irg {

inline constexpr int kReportSchemaVersion = 1;

#ifndef IRG_GIT_DESCRIBE
#define IRG_GIT_DESCRIBE "unknown"
#endif

using Cell = std::variant<std::string, double, std::int64_t, bool>;

struct Column {
    std::string name;
    bool nondeterministic = false;  // wall-clock columns; excluded from reproducibility checks
};

enum class ReportFormat { csv, json };

struct Report {
    std::vector<Column> columns;
    std::vector<std::vector<Cell>> rows;
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;

    void add_row(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string cell_text(const Cell& c) {
    struct Visitor {
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(double x) const { return format_double(x); }
        std::string operator()(std::int64_t x) const { return std::to_string(x); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
    };
    return std::visit(Visitor{}, c);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline nlohmann::json cell_json(const Cell& c) {
    return std::visit([](const auto& v) { return nlohmann::json(v); }, c);
}

}  // namespace detail

inline void write_csv(const Report& r, std::ostream& os) {
    os << "# schema=" << kReportSchemaVersion << "\r\n";
    for (std::size_t i = 0; i < r.columns.size(); ++i) {
        os << (i ? "," : "") << detail::csv_field(r.columns[i].name);
    }
    os << "\r\n";
    for (const auto& row : r.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            os << (i ? "," : "") << detail::csv_field(detail::cell_text(row[i]));
        }
        os << "\r\n";
    }
}

inline nlohmann::json to_json(const Report& r) {
    nlohmann::json meta;
    meta["schema"] = kReportSchemaVersion;
    meta["seed"] = r.seed;
    meta["git_describe"] = IRG_GIT_DESCRIBE;
    meta["config"] = r.config;
    nlohmann::json columns = nlohmann::json::array();
    for (const auto& c : r.columns) columns.push_back({{"name", c.name}, {"nondeterministic", c.nondeterministic}});
    meta["columns"] = columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t i = 0; i < row.size(); ++i) obj[r.columns[i].name] = detail::cell_json(row[i]);
        rows.push_back(std::move(obj));
    }
    return {{"metadata", meta}, {"rows", rows}};
}

inline void write_json(const Report& r, std::ostream& os) { os << to_json(r).dump(2) << "\n"; }

inline void write_report(const Report& r, ReportFormat format, std::ostream& os) {
    if (format == ReportFormat::csv) {
        write_csv(r, os);
    } else {
        write_json(r, os);
    }
}

}  // namespace irg
