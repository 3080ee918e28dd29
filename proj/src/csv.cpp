#include "pspc/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pspc/errors.hpp"

namespace pspc {

Table& Table::add(std::string name, std::vector<double> values) {
    columns.push_back({std::move(name), std::move(values)});
    return *this;
}

std::size_t Table::rows() const { return columns.empty() ? 0 : columns.front().values.size(); }

const std::vector<double>& Table::column(std::string_view name) const {
    for (const auto& c : columns) {
        if (c.name == name) {
            return c.values;
        }
    }
    throw ShapeMismatch("no column named " + std::string(name));
}

std::string format_number(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    if (ec != std::errc()) {
        throw RangeError("cannot format number");
    }
    return std::string(buf, end);
}

std::string format_csv(const Table& table) {
    const std::size_t rows = table.rows();
    for (const auto& c : table.columns) {
        if (c.values.size() != rows) {
            throw ShapeMismatch("ragged CSV column '" + c.name + "'");
        }
        if (c.name.find_first_of(",\n\r") != std::string::npos) {
            throw ConfigError("CSV header may not contain separators: " + c.name);
        }
    }
    std::string out;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (j) out += ',';
        out += table.columns[j].name;
    }
    out += '\n';
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            if (j) out += ',';
            out += format_number(table.columns[j].values[i]);
        }
        out += '\n';
    }
    return out;
}

void emit_csv(const Table& table, const std::filesystem::path& path) {
    const auto text = format_csv(table);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out << text;
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

double parse_number(std::string_view field) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw FormatError("bad CSV number '" + std::string(field) + "'");
    }
    return value;
}

}  // namespace

Table parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (lines.empty()) {
        throw FormatError("CSV has no header");
    }
    Table table;
    for (auto h : split(lines.front())) {
        table.add(std::string(h), {});
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto fields = split(lines[i]);
        if (fields.size() != table.columns.size()) {
            throw ShapeMismatch("CSV row " + std::to_string(i) + " has " + std::to_string(fields.size()) + " fields");
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            table.columns[j].values.push_back(parse_number(fields[j]));
        }
    }
    return table;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str());
}

}  // namespace pspc
