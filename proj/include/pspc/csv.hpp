#ifndef PSPC_CSV_HPP
#define PSPC_CSV_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pspc {

struct Column {
    std::string name;
    std::vector<double> values;
};

/// Named numeric columns of equal length.
struct Table {
    std::vector<Column> columns;

    Table& add(std::string name, std::vector<double> values);
    std::size_t rows() const;
    const std::vector<double>& column(std::string_view name) const;
};

/// 17 significant digits, enough for any double to round-trip.
std::string format_number(double value);

std::string format_csv(const Table& table);
void emit_csv(const Table& table, const std::filesystem::path& path);

Table parse_csv(std::string_view text);
Table read_csv(const std::filesystem::path& path);

}  // namespace pspc

#endif
