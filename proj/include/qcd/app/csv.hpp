#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace qcd::app {

/// 17 significant digits; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double v);
std::string format_integer(std::int64_t v);

/// In-memory CSV table. The header row is always written, even with no rows.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> row);

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
    std::size_t column(const std::string& name) const;

    std::string str() const;
    void write(const std::string& path) const;

    static CsvTable parse(const std::string& text);
    static CsvTable read(const std::string& path);

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Parses a cell written by format_number (accepts inf / nan).
double parse_number(const std::string& cell);

}  // namespace qcd::app
