#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "onset/units.hpp"

namespace onset::csv {

/// Shortest round-trip decimal form of x ("nan", "inf", "-inf" for non-finite).
std::string format(double x);

/// Comma-separated writer with a fixed header. Rows must match the header width.
class Writer {
public:
    Writer(std::ostream& out, std::vector<std::string> header);
    void row(std::span<const double> values);
    void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }

private:
    std::ostream& out_;
    std::size_t width_;
};

/// Column-major numeric table read from CSV with a header line.
/// Lines starting with '#' are skipped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    bool has(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

}  // namespace onset::csv
