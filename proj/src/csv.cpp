#include "onset/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace onset::csv {

std::string format(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

Writer::Writer(std::ostream& out, std::vector<std::string> header)
    : out_(out), width_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
}

void Writer::row(std::span<const double> values) {
    if (values.size() != width_)
        throw InvalidArgument("csv row has " + std::to_string(values.size()) + " fields, header has " +
                              std::to_string(width_));
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format(values[i]);
    out_ << '\n';
}

bool Table::has(const std::string& name) const {
    for (const auto& h : header)
        if (h == name) return true;
    return false;
}

const std::vector<double>& Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return columns[i];
    throw InvalidArgument("csv: missing column '" + name + "'");
}

namespace {
std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    return out;
}

double parse(const std::string& s, std::size_t line) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InvalidArgument("csv: bad number '" + s + "' on line " + std::to_string(line));
    return v;
}
}  // namespace

Table read(std::istream& in) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            t.columns.resize(t.header.size());
            continue;
        }
        if (fields.size() != t.header.size())
            throw InvalidArgument("csv: line " + std::to_string(lineno) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(t.header.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) t.columns[i].push_back(parse(fields[i], lineno));
    }
    if (t.header.empty()) throw InvalidArgument("csv: no header line");
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read(in);
}

}  // namespace onset::csv
