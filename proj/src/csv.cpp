#include "msplit/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "msplit/errors.hpp"

namespace msplit {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

double parse_number(const std::string& field, std::size_t line_no, std::size_t col) {
    const std::string t = unquote(trim(field));
    if (t.empty() || t == "NA" || t == "NaN" || t == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (*begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError("cannot parse '" + t + "' as a number at line " + std::to_string(line_no)
                              + ", column " + std::to_string(col));
    }
    return v;
}

} // namespace

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cur.push_back(c);
        } else if (c == delimiter && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path + "'");
    return ss.str();
}

Table parse_table(const std::string& text, const CsvOptions& options) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = options.header;
    Table table;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || (options.comment != '\0' && line.front() == options.comment)) continue;
        const auto fields = split_fields(line, options.delimiter);
        if (header_pending) {
            for (const auto& f : fields) table.header.push_back(unquote(trim(f)));
            width = fields.size();
            header_pending = false;
            continue;
        }
        if (width == 0) width = fields.size();
        if (fields.size() != width) {
            throw ValidationError("table is not rectangular: line " + std::to_string(line_no) + " has "
                                  + std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
        }
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) row[c] = parse_number(fields[c], line_no, c + 1);
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return table;
}

Table read_table(const std::string& path, const CsvOptions& options) {
    return parse_table(read_file(path), options);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace msplit
