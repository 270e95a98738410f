#pragma once

#include <string>
#include <vector>

#include "msplit/core.hpp"

namespace msplit {

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
    // Lines starting with this character are skipped (manifest stamps).
    char comment = '#';
};

/// Numeric table from a delimited text file. Empty fields and NA parse to NaN
/// so validation can report their position. Throws IoError when the file
/// cannot be read, ValidationError for ragged rows or unparsable fields.
Table read_table(const std::string& path, const CsvOptions& options = {});
Table parse_table(const std::string& text, const CsvOptions& options = {});

/// 17 significant digits, so values round-trip exactly.
std::string format_double(double v);

std::vector<std::string> split_fields(const std::string& line, char delimiter);

/// Reads a whole file; throws IoError.
std::string read_file(const std::string& path);

} // namespace msplit
