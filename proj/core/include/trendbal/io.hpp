#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace trendbal::io {

using CsvRow = std::vector<std::string>;

/// Reads a comma-separated table. Double-quoted fields may contain commas
/// and doubled quotes; blank lines are skipped; surrounding whitespace of
/// unquoted fields is trimmed.
std::vector<CsvRow> read_csv(std::istream& in);
std::vector<CsvRow> read_csv_file(const std::string& path);

/// Parses a 64-bit decimal. Throws ParseError naming `context` on failure.
double parse_double(std::string_view text, std::string_view context);

/// `%.12g`, the fixed output precision of every emitted number.
std::string format_number(double value);

/// Rounds to 12 significant digits so serializers print the same digits.
double round12(double value);

void write_csv_row(std::ostream& out, const CsvRow& row);

/// Orders labels numerically when every label parses as a number, else
/// lexicographically.
void sort_labels(std::vector<std::string>& labels);

}  // namespace trendbal::io
