#pragma once

#include <string>
#include <vector>

namespace glarmix {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  // Index of a named column, -1 when absent.
  int col(const std::string& name) const;
  // 1-based file line of a data row (header is line 1), for error messages.
  static long line_of_row(size_t row) { return static_cast<long>(row) + 2; }
};

// Minimal comma-separated reader: no quoting, cells trimmed of spaces.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// 17 significant digits; round-trips doubles exactly.
std::string format_number(double x);

double parse_number(const std::string& cell, const std::string& context);

}  // namespace glarmix
