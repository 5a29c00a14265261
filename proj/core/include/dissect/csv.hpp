#pragma once

#include "dissect/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace dissect {

/// RFC-4180 style table: header row plus string cells, LF line endings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  /// Every cell parsed as a number; throws Error("invalid-csv") otherwise.
  Matrix numeric() const;
  Vector numeric_column(const std::string& name) const;
};

/// Shortest form that round-trips ("%.17g").
std::string format_number(double v);

CsvTable parse_csv(std::string_view text);
std::string to_csv(const CsvTable& table);

/// Numeric table with the given header.
CsvTable numeric_table(const std::vector<std::string>& header, const Matrix& values);

/// Writes to a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace dissect
