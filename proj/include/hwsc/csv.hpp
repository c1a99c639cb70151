#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hwsc::csv {

/// A parsed CSV table. Rows keep their 1-based line numbers for diagnostics.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Index of a named column, or -1.
  int column(std::string_view name) const;
  /// Index of a named column; throws ParseError when absent.
  std::size_t require_column(std::string_view name) const;
};

/// Comma-separated, header required, no quoting. Blank lines are skipped.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

double parse_double(std::string_view field, std::size_t line);
long long parse_int(std::string_view field, std::size_t line);

/// Shortest round-trip representation of a double.
std::string format_double(double x);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace hwsc::csv
