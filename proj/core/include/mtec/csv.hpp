#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mtec::csv {

// A parsed CSV file: header plus rows of raw string cells. Supports
// double-quoted fields with "" escapes; no multi-line fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  // Index of a header column or -1.
  int column(const std::string& name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::istream& in, const std::string& source_name);

std::vector<std::string> split_line(const std::string& line);

// Quotes a field only when it contains a comma, quote or whitespace edge.
std::string escape(const std::string& field);

// Fixed-notation formatting used by every CSV writer so outputs are
// byte-stable for a given build.
std::string format_number(double value, int precision = 6);

}  // namespace mtec::csv
