#include "mtec/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>

#include "mtec/error.hpp"

namespace mtec::csv {

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

Table parse(std::istream& in, const std::string& source_name) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError(source_name + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (!have_header) throw ValidationError(source_name + ": empty file");
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return parse(in, path.string());
}

std::string escape(const std::string& field) {
  const bool needs = field.find_first_of(",\"\n") != std::string::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_number(double value, int precision) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  std::string s(buf);
  // Collapse "-0.000" to "0.000" so sign noise does not leak into files.
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace mtec::csv
