#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtec/cli/cli.hpp"

namespace harness {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(MTEC_SOURCE_DIR); }
inline fs::path toy_dir() { return source_dir() / "data" / "toy"; }
inline fs::path golden_dir() { return source_dir() / "tests" / "golden"; }

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

inline Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = mtec::cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtec_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Relative path -> contents for every regular file below `root`.
inline std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).generic_string(), slurp(e.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) cells.push_back(cell);
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

// Compares two CSV texts cell by cell: numeric cells within `tol`, any other
// cell byte-equal. Returns an empty string on a match, else the first
// difference.
inline std::string csv_diff(const std::string& actual, const std::string& expected, double tol) {
  std::istringstream a(actual), e(expected);
  std::string la, le;
  int line = 0;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool ge = static_cast<bool>(std::getline(e, le));
    ++line;
    if (!ga && !ge) return "";
    if (ga != ge) return "line count differs at line " + std::to_string(line);
    const auto ca = split(la, ','), ce = split(le, ',');
    if (ca.size() != ce.size()) return "column count differs at line " + std::to_string(line);
    for (std::size_t k = 0; k < ca.size(); ++k) {
      if (ca[k] == ce[k]) continue;
      // "median ± sd" summaries compare part by part.
      const std::string pm = " \u00b1 ";
      if (const auto pa = ca[k].find(pm), pe = ce[k].find(pm); pa != std::string::npos && pe != std::string::npos) {
        const std::string d = csv_diff(ca[k].substr(0, pa) + "," + ca[k].substr(pa + pm.size()),
                                       ce[k].substr(0, pe) + "," + ce[k].substr(pe + pm.size()), tol);
        if (d.empty()) continue;
        return "line " + std::to_string(line) + " cell " + std::to_string(k + 1) + ": '" + ca[k] + "' vs '" + ce[k] + "'";
      }
      char* end_a = nullptr;
      char* end_e = nullptr;
      const double va = std::strtod(ca[k].c_str(), &end_a);
      const double ve = std::strtod(ce[k].c_str(), &end_e);
      const bool numeric = !ca[k].empty() && !ce[k].empty() && *end_a == '\0' && *end_e == '\0';
      if (!numeric || std::abs(va - ve) > tol) {
        return "line " + std::to_string(line) + " cell " + std::to_string(k + 1) + ": '" + ca[k] + "' vs '" + ce[k] + "'";
      }
    }
  }
}

}  // namespace harness
