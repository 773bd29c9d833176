#include "lockin/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "lockin/error.hpp"

namespace lockin {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv_header(std::ostream& os, std::initializer_list<std::string_view> names) {
  bool first = true;
  for (auto n : names) {
    if (!first) os << ',';
    os << n;
    first = false;
  }
  os << '\n';
}

void write_csv_row(std::ostream& os, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) os << ',';
    os << fmt17(v);
    first = false;
  }
  os << '\n';
}

std::vector<std::vector<double>> read_csv_rows(std::istream& is,
                                               std::initializer_list<std::string_view> names) {
  std::string line;
  std::string expected;
  for (auto n : names) {
    if (!expected.empty()) expected += ',';
    expected += n;
  }
  if (!std::getline(is, line) || line != expected) {
    throw Error(ErrorKind::ConfigInvalid, "expected CSV header '" + expected + "'");
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(names.size());
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) break;
      row.push_back(v);
      p = end;
      if (*p != ',') break;
      ++p;
    }
    if (*p != '\0' || row.size() != names.size()) {
      throw Error(ErrorKind::ConfigInvalid, "malformed CSV row " + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lockin
