#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace relrec {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  bool has_column(const std::string& name) const { return column(name) >= 0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// Comma-separated table with a mandatory header row. Unquoted fields only,
// which covers the normalized formats this tool defines.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    auto fields = detail::split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(t.header.size()) + " fields, found " +
                               std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw std::runtime_error(path + ": missing header row");
  return t;
}

inline double csv_number(const CsvTable& t, std::size_t row, int col) {
  const std::string& s = t.rows[row][static_cast<std::size_t>(col)];
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(t.path + ":" + std::to_string(t.line_numbers[row]) +
                             ": cannot parse number '" + s + "'");
  }
}

inline long long csv_integer(const CsvTable& t, std::size_t row, int col) {
  const double v = csv_number(t, row, col);
  const auto i = static_cast<long long>(v);
  if (static_cast<double>(i) != v)
    throw std::runtime_error(t.path + ":" + std::to_string(t.line_numbers[row]) +
                             ": expected an integer, found '" +
                             t.rows[row][static_cast<std::size_t>(col)] + "'");
  return i;
}

// Floating output everywhere uses 6 significant digits.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace relrec
