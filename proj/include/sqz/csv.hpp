#pragma once
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sqz/errors.hpp"

// CSV with a header row and double-valued columns. Values round-trip exactly
// (%.17g out, from_chars back), and writes go through a temp file renamed
// into place so readers never see a partial file.

namespace sqz {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv_columns(const std::string& path, const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& columns) {
  if (names.size() != columns.size()) throw data_error("csv: column name/data count mismatch");
  const size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != rows) throw data_error("csv: ragged columns");

  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("csv: cannot open for writing: " + tmp.string());
    for (size_t j = 0; j < names.size(); ++j) {
      if (j) out << ',';
      out << names[j];
    }
    out << '\n';
    for (size_t i = 0; i < rows; ++i) {
      for (size_t j = 0; j < columns.size(); ++j) {
        if (j) out << ',';
        out << format_double(columns[j][i]);
      }
      out << '\n';
    }
    out.flush();
    if (!out) throw data_error("csv: write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw data_error("csv: rename failed: " + target.string() + ": " + ec.message());
}

struct CsvTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return columns[i];
    throw data_error("csv: no column named '" + name + "'");
  }
  size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("csv: cannot open: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw data_error("csv: empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    t.names.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  t.columns.resize(t.names.size());

  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t pos = 0;
    for (size_t j = 0; j < t.names.size(); ++j) {
      const size_t comma = line.find(',', pos);
      const bool last_field = j + 1 == t.names.size();
      if (!last_field && comma == std::string::npos)
        throw data_error("csv: " + path + ":" + std::to_string(lineno) + ": too few fields");
      if (last_field && comma != std::string::npos)
        throw data_error("csv: " + path + ":" + std::to_string(lineno) + ": too many fields");
      const size_t end = comma == std::string::npos ? line.size() : comma;
      double v = 0;
      const char* first = line.data() + pos;
      const char* last = line.data() + end;
      const auto [ptr, err] = std::from_chars(first, last, v);
      if (err != std::errc{} || ptr != last)
        throw data_error("csv: " + path + ":" + std::to_string(lineno) + ": bad number '" +
                         line.substr(pos, end - pos) + "'");
      t.columns[j].push_back(v);
      pos = end + 1;
    }
  }
  return t;
}

}  // namespace sqz
