#include "lgqr/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lgqr/errors.hpp"

namespace lgqr {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}
}  // namespace

int Table::column_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const std::vector<double>& Table::column(const std::string& name) const {
  int idx = column_index(name);
  if (idx < 0) throw DataError("missing column: " + name);
  return data[static_cast<size_t>(idx)];
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file, header required");
  for (auto& name : split_line(line)) {
    if (name.empty()) throw DataError(path + ": empty column name in header");
    t.columns.push_back(name);
  }
  t.data.assign(t.columns.size(), {});

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != t.columns.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(t.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      double value = 0.0;
      auto res = std::from_chars(f.data(), f.data() + f.size(), value);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": column '" +
                        t.columns[c] + "': not a number: '" + f + "'");
      }
      t.data[c].push_back(value);
    }
  }
  return t;
}

void write_csv(const std::string& path, const Table& table) {
  if (table.columns.size() != table.data.size()) {
    throw DataError("write_csv: header/data shape mismatch");
  }
  size_t n = table.rows();
  for (const auto& col : table.data) {
    if (col.size() != n) throw DataError("write_csv: ragged columns");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (size_t c = 0; c < table.columns.size(); ++c) {
    out << (c ? "," : "") << table.columns[c];
  }
  out << "\n";
  char buf[40];
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = 0; c < table.data.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.data[c][r]);
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace lgqr
