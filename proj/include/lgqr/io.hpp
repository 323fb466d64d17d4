#pragma once

#include <string>
#include <vector>

namespace lgqr {

// Numeric column store. CSV dialect: comma separated, header row required,
// UTF-8, '.' decimal; every field must parse as a number (missing values are
// rejected, with the offending line reported).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // data[c][r]

  size_t rows() const { return data.empty() ? 0 : data[0].size(); }
  int column_index(const std::string& name) const;
  bool has_column(const std::string& name) const { return column_index(name) >= 0; }
  const std::vector<double>& column(const std::string& name) const;  // throws DataError
};

Table read_csv(const std::string& path);

// %.17g per value: round-trips doubles and prints integral values without a
// decimal point, keeping outputs byte-stable.
void write_csv(const std::string& path, const Table& table);

}  // namespace lgqr
