#pragma once

#include "drscore/core.hpp"

#include <string>
#include <vector>

namespace drscore {

/// Numeric table read from CSV with a header row.
struct Table {
  std::vector<std::string> names;
  Matrix values;

  /// Column position; throws InputError naming the column when absent.
  Index index_of(const std::string& name) const;
  Vector column(const std::string& name) const { return values.col(index_of(name)); }
};

/// Comma-separated, '.' decimal, one header row. Blank lines are skipped.
Table parse_csv(const std::string& text);
Table read_csv(const std::string& path);

}  // namespace drscore
