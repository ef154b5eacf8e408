#include "drscore/table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace drscore {

namespace {

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  s = s.substr(b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(strip(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Index Table::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<Index>(j);
  throw InputError("column '" + name + "' not found");
}

Table parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  Table t;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    t.names = split(line);
    break;
  }
  if (t.names.empty()) throw InputError("missing header row");
  if (lineno == 1 && !t.names.front().empty() && t.names.front().rfind("\xEF\xBB\xBF", 0) == 0)
    t.names.front() = t.names.front().substr(3);
  for (std::size_t j = 0; j < t.names.size(); ++j) {
    if (t.names[j].empty()) throw InputError("empty column name in header");
    for (std::size_t k = 0; k < j; ++k)
      if (t.names[k] == t.names[j]) throw InputError("duplicate column '" + t.names[j] + "'");
  }

  std::vector<std::vector<Scalar>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != t.names.size())
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.names.size()) +
                       " fields, found " + std::to_string(cells.size()));
    std::vector<Scalar> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      const char* end = c.data() + c.size();
      auto [ptr, ec] = std::from_chars(c.data(), end, row[j]);
      if (c.empty() || ec != std::errc() || ptr != end || !std::isfinite(row[j]))
        throw InputError("line " + std::to_string(lineno) + ", column '" + t.names[j] + "': not a finite number");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("no data rows");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace drscore
