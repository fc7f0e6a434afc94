#pragma once

// Field CSV (header row, then the node multi-index followed by values),
// JSON documents and JSON-lines traces.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "yamabe/errors.hpp"
#include "yamabe/grid.hpp"

namespace yamabe {

struct FieldTable {
  std::vector<std::string> header;
  std::vector<std::vector<int>> index;
  std::vector<double> values;  ///< first value column
};

using NamedField = std::pair<std::string, const ScalarField*>;

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  return out;
}

inline void write_field_csv(const std::filesystem::path& path, const GridManifold& grid,
                            const std::vector<NamedField>& columns) {
  auto out = open_output(path);
  for (int a = 0; a < grid.dim(); ++a) out << (a ? "," : "") << 'i' << a;
  for (const auto& [name, field] : columns) out << ',' << name;
  out << '\n';
  for (std::size_t p = 0; p < grid.size(); ++p) {
    for (int a = 0; a < grid.dim(); ++a) out << (a ? "," : "") << grid.axis_index(p, a);
    for (const auto& col : columns) out << ',' << (*col.second)[static_cast<Eigen::Index>(p)];
    out << '\n';
  }
}

/// Reads the layout written by write_field_csv; rows must be in node order
/// for the values to line up with a grid.
inline FieldTable read_field_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open field file '" + path.string() + "'");
  FieldTable t;
  std::string line;
  if (!std::getline(in, line)) throw SpecError("field file '" + path.string() + "' is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  int index_columns = 0;
  while (index_columns < static_cast<int>(t.header.size()) && t.header[static_cast<std::size_t>(index_columns)] ==
                                                                  "i" + std::to_string(index_columns)) {
    ++index_columns;
  }
  if (index_columns == static_cast<int>(t.header.size())) {
    throw SpecError("field file '" + path.string() + "' has no value column");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<int> idx;
    for (int a = 0; a < index_columns; ++a) {
      if (!std::getline(ss, cell, ',')) throw SpecError("field file '" + path.string() + "': short row");
      idx.push_back(std::stoi(cell));
    }
    if (!std::getline(ss, cell, ',')) throw SpecError("field file '" + path.string() + "': missing value");
    t.index.push_back(std::move(idx));
    t.values.push_back(std::stod(cell));
  }
  return t;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

template <class Range>
void write_jsonl(const std::filesystem::path& path, const Range& rows) {
  auto out = open_output(path);
  for (const auto& row : rows) out << nlohmann::json(row).dump() << '\n';
}

}  // namespace yamabe
