#include "vicm/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vicm/errors.hpp"

namespace vicm {

int CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    std::size_t b = cell.find_first_not_of(" \t\r");
    std::size_t e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    table.rows.push_back(split_line(line));
  }
  return table;
}

namespace {

double parse_cell(const CsvTable& table, std::size_t row, int col,
                  const std::string& colname) {
  const auto& cells = table.rows[row];
  if (col >= static_cast<int>(cells.size()) || cells[col].empty())
    throw DataError("missing value at row " + std::to_string(row + 1) + ", column \"" +
                    colname + "\"");
  const std::string& s = cells[col];
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    throw DataError("non-numeric value \"" + s + "\" at row " + std::to_string(row + 1) +
                    ", column \"" + colname + "\"");
  return v;
}

}  // namespace

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  CsvTable table = read_csv(path);
  const int n = static_cast<int>(table.rows.size());
  if (n == 0) throw DataError("no data rows in " + path);

  auto require_col = [&](const std::string& name) {
    int c = table.column(name);
    if (c < 0) throw DataError("missing column \"" + name + "\" in " + path);
    return c;
  };

  int ycol = require_col(schema.response);
  std::vector<int> xcols, zcols;
  for (const auto& name : schema.x_cols) xcols.push_back(require_col(name));
  for (const auto& name : schema.z_cols) zcols.push_back(require_col(name));
  if (zcols.empty()) throw DataError("schema needs at least one z column");
  if (!schema.add_intercept && xcols.empty())
    throw DataError("schema needs x columns when add_intercept is off");

  const int d = static_cast<int>(xcols.size()) + (schema.add_intercept ? 1 : 0);
  Dataset data;
  data.y.resize(n);
  data.x.resize(n, d);
  data.z.resize(n, static_cast<int>(zcols.size()));

  for (int i = 0; i < n; ++i) {
    data.y[i] = parse_cell(table, i, ycol, schema.response);
    int xoff = 0;
    if (schema.add_intercept) {
      data.x(i, 0) = 1.0;
      xoff = 1;
    }
    for (std::size_t k = 0; k < xcols.size(); ++k)
      data.x(i, xoff + static_cast<int>(k)) =
          parse_cell(table, i, xcols[k], schema.x_cols[k]);
    for (std::size_t k = 0; k < zcols.size(); ++k)
      data.z(i, static_cast<int>(k)) = parse_cell(table, i, zcols[k], schema.z_cols[k]);
  }
  if (!schema.add_intercept) {
    for (int i = 0; i < n; ++i)
      if (data.x(i, 0) != 1.0)
        throw DataError("first x column must be identically 1 (or use add_intercept)");
  }

  if (schema.standardize_z) {
    data.z_means = data.z.colwise().mean();
    data.z_scales.resize(data.z.cols());
    for (int j = 0; j < data.z.cols(); ++j) {
      double var = (data.z.col(j).array() - data.z_means[j]).square().sum() /
                   std::max(1, n - 1);
      double sd = std::sqrt(var);
      if (!(sd > 0)) throw DataError("z column " + schema.z_cols[j] + " is constant");
      data.z_scales[j] = sd;
      data.z.col(j) = (data.z.col(j).array() - data.z_means[j]) / sd;
    }
    data.z_standardized = true;
  }
  data.validate();
  return data;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace vicm
