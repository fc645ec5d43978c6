#pragma once

#include <string>
#include <vector>

#include "vicm/model.hpp"

namespace vicm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// Comma-separated, one header row, '.' decimal point.
CsvTable read_csv(const std::string& path);

struct DatasetSchema {
  std::string response;
  std::vector<std::string> x_cols;  // excluding the intercept
  std::vector<std::string> z_cols;
  bool add_intercept = true;
  bool standardize_z = false;
};

// Errors name the offending column and 1-based data row.
Dataset load_dataset(const std::string& path, const DatasetSchema& schema);

// %.17g formatting so written values reload exactly.
std::string format_double(double v);

}  // namespace vicm
