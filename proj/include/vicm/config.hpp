#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vicm/csv.hpp"
#include "vicm/estimator.hpp"
#include "vicm/simlab.hpp"
#include "vicm/sparsity.hpp"

namespace vicm {

// Everything a batch run needs, parsed from an ini-style key=value file
// with [model], [fit], [penalty], [tuning], [simulate] and [io] sections.
// Unknown keys are rejected.
struct RunConfig {
  DatasetSchema schema;
  FitConfig fit;
  double tau = 0.5;

  ScadPenalty penalty1;  // loading selection
  ScadPenalty penalty2;  // linearity identification
  double alpha1 = -1.0;  // negative: choose by MSIC
  double alpha2 = -1.0;
  double linearity_threshold = -1.0;

  std::vector<double> alpha1_grid;
  std::vector<double> alpha2_grid;
  std::vector<double> delta_grid;
  bool tune_bandwidth = false;

  SimDesign sim;
  std::string sim_pipeline = "select+identify";

  std::string data_path;
  std::string out_dir;
  int threads = 0;  // 0: use VICM_THREADS or 1
  int curve_grid = 100;
};

RunConfig parse_config_file(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& section,
                       const std::string& key, const std::string& value);

}  // namespace vicm
