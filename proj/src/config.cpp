#include "vicm/config.hpp"

#include <fstream>
#include <sstream>

#include "vicm/errors.hpp"

namespace vicm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw DataError("config: bad boolean value \"" + v + "\"");
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& section, const std::string& key,
                       const std::string& value) {
  auto unknown = [&]() -> void {
    throw DataError("config: unknown key \"" + key + "\" in section [" + section + "]");
  };
  try {
    if (section == "model") {
      if (key == "response") cfg.schema.response = value;
      else if (key == "x_cols") cfg.schema.x_cols = split_list(value);
      else if (key == "z_cols") cfg.schema.z_cols = split_list(value);
      else if (key == "add_intercept") cfg.schema.add_intercept = parse_bool(value);
      else if (key == "standardize_z") cfg.schema.standardize_z = parse_bool(value);
      else unknown();
    } else if (section == "fit") {
      if (key == "tau") cfg.tau = std::stod(value);
      else if (key == "bandwidth") cfg.fit.bandwidth = std::stod(value);
      else if (key == "order") cfg.fit.spline_order = std::stoi(value);
      else if (key == "knots") cfg.fit.interior_knots = std::stoi(value);
      else if (key == "placement") {
        if (value == "uniform") cfg.fit.placement = KnotPlacement::uniform;
        else if (value == "sample_quantiles") cfg.fit.placement = KnotPlacement::sample_quantiles;
        else throw DataError("config: bad placement \"" + value + "\"");
      } else if (key == "margin") cfg.fit.rescale_margin = std::stod(value);
      else if (key == "max_outer") cfg.fit.max_outer = std::stoi(value);
      else if (key == "max_inner") cfg.fit.max_inner = std::stoi(value);
      else if (key == "step_halving_max") cfg.fit.step_halving_max = std::stoi(value);
      else if (key == "tol_outer") cfg.fit.tol_outer = std::stod(value);
      else if (key == "tol_inner") cfg.fit.tol_inner = std::stod(value);
      else if (key == "ridge") cfg.fit.ridge = std::stod(value);
      else if (key == "multistart") cfg.fit.multistart = std::stoi(value);
      else if (key == "seed") cfg.fit.seed = std::stoull(value);
      else unknown();
    } else if (section == "penalty") {
      if (key == "alpha1") cfg.alpha1 = std::stod(value);
      else if (key == "alpha2") cfg.alpha2 = std::stod(value);
      else if (key == "a") { cfg.penalty1.a = std::stod(value); cfg.penalty2.a = cfg.penalty1.a; }
      else if (key == "kappa") { cfg.penalty1.kappa = std::stod(value); cfg.penalty2.kappa = cfg.penalty1.kappa; }
      else if (key == "zero_threshold") cfg.penalty1.zero_threshold = std::stod(value);
      else if (key == "linearity_threshold") cfg.linearity_threshold = std::stod(value);
      else unknown();
    } else if (section == "tuning") {
      if (key == "alpha1_grid") cfg.alpha1_grid = split_doubles(value);
      else if (key == "alpha2_grid") cfg.alpha2_grid = split_doubles(value);
      else if (key == "delta_grid") cfg.delta_grid = split_doubles(value);
      else if (key == "cv_bandwidth") cfg.tune_bandwidth = parse_bool(value);
      else unknown();
    } else if (section == "simulate") {
      if (key == "example") cfg.sim.example = std::stoi(value);
      else if (key == "n") cfg.sim.n = std::stoi(value);
      else if (key == "pn") cfg.sim.pn = std::stoi(value);
      else if (key == "tau") cfg.sim.tau = std::stod(value);
      else if (key == "error") cfg.sim.error = error_law_from_string(value);
      else if (key == "sigma") cfg.sim.sigma = std::stod(value);
      else if (key == "replications") cfg.sim.replications = std::stoi(value);
      else if (key == "seed") cfg.sim.seed = std::stoull(value);
      else if (key == "pipeline") cfg.sim_pipeline = value;
      else unknown();
    } else if (section == "io") {
      if (key == "data") cfg.data_path = value;
      else if (key == "out") cfg.out_dir = value;
      else if (key == "threads") cfg.threads = std::stoi(value);
      else if (key == "curve_grid") cfg.curve_grid = std::stoi(value);
      else unknown();
    } else {
      throw DataError("config: unknown section [" + section + "]");
    }
  } catch (const std::invalid_argument&) {
    throw DataError("config: bad value \"" + value + "\" for key \"" + key + "\"");
  } catch (const std::out_of_range&) {
    throw DataError("config: value out of range for key \"" + key + "\"");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw DataError("config: malformed section header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config: expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw DataError("config: key \"" + key + "\" outside any section");
    apply_config_line(cfg, section, key, value);
  }
  return cfg;
}

}  // namespace vicm
