#include "vicm/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "vicm/config.hpp"
#include "vicm/errors.hpp"
#include "vicm/inference.hpp"
#include "vicm/tuning.hpp"

namespace vicm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return {};
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

json fit_json(const VicmFit& fit, const Dataset& data, const CovarianceReport* cov,
              const DatasetSchema* schema) {
  json j;
  j["tau"] = fit.tau;
  j["bandwidth"] = fit.bandwidth;
  j["converged"] = fit.converged;
  switch (fit.stop) {
    case StopReason::step_tolerance: j["stop"] = "step_tolerance"; break;
    case StopReason::no_improving_step: j["stop"] = "no_improving_step"; break;
    case StopReason::max_outer: j["stop"] = "max_outer"; break;
    case StopReason::no_free_loadings: j["stop"] = "no_free_loadings"; break;
  }
  j["objective"] = fit.objective;
  j["n"] = data.n();
  j["d"] = data.d();
  j["p"] = data.p();
  j["basis"] = {{"order", fit.basis.order()},
                {"interior_knots", fit.basis.interior_knot_count()},
                {"knots", fit.basis.knots()}};
  json rescalers = json::array();
  for (const auto& r : fit.rescalers) rescalers.push_back({{"lo", r.lo()}, {"hi", r.hi()}});
  j["rescalers"] = rescalers;
  j["loadings"] = matrix_json(fit.loadings.beta);
  j["lambda"] = matrix_json(fit.coeffs.lambda);
  if (cov) j["asd"] = vector_json(cov->asd_full);
  if (fit.has_mask()) {
    json mask = json::array();
    for (int l = 0; l < fit.support.rows(); ++l) {
      json row = json::array();
      for (int c = 0; c < fit.support.cols(); ++c) row.push_back(static_cast<bool>(fit.support(l, c)));
      mask.push_back(row);
    }
    j["support"] = mask;
  }
  json trace = json::array();
  for (const auto& t : fit.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"objective", t.objective},
                     {"step_norm", t.step_norm}});
  j["trace"] = trace;
  if (schema) {
    j["schema"] = {{"response", schema->response},
                   {"x_cols", schema->x_cols},
                   {"z_cols", schema->z_cols},
                   {"add_intercept", schema->add_intercept},
                   {"standardize_z", schema->standardize_z}};
  }
  if (data.z_standardized) {
    j["z_standardized"] = true;
    j["z_means"] = vector_json(data.z_means);
    j["z_scales"] = vector_json(data.z_scales);
    // direction in the original z units: beta_j / scale_j, renormalized
    Eigen::MatrixXd orig = fit.loadings.beta;
    for (int l = 0; l < orig.rows(); ++l) {
      for (int c = 0; c < orig.cols(); ++c) orig(l, c) /= data.z_scales[c];
      double nrm = orig.row(l).norm();
      if (nrm > 0) orig.row(l) /= nrm;
    }
    j["loadings_original_scale"] = matrix_json(orig);
  }
  return j;
}

void emit_coeffs_csv(const fs::path& dir, const SplineCoeffs& coeffs) {
  std::string text = "component,s,lambda\n";
  for (int l = 0; l < coeffs.d(); ++l)
    for (int s = 0; s < coeffs.dim(); ++s)
      text += std::to_string(l + 1) + "," + std::to_string(s + 1) + "," +
              format_double(coeffs.lambda(l, s)) + "\n";
  write_text(dir / "coeffs.csv", text);
}

void emit_curves_csv(const fs::path& dir, const Dataset& data, const VicmFit& fit,
                     const SplineCoeffs& coeffs, double tau, int grid_points) {
  VicmFit plot = fit;
  plot.coeffs = coeffs;
  Bandwidth bw(fit.bandwidth);
  std::string text = "component,u,m_hat,se,lo,hi\n";
  for (int l = 0; l < fit.loadings.d(); ++l) {
    std::vector<double> grid(grid_points);
    double lo = fit.rescalers[l].lo(), hi = fit.rescalers[l].hi();
    for (int g = 0; g < grid_points; ++g)
      grid[g] = lo + (hi - lo) * g / (grid_points - 1.0);
    auto bands = curve_bands(data, plot, tau, bw, l, grid);
    for (const auto& b : bands)
      text += std::to_string(l + 1) + "," + format_double(b.u) + "," +
              format_double(b.m_hat) + "," + format_double(b.se) + "," +
              format_double(b.lo) + "," + format_double(b.hi) + "\n";
  }
  write_text(dir / "curves.csv", text);
}

struct CliOptions {
  std::string config_path;
  std::string data_path;
  std::string out_dir = ".";
  std::string model_path;
  double tau = -1.0;
  double alpha1 = -2.0;  // -2: unset, -1: MSIC
  double alpha2 = -2.0;
  double bandwidth = -1.0;
  double sigma = -1.0;
  int knots = -2;
  int threads = -1;
  int replications = -1;
  int example = -1;
  int n = -1;
  int pn = -1;
  long long seed = -1;
  std::string error_law;
  std::string pipeline;
};

RunConfig merge_options(const CliOptions& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg = parse_config_file(opt.config_path);
  if (!opt.data_path.empty()) cfg.data_path = opt.data_path;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.tau >= 0) { cfg.tau = opt.tau; cfg.sim.tau = opt.tau; }
  if (opt.alpha1 > -2) cfg.alpha1 = opt.alpha1;
  if (opt.alpha2 > -2) cfg.alpha2 = opt.alpha2;
  if (opt.bandwidth >= 0) cfg.fit.bandwidth = opt.bandwidth;
  if (opt.knots >= -1) cfg.fit.interior_knots = opt.knots;
  if (opt.threads >= 0) cfg.threads = opt.threads;
  if (opt.replications > 0) cfg.sim.replications = opt.replications;
  if (opt.example > 0) cfg.sim.example = opt.example;
  if (opt.n > 0) cfg.sim.n = opt.n;
  if (opt.pn > 0) cfg.sim.pn = opt.pn;
  if (opt.sigma >= 0) cfg.sim.sigma = opt.sigma;
  if (opt.seed >= 0) {
    cfg.fit.seed = static_cast<std::uint64_t>(opt.seed);
    cfg.sim.seed = static_cast<std::uint64_t>(opt.seed);
  }
  if (!opt.error_law.empty()) cfg.sim.error = error_law_from_string(opt.error_law);
  if (!opt.pipeline.empty()) cfg.sim_pipeline = opt.pipeline;
  if (cfg.out_dir.empty()) cfg.out_dir = ".";
  return cfg;
}

int resolve_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("VICM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

Dataset load_configured_dataset(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw DataError("no input data file (use --data or [io] data)");
  if (cfg.schema.response.empty()) throw DataError("no dataset schema ([model] section)");
  return load_dataset(cfg.data_path, cfg.schema);
}

struct PipelineOutput {
  VicmFit unpenalized;
  VicmFit sparse;      // valid when selection ran
  bool has_sparse = false;
  double alpha1 = 0.0;
  std::vector<MsicRow> alpha1_table;
  StructureReport structure;
  bool has_structure = false;
  double alpha2 = 0.0;
  std::vector<MsicRow> alpha2_table;
};

PipelineOutput run_pipeline(const Dataset& data, const RunConfig& cfg, bool want_select,
                            bool want_identify) {
  PipelineOutput out{fit(data, cfg.tau, cfg.fit), VicmFit{}, false, 0.0, {},
                     StructureReport{}, false, 0.0, {}};
  if (!want_select) return out;

  ScadPenalty pen1 = cfg.penalty1;
  if (cfg.alpha1 >= 0) {
    pen1.alpha = cfg.alpha1;
    out.sparse = select_loadings(data, cfg.tau, pen1, cfg.fit, out.unpenalized);
    out.alpha1 = cfg.alpha1;
  } else {
    auto grid = cfg.alpha1_grid.empty() ? default_alpha1_grid() : cfg.alpha1_grid;
    Alpha1Result res = msic_alpha1(data, cfg.tau, cfg.fit, pen1, grid, out.unpenalized);
    out.sparse = res.best_fit;
    out.alpha1 = res.alpha_star;
    out.alpha1_table = res.table;
  }
  out.has_sparse = true;
  if (!want_identify) return out;

  ScadPenalty pen2 = cfg.penalty2;
  if (cfg.alpha2 >= 0) {
    pen2.alpha = cfg.alpha2;
    out.structure = identify_linear(data, cfg.tau, pen2, out.sparse, cfg.linearity_threshold);
    out.alpha2 = cfg.alpha2;
  } else {
    auto grid = cfg.alpha2_grid.empty() ? default_alpha2_grid() : cfg.alpha2_grid;
    Alpha2Result res = msic_alpha2(data, cfg.tau, cfg.fit, pen2, grid, out.sparse,
                                   cfg.linearity_threshold);
    out.structure = res.best_report;
    out.alpha2 = res.alpha_star;
    out.alpha2_table = res.table;
  }
  out.has_structure = true;
  return out;
}

json msic_table_json(const std::vector<MsicRow>& table) {
  json arr = json::array();
  for (const auto& row : table)
    arr.push_back({{"alpha", row.alpha},
                   {"msic", row.valid ? json(row.msic) : json()},
                   {"df", row.df},
                   {"valid", row.valid}});
  return arr;
}

int cmd_fit(const RunConfig& cfg) {
  Dataset data = load_configured_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  VicmFit f = fit(data, cfg.tau, cfg.fit);
  Bandwidth bw(f.bandwidth);
  CovarianceReport cov = cov_loadings(data, f, cfg.tau, bw);
  write_text(fs::path(cfg.out_dir) / "fit.json", fit_json(f, data, &cov, &cfg.schema).dump(2) + "\n");
  emit_coeffs_csv(cfg.out_dir, f.coeffs);
  emit_curves_csv(cfg.out_dir, data, f, f.coeffs, cfg.tau, cfg.curve_grid);
  return 0;
}

int cmd_select(const RunConfig& cfg, bool identify) {
  Dataset data = load_configured_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  PipelineOutput out = run_pipeline(data, cfg, true, identify);

  Bandwidth bw(out.unpenalized.bandwidth);
  CovarianceReport ucov = cov_loadings(data, out.unpenalized, cfg.tau, bw);
  write_text(fs::path(cfg.out_dir) / "fit.json",
             fit_json(out.unpenalized, data, &ucov, &cfg.schema).dump(2) + "\n");

  // penalized sandwich with the MM curvature at the selected fit
  const int d = data.d(), p = data.p();
  Eigen::VectorXd pen_diag = Eigen::VectorXd::Zero(d * (p - 1));
  ScadPenalty pen1 = cfg.penalty1;
  pen1.alpha = out.alpha1;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p - 1; ++j) {
      double mag = std::abs(out.sparse.reduced.beta_m1(l, j));
      if (pen1.alpha > 0)
        pen_diag[l * (p - 1) + j] = scad_deriv(pen1, mag) / (pen1.kappa + mag);
    }
  CovarianceReport pcov = cov_loadings(data, out.sparse, cfg.tau, bw, &pen_diag);

  json sel;
  sel["alpha1"] = out.alpha1;
  sel["loadings"] = matrix_json(out.sparse.loadings.beta);
  sel["asd"] = vector_json(pcov.asd_full);
  json mask = json::array();
  for (int l = 0; l < d; ++l) {
    json row = json::array();
    for (int c = 0; c < p; ++c) row.push_back(static_cast<bool>(out.sparse.support(l, c)));
    mask.push_back(row);
  }
  sel["support"] = mask;
  sel["msic_table"] = msic_table_json(out.alpha1_table);
  sel["objective"] = out.sparse.objective;
  write_text(fs::path(cfg.out_dir) / "selection.json", sel.dump(2) + "\n");

  const SplineCoeffs& plot_coeffs = identify ? out.structure.refit : out.sparse.coeffs;
  VicmFit plot_fit = out.sparse;
  emit_coeffs_csv(cfg.out_dir, plot_coeffs);
  emit_curves_csv(cfg.out_dir, data, plot_fit, plot_coeffs, cfg.tau, cfg.curve_grid);

  if (identify) {
    json st;
    st["alpha2"] = out.alpha2;
    st["d_norms"] = vector_json(out.structure.d_norms);
    st["threshold"] = out.structure.threshold;
    json flags = json::array();
    for (bool b : out.structure.is_linear) flags.push_back(b);
    st["is_linear"] = flags;
    json lines = json::array();
    for (std::size_t l = 0; l < out.structure.linear_coeffs.size(); ++l) {
      if (out.structure.is_linear[l])
        lines.push_back({{"component", l + 1},
                         {"intercept", out.structure.linear_coeffs[l].first},
                         {"slope", out.structure.linear_coeffs[l].second}});
    }
    st["linear_components"] = lines;
    st["msic_table"] = msic_table_json(out.alpha2_table);
    st["converged"] = out.structure.converged;
    st["objective"] = out.structure.objective;
    write_text(fs::path(cfg.out_dir) / "structure.json", st.dump(2) + "\n");
  }
  return 0;
}

int cmd_tune(const RunConfig& cfg) {
  Dataset data = load_configured_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  std::string text = "kind,param,score,df,selected\n";

  if (cfg.tune_bandwidth) {
    BandwidthCvResult bwres = cv_bandwidth(data, cfg.tau, cfg.fit, cfg.delta_grid);
    for (const auto& row : bwres.table)
      text += "bandwidth," + format_double(row.h) + "," +
              (row.valid ? format_double(row.pe) : "nan") + ",," +
              (row.valid && row.h == bwres.h_star ? "1" : "0") + "\n";
  }

  VicmFit base = fit(data, cfg.tau, cfg.fit);
  auto grid1 = cfg.alpha1_grid.empty() ? default_alpha1_grid() : cfg.alpha1_grid;
  Alpha1Result a1 = msic_alpha1(data, cfg.tau, cfg.fit, cfg.penalty1, grid1, base);
  for (const auto& row : a1.table)
    text += "alpha1," + format_double(row.alpha) + "," +
            (row.valid ? format_double(row.msic) : "nan") + "," + std::to_string(row.df) +
            "," + (row.valid && row.alpha == a1.alpha_star ? "1" : "0") + "\n";

  auto grid2 = cfg.alpha2_grid.empty() ? default_alpha2_grid() : cfg.alpha2_grid;
  Alpha2Result a2 = msic_alpha2(data, cfg.tau, cfg.fit, cfg.penalty2, grid2, a1.best_fit,
                                cfg.linearity_threshold);
  for (const auto& row : a2.table)
    text += "alpha2," + format_double(row.alpha) + "," +
            (row.valid ? format_double(row.msic) : "nan") + "," + std::to_string(row.df) +
            "," + (row.valid && row.alpha == a2.alpha_star ? "1" : "0") + "\n";

  write_text(fs::path(cfg.out_dir) / "tuning.csv", text);
  return 0;
}

void emit_sim_outputs(const fs::path& dir, const SimulationReport& rep) {
  std::string csv = "rep,quantity,i,j,value\n";
  auto add_matrix = [&](int r, const std::string& name, const Eigen::MatrixXd& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        csv += std::to_string(r + 1) + "," + name + "," + std::to_string(i + 1) + "," +
               std::to_string(j + 1) + "," + format_double(m(i, j)) + "\n";
  };
  auto add_vector = [&](int r, const std::string& name, const Eigen::VectorXd& v) {
    for (int i = 0; i < v.size(); ++i)
      csv += std::to_string(r + 1) + "," + name + "," + std::to_string(i + 1) + ",," +
             format_double(v[i]) + "\n";
  };
  auto add_scalar = [&](int r, const std::string& name, double v) {
    csv += std::to_string(r + 1) + "," + name + ",,," + format_double(v) + "\n";
  };

  for (std::size_t r = 0; r < rep.reps.size(); ++r) {
    const RepRecord& rec = rep.reps[r];
    if (!rec.ok) {
      add_scalar(static_cast<int>(r), "failed", 1.0);
      continue;
    }
    add_matrix(static_cast<int>(r), "beta_hat", rec.beta_hat);
    add_matrix(static_cast<int>(r), "asd", rec.asd);
    add_vector(static_cast<int>(r), "rase", rec.rase);
    if (rep.pipeline != Pipeline::fit_only) {
      add_matrix(static_cast<int>(r), "beta_pen", rec.beta_pen);
      add_matrix(static_cast<int>(r), "beta_oracle", rec.beta_oracle);
      add_scalar(static_cast<int>(r), "alpha1", rec.alpha1);
      add_scalar(static_cast<int>(r), "correct_zeros", rec.correct_zeros);
      add_scalar(static_cast<int>(r), "incorrect_zeros", rec.incorrect_zeros);
      add_scalar(static_cast<int>(r), "correctly_fit", rec.correctly_fit ? 1.0 : 0.0);
      add_scalar(static_cast<int>(r), "mse_u", rec.mse_u);
      add_scalar(static_cast<int>(r), "mse_p", rec.mse_p);
      add_scalar(static_cast<int>(r), "mse_o", rec.mse_o);
    }
    if (rep.pipeline == Pipeline::select_identify) {
      add_scalar(static_cast<int>(r), "alpha2", rec.alpha2);
      for (std::size_t l = 0; l < rec.linear_flags.size(); ++l)
        csv += std::to_string(r + 1) + ",linear_flag," + std::to_string(l + 1) + ",," +
               (rec.linear_flags[l] ? "1" : "0") + "\n";
      add_vector(static_cast<int>(r), "rase_pen", rec.rase_pen);
    }
  }
  write_text(dir / "simreport.csv", csv);

  json j;
  j["design"] = {{"example", rep.design.example},
                 {"n", rep.design.n},
                 {"pn", rep.design.resolved_pn()},
                 {"tau", rep.design.tau},
                 {"error", to_string(rep.design.error.kind)},
                 {"sigma", rep.design.resolved_sigma()},
                 {"replications", rep.design.replications},
                 {"seed", rep.design.seed}};
  switch (rep.pipeline) {
    case Pipeline::fit_only: j["pipeline"] = "fit_only"; break;
    case Pipeline::select: j["pipeline"] = "select"; break;
    case Pipeline::select_identify: j["pipeline"] = "select+identify"; break;
  }
  j["failures"] = rep.failures;
  j["unreliable"] = rep.unreliable;
  json reasons = json::array();
  for (std::size_t r = 0; r < rep.reps.size(); ++r)
    if (!rep.reps[r].ok) reasons.push_back({{"rep", r + 1}, {"reason", rep.reps[r].fail_reason}});
  j["failed_reps"] = reasons;

  const SimAggregates& a = rep.agg;
  j["used_reps"] = a.used_reps;
  if (a.used_reps > 0) {
    j["bias"] = matrix_json(a.bias);
    j["mad"] = matrix_json(a.mad);
    j["esd"] = matrix_json(a.esd);
    j["asd"] = matrix_json(a.asd_mean);
    j["rase"] = vector_json(a.rase_mean);
    if (rep.pipeline != Pipeline::fit_only) {
      j["C"] = a.c_avg;
      j["IC"] = a.ic_avg;
      j["CF"] = a.cf_rate;
      j["mse_oracle"] = a.mse_o;
      j["mse_penalized"] = a.mse_p;
      j["mse_unpenalized"] = a.mse_u;
    }
    if (rep.pipeline == Pipeline::select_identify) {
      j["ILC"] = vector_json(a.ilc);
      j["CIL"] = a.cil_rate;
      j["rase_penalized"] = vector_json(a.rase_p_mean);
      j["rase_unpenalized"] = vector_json(a.rase_u_mean);
    }
  }
  write_text(dir / "simsummary.json", j.dump(2) + "\n");
}

int cmd_simulate(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  SimulationReport rep = run_replications(cfg.sim, pipeline_from_string(cfg.sim_pipeline),
                                          resolve_threads(cfg));
  emit_sim_outputs(cfg.out_dir, rep);
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& model_path) {
  if (model_path.empty()) throw DataError("predict needs --model fit.json");
  std::ifstream in(model_path);
  if (!in) throw DataError("cannot open model file: " + model_path);
  json j;
  in >> j;

  DatasetSchema schema;
  if (!j.contains("schema")) throw DataError("model file has no schema");
  schema.response = j["schema"]["response"].get<std::string>();
  schema.x_cols = j["schema"]["x_cols"].get<std::vector<std::string>>();
  schema.z_cols = j["schema"]["z_cols"].get<std::vector<std::string>>();
  schema.add_intercept = j["schema"]["add_intercept"].get<bool>();
  schema.standardize_z = false;  // reuse stored moments instead
  if (cfg.data_path.empty()) throw DataError("predict needs --data");
  Dataset data = load_dataset(cfg.data_path, schema);
  if (j.value("z_standardized", false)) {
    Eigen::VectorXd means = Eigen::VectorXd::Zero(data.z.cols());
    Eigen::VectorXd scales = Eigen::VectorXd::Ones(data.z.cols());
    for (int c = 0; c < data.z.cols(); ++c) {
      means[c] = j["z_means"][c].get<double>();
      scales[c] = j["z_scales"][c].get<double>();
      data.z.col(c) = (data.z.col(c).array() - means[c]) / scales[c];
    }
  }

  int order = j["basis"]["order"].get<int>();
  int nn = j["basis"]["interior_knots"].get<int>();
  std::vector<double> knots = j["basis"]["knots"].get<std::vector<double>>();
  std::vector<double> interior(knots.begin() + order, knots.begin() + order + nn);
  SplineBasis basis = make_basis_from_interior(order, interior);

  Loadings loadings;
  loadings.beta = matrix_from_json(j["loadings"]);
  SplineCoeffs coeffs;
  coeffs.lambda = matrix_from_json(j["lambda"]);
  std::vector<IndexRescaler> rescalers;
  for (const auto& r : j["rescalers"])
    rescalers.emplace_back(r["lo"].get<double>(), r["hi"].get<double>());

  fs::create_directories(cfg.out_dir);
  std::string text = "row,y_hat\n";
  for (int i = 0; i < data.n(); ++i) {
    double pred = predict_quantile(loadings, coeffs, basis, rescalers,
                                   data.x.row(i).transpose(), data.z.row(i).transpose());
    text += std::to_string(i + 1) + "," + format_double(pred) + "\n";
  }
  write_text(fs::path(cfg.out_dir) / "predictions.csv", text);
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"varying index coefficient quantile regression"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "configuration file");
    cmd->add_option("--data", opt.data_path, "input CSV");
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--tau", opt.tau, "quantile level");
    cmd->add_option("--seed", opt.seed, "random seed");
    cmd->add_option("--threads", opt.threads, "worker threads");
    cmd->add_option("--bandwidth", opt.bandwidth, "smoothing bandwidth");
    cmd->add_option("--knots", opt.knots, "interior knot count");
  };

  CLI::App* c_fit = app.add_subcommand("fit", "unpenalized estimation");
  add_common(c_fit);
  CLI::App* c_sel = app.add_subcommand("select", "SCAD loading selection");
  add_common(c_sel);
  c_sel->add_option("--alpha1", opt.alpha1, "fixed alpha1 (default: MSIC)");
  CLI::App* c_ident = app.add_subcommand("identify", "selection plus linearity identification");
  add_common(c_ident);
  c_ident->add_option("--alpha1", opt.alpha1, "fixed alpha1 (default: MSIC)");
  c_ident->add_option("--alpha2", opt.alpha2, "fixed alpha2 (default: MSIC)");
  CLI::App* c_tune = app.add_subcommand("tune", "bandwidth and penalty tuning tables");
  add_common(c_tune);
  CLI::App* c_sim = app.add_subcommand("simulate", "replicated synthetic-data study");
  add_common(c_sim);
  c_sim->add_option("--example", opt.example, "design 1, 2 or 3");
  c_sim->add_option("--error", opt.error_law, "sn, t3, la or mn");
  c_sim->add_option("--n", opt.n, "sample size");
  c_sim->add_option("--pn", opt.pn, "index dimension (example 3)");
  c_sim->add_option("--sigma", opt.sigma, "noise scale");
  c_sim->add_option("--replications", opt.replications, "replication count");
  c_sim->add_option("--pipeline", opt.pipeline, "fit_only, select or select+identify");
  CLI::App* c_pred = app.add_subcommand("predict", "predictions from a stored fit");
  add_common(c_pred);
  c_pred->add_option("--model", opt.model_path, "fit.json from a previous run");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "vicm: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig cfg = merge_options(opt);
    if (c_fit->parsed()) return cmd_fit(cfg);
    if (c_sel->parsed()) return cmd_select(cfg, false);
    if (c_ident->parsed()) return cmd_select(cfg, true);
    if (c_tune->parsed()) return cmd_tune(cfg);
    if (c_sim->parsed()) return cmd_simulate(cfg);
    if (c_pred->parsed()) return cmd_predict(cfg, opt.model_path);
    std::cerr << "vicm: usage: no subcommand\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "vicm: data: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "vicm: numeric: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "vicm: numeric: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace vicm
