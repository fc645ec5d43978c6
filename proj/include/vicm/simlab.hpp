#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vicm/estimator.hpp"
#include "vicm/inference.hpp"
#include "vicm/sparsity.hpp"
#include "vicm/structure.hpp"
#include "vicm/tuning.hpp"

namespace vicm {

enum class ErrorKind { sn, t3, la, mn };

struct ErrorLaw {
  ErrorKind kind = ErrorKind::sn;
  double mn_rho = 0.1;
  double mn_sigma1 = 1.0;
  double mn_sigma2 = 5.0;
};

ErrorLaw error_law_from_string(const std::string& name);
std::string to_string(ErrorKind kind);

// Deterministic stream: explicit Box-Muller on top of mt19937_64 so results
// do not depend on the standard library's distribution internals.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : eng_(seed) {}
  double uniform();  // (0,1)
  double normal();

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

double sample_error(const ErrorLaw& law, SimRng& rng);
double error_cdf(const ErrorLaw& law, double x);
// tau-quantile of the raw error, so that err - c_tau has tau-quantile zero.
double quantile_shift(const ErrorLaw& law, double tau);

struct SimTruth {
  Loadings beta0;
  std::vector<std::function<double(double)>> m;  // raw index units
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support;  // true nonzeros
  std::vector<bool> linear;
};

std::pair<Dataset, SimTruth> gen_example1(int n, const ErrorLaw& law, SimRng& rng,
                                          double sigma = 0.5);
// Quantile-varying design; the truth depends on the target tau.
std::pair<Dataset, SimTruth> gen_example2(int n, SimRng& rng, double tau);
Eigen::Vector3d ex2_beta(int l, double tau);
double ex2_m(int l, double tau, double u);

std::pair<Dataset, SimTruth> gen_example3(int n, int pn, const ErrorLaw& law, double tau,
                                          SimRng& rng, double sigma = 0.2);

struct SimDesign {
  int example = 1;
  int n = 500;
  int pn = 0;  // 0: example default (ex3 uses floor(n^{1/3}))
  double tau = 0.5;
  ErrorLaw error;
  double sigma = -1.0;  // negative: example default
  int replications = 100;
  std::uint64_t seed = 1;

  int resolved_pn() const;
  double resolved_sigma() const;
};

enum class Pipeline { fit_only, select, select_identify };
Pipeline pipeline_from_string(const std::string& name);

struct RepRecord {
  bool ok = false;
  std::string fail_reason;

  Eigen::MatrixXd beta_hat;  // unpenalized, d x p
  Eigen::MatrixXd asd;       // sandwich ASD, d x p
  Eigen::VectorXd rase;      // per component (unpenalized / U.RASE)

  // selection pipeline
  double alpha1 = 0.0;
  Eigen::MatrixXd beta_pen;
  Eigen::MatrixXd beta_oracle;
  int correct_zeros = 0;
  int incorrect_zeros = 0;
  bool correctly_fit = false;
  double mse_u = 0.0, mse_p = 0.0, mse_o = 0.0;

  // structure pipeline
  double alpha2 = 0.0;
  std::vector<bool> linear_flags;
  Eigen::VectorXd rase_pen;  // after the structure refit (P.RASE)
};

struct SimAggregates {
  Eigen::MatrixXd bias, mad, esd, asd_mean;  // d x p
  Eigen::VectorXd rase_mean;                 // d

  double c_avg = 0.0, ic_avg = 0.0, cf_rate = 0.0, cil_rate = 0.0;
  Eigen::VectorXd ilc;  // d
  double mse_o = 0.0, mse_p = 0.0, mse_u = 0.0;
  Eigen::VectorXd rase_p_mean, rase_u_mean;
  int used_reps = 0;
};

struct SimulationReport {
  SimDesign design;
  Pipeline pipeline = Pipeline::fit_only;
  std::vector<RepRecord> reps;
  int failures = 0;
  bool unreliable = false;  // more than 20% of replications failed
  SimAggregates agg;
};

// Pure reduction over the stored replication rows.
SimAggregates compute_metrics(const std::vector<RepRecord>& reps, const SimTruth& truth,
                              Pipeline pipeline);

SimulationReport run_replications(const SimDesign& design, Pipeline pipeline,
                                  int threads = 1);

// The truth object of a design (beta0, functions, support) at its tau.
SimTruth design_truth(const SimDesign& design);

// Root average squared error of each fitted curve over the estimated index
// points z_i' beta_l.
Eigen::VectorXd rase_components(const Dataset& data, const Loadings& beta,
                                const SplineCoeffs& coeffs, const SplineBasis& basis,
                                const std::vector<IndexRescaler>& rescalers,
                                const SimTruth& truth);

std::uint64_t replication_seed(std::uint64_t seed, int rep);

}  // namespace vicm
