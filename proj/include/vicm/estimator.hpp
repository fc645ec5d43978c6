#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "vicm/model.hpp"
#include "vicm/quantile.hpp"
#include "vicm/spline.hpp"

namespace vicm {

struct FitConfig {
  double bandwidth = 0.0;   // 0 selects n^{-0.3}
  int spline_order = 4;
  int interior_knots = -1;  // -1 selects floor(n^{1/(2q+1)})
  KnotPlacement placement = KnotPlacement::uniform;
  double rescale_margin = 0.01;

  int max_outer = 50;
  int max_inner = 200;
  int step_halving_max = 20;
  double tol_outer = 1e-6;
  double tol_inner = 1e-8;
  double ridge = 1e-8;

  int multistart = 5;
  int init_ls_iters = 10;
  std::uint64_t seed = 1;

  double resolve_bandwidth(int n) const;
  int resolve_knots(int n) const;
  void validate() const;
};

enum class StopReason { step_tolerance, no_improving_step, max_outer, no_free_loadings };

struct TraceEntry {
  int iteration;
  double objective;  // unsmoothed check loss after the accepted step
  double step_norm;  // sup-norm change of the reduced loadings
};

struct VicmFit {
  Loadings loadings;
  ReducedLoadings reduced;
  SplineCoeffs coeffs;
  SplineBasis basis;
  std::vector<IndexRescaler> rescalers;
  Eigen::VectorXd residuals;
  double objective = 0.0;
  bool converged = false;
  StopReason stop = StopReason::max_outer;
  std::vector<TraceEntry> trace;
  double tau = 0.5;
  double bandwidth = 0.0;
  // false marks loading entries pinned to exact zero by selection
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support;

  bool has_mask() const { return support.size() > 0; }
  Eigen::VectorXd predict(const Dataset& data) const;
};

// Weighted quantile regression by IRLS with a vanishing smoothing floor.
// `design` is any full-column-rank matrix; warm start optional.
Eigen::VectorXd solve_quantile_lp(const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& design, double tau,
                                  const FitConfig& cfg,
                                  const Eigen::VectorXd* warm = nullptr);

SplineCoeffs fit_spline_coeffs(const Dataset& data, const Loadings& loadings,
                               const SplineBasis& basis,
                               const std::vector<IndexRescaler>& rescalers,
                               double tau, const FitConfig& cfg,
                               const SplineCoeffs* warm = nullptr);

// d*J_n x d(p-1) implicit-differentiation matrix of the smoothed inner
// problem: columns are d lambda_hat / d beta_{l,-1}. `exact=false` drops
// the score-weighted design-derivative term (the projection form used by
// the asymptotics).
Eigen::MatrixXd coeff_sensitivity(const Dataset& data, const Loadings& loadings,
                                  const SplineCoeffs& coeffs,
                                  const SplineBasis& basis,
                                  const std::vector<IndexRescaler>& rescalers,
                                  double tau, const Bandwidth& bw,
                                  double ridge = 1e-8, bool exact = true);

// Intermediate quantities shared by the estimating equations, their
// Jacobian and the sandwich pieces.
struct EEState {
  Eigen::VectorXd residuals;  // n
  Eigen::VectorXd psi;        // smoothed score per observation
  Eigen::VectorXd w;          // kernel weights K(r/h)/h
  Eigen::MatrixXd a;          // n x d(p-1) stacked gradient vectors
  Eigen::VectorXd r_ee;       // d(p-1) estimating equations
  Eigen::MatrixXd jac;        // d(p-1) x d(p-1), negative semidefinite
};

EEState assemble_ee(const Dataset& data, const Loadings& loadings,
                    const SplineCoeffs& coeffs, const SplineBasis& basis,
                    const std::vector<IndexRescaler>& rescalers, double tau,
                    const Bandwidth& bw, bool include_sensitivity = true,
                    const Eigen::MatrixXd* frozen_sensitivity = nullptr,
                    double ridge = 1e-8);

// Convenience wrappers that run the inner fit at the supplied loadings.
Eigen::VectorXd estimating_equation(const Dataset& data,
                                    const ReducedLoadings& reduced, double tau,
                                    const FitConfig& cfg);
Eigen::MatrixXd ee_jacobian(const Dataset& data, const ReducedLoadings& reduced,
                            double tau, const FitConfig& cfg);

// Full Steps 0-3: inner spline fit alternated with Fisher scoring on the
// reduced loadings, step-halving on the check-loss profile.
// `mask` (d x p, false = pinned zero) restricts the free coordinates.
VicmFit fit(const Dataset& data, double tau, const FitConfig& cfg,
            const std::optional<Loadings>& init = std::nullopt,
            const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr);

// Fitted curve m_hat_l over raw index values.
std::vector<std::pair<double, double>> eval_curve(const VicmFit& fit, int l,
                                                  const std::vector<double>& u_raw);

double check_loss_objective(const Eigen::VectorXd& residuals, double tau);

}  // namespace vicm
