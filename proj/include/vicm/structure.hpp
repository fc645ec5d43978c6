#pragma once

#include <Eigen/Dense>
#include <functional>

#include "vicm/estimator.hpp"
#include "vicm/sparsity.hpp"

namespace vicm {

struct QuasiNewtonOpts {
  int max_iter = 500;
  double grad_tol = 1e-6;
  double step_cap = 10.0;     // bound on ||alpha * direction||
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

struct QuasiNewtonResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;  // gradient tolerance reached
};

// BFGS with full inverse-Hessian updates and a Wolfe line search.
QuasiNewtonResult quasi_newton_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
    const Eigen::VectorXd& x0, const QuasiNewtonOpts& opts = {});

// Smoothed check loss plus n * sum_l p_alpha2(||lambda_l||_D), with the
// D-norm regularized at zero: sqrt(lambda' D lambda + kappa^2) - kappa.
struct PenalizedSplineObjective {
  PenalizedSplineObjective(const Dataset& data, const VicmFit& fit, double tau,
                           const ScadPenalty& pen, const Bandwidth& bw);

  double value(const Eigen::VectorXd& lambda_flat) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& lambda_flat) const;

  const Eigen::MatrixXd& curvature() const { return d_gram_; }

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd d_gram_;
  double tau_;
  ScadPenalty pen_;
  Bandwidth bw_;
  int d_;
  int jn_;
};

struct StructureReport {
  SplineCoeffs lambda_bar;       // group-penalized minimizer
  SplineCoeffs refit;            // joint refit with linear blocks constrained
  Eigen::VectorXd d_norms;       // ||lambda_bar_l||_D
  std::vector<bool> is_linear;
  // (intercept, slope) in raw index units for the flagged components
  std::vector<std::pair<double, double>> linear_coeffs;
  double threshold = 0.0;
  bool converged = false;
  double objective = 0.0;        // unsmoothed check loss of the refit
};

// Minimize the group-penalized objective from the fit's coefficients, flag
// components with small curvature norm as linear, then refit those blocks
// on the two-dimensional affine subspace.
StructureReport identify_linear(const Dataset& data, double tau, const ScadPenalty& pen,
                                const VicmFit& sparse_fit,
                                double linearity_threshold = -1.0,
                                const QuasiNewtonOpts& opts = {});

}  // namespace vicm
