#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "vicm/estimator.hpp"

namespace vicm {

struct CurveBandPoint {
  double u;   // raw index value
  double m_hat;
  double se;
  double lo;
  double hi;
};

struct CovarianceReport {
  Eigen::MatrixXd cov_reduced;  // d(p-1) x d(p-1)
  Eigen::MatrixXd cov_full;     // dp x dp
  Eigen::VectorXd asd_full;     // sqrt(diag(cov_full))
};

// Kernel weights w_i = K(resid_i / h) / h.
Eigen::VectorXd residual_weights(const Eigen::VectorXd& residuals, const Bandwidth& bw);
Eigen::VectorXd residual_weights(const VicmFit& fit, const Bandwidth& bw);

// Residuals of the w-weighted least-squares projection of each z column
// onto the span of the design columns.
Eigen::MatrixXd project_covariates(const Dataset& data, const VicmFit& fit,
                                   const Eigen::VectorXd& weights,
                                   double ridge = 1e-8);

// Sandwich covariance of the loadings; `penalty_diag` (d(p-1)) adds the
// n*Delta term of the penalized variant. Zeroed support entries get zero
// rows and columns.
CovarianceReport cov_loadings(const Dataset& data, const VicmFit& fit, double tau,
                              const Bandwidth& bw,
                              const Eigen::VectorXd* penalty_diag = nullptr,
                              double ridge = 1e-8);

// Same sandwich with caller-supplied kernel weights.
CovarianceReport cov_loadings_weighted(const Dataset& data, const VicmFit& fit,
                                       double tau, const Eigen::VectorXd& weights,
                                       const Eigen::VectorXd* penalty_diag = nullptr,
                                       double ridge = 1e-8);

// Pointwise variance of m_hat_l with 95% normal bands.
std::vector<CurveBandPoint> curve_bands(const Dataset& data, const VicmFit& fit,
                                        double tau, const Bandwidth& bw, int l,
                                        const std::vector<double>& grid_raw,
                                        double ridge = 1e-8);

}  // namespace vicm
