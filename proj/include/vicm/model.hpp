#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "vicm/spline.hpp"

namespace vicm {

// Observations for the varying index coefficient model. x column 1 is the
// intercept and must be identically one.
struct Dataset {
  Eigen::VectorXd y;  // n
  Eigen::MatrixXd x;  // n x d
  Eigen::MatrixXd z;  // n x p

  int n() const { return static_cast<int>(y.size()); }
  int d() const { return static_cast<int>(x.cols()); }
  int p() const { return static_cast<int>(z.cols()); }

  // Columns of z were centered/scaled on load; kept for reporting back in
  // original units.
  bool z_standardized = false;
  Eigen::VectorXd z_means;
  Eigen::VectorXd z_scales;

  void validate() const;
};

// d x p index directions, each row unit norm with positive first entry.
struct Loadings {
  Eigen::MatrixXd beta;

  int d() const { return static_cast<int>(beta.rows()); }
  int p() const { return static_cast<int>(beta.cols()); }
  void validate() const;
};

// Unconstrained d x (p-1) parameterization, rows with squared norm < 1.
struct ReducedLoadings {
  Eigen::MatrixXd beta_m1;

  int d() const { return static_cast<int>(beta_m1.rows()); }
  int p() const { return static_cast<int>(beta_m1.cols()) + 1; }
  Eigen::VectorXd flat() const;
  static ReducedLoadings from_flat(const Eigen::VectorXd& v, int d, int p);
};

struct SplineCoeffs {
  Eigen::MatrixXd lambda;  // d x J_n

  int d() const { return static_cast<int>(lambda.rows()); }
  int dim() const { return static_cast<int>(lambda.cols()); }
  Eigen::VectorXd flat() const;
  static SplineCoeffs from_flat(const Eigen::VectorXd& v, int d, int jn);
};

Loadings expand(const ReducedLoadings& reduced);
ReducedLoadings reduce(const Loadings& full);

// p x (p-1) Jacobian of the row map beta_l(beta_{l,-1}).
Eigen::MatrixXd loading_jacobian(const Eigen::VectorXd& reduced_row);

// Rows with squared norm >= 1 are pulled back radially to norm 1 - 1e-6.
void shrink_to_feasible(ReducedLoadings& reduced);

// Stacked per-component design vector (B(u_l) X_l)_{l=1..d} for one
// observation.
Eigen::VectorXd design_vector(const SplineBasis& basis,
                              const std::vector<IndexRescaler>& rescalers,
                              const Eigen::VectorXd& x_i,
                              const Eigen::VectorXd& z_i,
                              const Loadings& loadings);

double predict_quantile(const Loadings& loadings, const SplineCoeffs& coeffs,
                        const SplineBasis& basis,
                        const std::vector<IndexRescaler>& rescalers,
                        const Eigen::VectorXd& x_i, const Eigen::VectorXd& z_i);

// n x (d*J_n) matrix of design vectors plus the raw/rescaled index values.
struct DesignMatrix {
  Eigen::MatrixXd d_mat;      // n x d*J_n
  Eigen::MatrixXd raw_index;  // n x d, z_i' beta_l
  Eigen::MatrixXd u;          // n x d, rescaled
};

DesignMatrix build_design(const Dataset& data, const Loadings& loadings,
                          const SplineBasis& basis,
                          const std::vector<IndexRescaler>& rescalers);

// One rescaler per component, fitted to the current index values.
std::vector<IndexRescaler> fit_rescalers(const Dataset& data,
                                         const Loadings& loadings,
                                         double margin);

}  // namespace vicm
