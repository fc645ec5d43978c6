#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vicm {

// Affine map from a raw index range onto [0,1], clipping at the ends.
// deriv_scale() is the chain-rule factor d(u)/d(raw) = 1/(hi-lo).
class IndexRescaler {
 public:
  IndexRescaler(double lo, double hi);

  double rescale(double t) const;
  double unrescale(double u) const { return lo_ + u * (hi_ - lo_); }
  double deriv_scale() const { return 1.0 / (hi_ - lo_); }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
};

// lo = min - margin*range, hi = max + margin*range. Throws
// DegenerateRangeError when all values coincide.
IndexRescaler fit_rescaler(const Eigen::VectorXd& index_values,
                           double margin = 0.01);

enum class KnotPlacement { uniform, sample_quantiles };

// B-spline basis of order q (degree q-1) on [0,1] with q-fold boundary
// knots. Immutable after construction; evaluation is pure.
class SplineBasis {
 public:
  SplineBasis() : SplineBasis(2, {0.0, 0.0, 1.0, 1.0}) {}

  int order() const { return order_; }
  int interior_knot_count() const { return static_cast<int>(knots_.size()) - 2 * order_; }
  int dim() const { return dim_; }
  const std::vector<double>& knots() const { return knots_; }

  // Basis values at u in [0,1]; nonnegative, sum to one, at most `order`
  // consecutive nonzero entries.
  Eigen::VectorXd eval(double u) const;

  // First derivatives of each basis function (one-sided at the ends).
  Eigen::VectorXd eval_deriv(double u) const;

  // Second derivatives, piecewise; zero vector for order < 3.
  Eigen::VectorXd eval_deriv2(double u) const;

  // Knot averages; coefficients sampled from an affine function at these
  // points reproduce that function exactly.
  Eigen::VectorXd greville_abscissae() const;

  friend SplineBasis make_basis(int order, int interior_knot_count,
                                KnotPlacement placement,
                                const Eigen::VectorXd& values);
  friend SplineBasis make_basis_from_interior(int order,
                                              const std::vector<double>& interior);

 private:
  SplineBasis(int order, std::vector<double> knots);

  // Rows of the Cox-de Boor triangle up to the requested order.
  void order_rows(double u, int upto, std::vector<Eigen::VectorXd>& rows) const;

  int order_;
  int dim_;
  std::vector<double> knots_;  // length dim + order
};

SplineBasis make_basis(int order, int interior_knot_count,
                       KnotPlacement placement = KnotPlacement::uniform,
                       const Eigen::VectorXd& values = Eigen::VectorXd());

// Rebuild a basis from explicit interior knot positions in (0,1).
SplineBasis make_basis_from_interior(int order, const std::vector<double>& interior);

// Gram matrix of second derivatives, D(k,k') = int_0^1 B''_k B''_k' du,
// integrated exactly by per-interval Gauss-Legendre with `order` points.
Eigen::MatrixXd curvature_gram(const SplineBasis& basis);

// Gauss-Legendre nodes/weights on [-1,1], used by curvature_gram and the
// test oracles.
void gauss_legendre(int npoints, std::vector<double>& nodes,
                    std::vector<double>& weights);

}  // namespace vicm
