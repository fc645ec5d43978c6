#include "vicm/spline.hpp"

#include <algorithm>
#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

IndexRescaler::IndexRescaler(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(hi > lo)) throw ParameterError("IndexRescaler requires hi > lo");
}

double IndexRescaler::rescale(double t) const {
  double u = (t - lo_) / (hi_ - lo_);
  return std::clamp(u, 0.0, 1.0);
}

IndexRescaler fit_rescaler(const Eigen::VectorXd& index_values, double margin) {
  if (index_values.size() == 0) throw ParameterError("fit_rescaler: empty values");
  if (margin < 0) throw ParameterError("fit_rescaler: negative margin");
  double lo = index_values.minCoeff();
  double hi = index_values.maxCoeff();
  if (!(hi > lo)) throw DegenerateRangeError("fit_rescaler: all index values identical");
  double range = hi - lo;
  return IndexRescaler(lo - margin * range, hi + margin * range);
}

SplineBasis::SplineBasis(int order, std::vector<double> knots)
    : order_(order), dim_(static_cast<int>(knots.size()) - order), knots_(std::move(knots)) {}

SplineBasis make_basis(int order, int interior_knot_count, KnotPlacement placement,
                       const Eigen::VectorXd& values) {
  if (order < 2) throw ParameterError("make_basis: order must be >= 2");
  if (interior_knot_count < 0) throw ParameterError("make_basis: negative interior knot count");

  std::vector<double> knots;
  knots.reserve(interior_knot_count + 2 * order);
  for (int i = 0; i < order; ++i) knots.push_back(0.0);

  if (placement == KnotPlacement::uniform) {
    for (int k = 1; k <= interior_knot_count; ++k)
      knots.push_back(static_cast<double>(k) / (interior_knot_count + 1));
  } else {
    if (values.size() == 0)
      throw ParameterError("make_basis: sample_quantiles needs values");
    std::vector<double> sorted(values.data(), values.data() + values.size());
    std::sort(sorted.begin(), sorted.end());
    const auto m = sorted.size();
    for (int k = 1; k <= interior_knot_count; ++k) {
      double p = static_cast<double>(k) / (interior_knot_count + 1);
      // linear-interpolation sample quantile
      double pos = p * (m - 1);
      auto i0 = static_cast<std::size_t>(pos);
      double frac = pos - static_cast<double>(i0);
      double q = (i0 + 1 < m) ? sorted[i0] * (1 - frac) + sorted[i0 + 1] * frac : sorted[m - 1];
      knots.push_back(std::clamp(q, 0.0, 1.0));
    }
    std::sort(knots.begin() + order, knots.end());
  }
  for (int i = 0; i < order; ++i) knots.push_back(1.0);
  return SplineBasis(order, std::move(knots));
}

SplineBasis make_basis_from_interior(int order, const std::vector<double>& interior) {
  if (order < 2) throw ParameterError("make_basis_from_interior: order must be >= 2");
  std::vector<double> knots;
  knots.reserve(interior.size() + 2 * order);
  for (int i = 0; i < order; ++i) knots.push_back(0.0);
  for (double k : interior) {
    if (k < 0.0 || k > 1.0)
      throw ParameterError("make_basis_from_interior: knot outside [0,1]");
    knots.push_back(k);
  }
  if (!std::is_sorted(knots.begin(), knots.end()))
    throw ParameterError("make_basis_from_interior: knots not sorted");
  for (int i = 0; i < order; ++i) knots.push_back(1.0);
  return SplineBasis(order, std::move(knots));
}

void SplineBasis::order_rows(double u, int upto, std::vector<Eigen::VectorXd>& rows) const {
  const int nk = static_cast<int>(knots_.size());
  const int ncell = nk - 1;
  rows.assign(upto, Eigen::VectorXd());
  Eigen::VectorXd cur = Eigen::VectorXd::Zero(ncell);
  if (u >= knots_.back()) {
    // right-closed last nonempty interval so that u = 1 is in range
    for (int s = ncell - 1; s >= 0; --s) {
      if (knots_[s] < knots_[s + 1]) {
        cur[s] = 1.0;
        break;
      }
    }
  } else {
    for (int s = 0; s < ncell; ++s)
      if (knots_[s] <= u && u < knots_[s + 1]) {
        cur[s] = 1.0;
        break;
      }
  }
  if (upto >= 1) rows[0] = cur;
  for (int k = 2; k <= upto; ++k) {
    const int len = nk - k;
    Eigen::VectorXd nxt = Eigen::VectorXd::Zero(len);
    for (int s = 0; s < len; ++s) {
      double left = 0.0, right = 0.0;
      double dl = knots_[s + k - 1] - knots_[s];
      double dr = knots_[s + k] - knots_[s + 1];
      if (dl > 0) left = (u - knots_[s]) / dl * cur[s];
      if (dr > 0) right = (knots_[s + k] - u) / dr * cur[s + 1];
      nxt[s] = left + right;
    }
    cur = nxt;
    rows[k - 1] = cur;
  }
}

Eigen::VectorXd SplineBasis::eval(double u) const {
  if (u < 0.0 || u > 1.0) throw DomainError("eval_basis: u outside [0,1]");
  std::vector<Eigen::VectorXd> rows;
  order_rows(u, order_, rows);
  return rows[order_ - 1].head(dim_);
}

Eigen::VectorXd SplineBasis::eval_deriv(double u) const {
  if (u < 0.0 || u > 1.0) throw DomainError("eval_deriv_basis: u outside [0,1]");
  std::vector<Eigen::VectorXd> rows;
  order_rows(u, order_, rows);
  const Eigen::VectorXd& lower = rows[order_ - 2];  // order q-1 values
  Eigen::VectorXd d = Eigen::VectorXd::Zero(dim_);
  const int q = order_;
  for (int s = 0; s < dim_; ++s) {
    double acc = 0.0;
    double dl = knots_[s + q - 1] - knots_[s];
    double dr = knots_[s + q] - knots_[s + 1];
    if (dl > 0) acc += lower[s] / dl;
    if (dr > 0) acc -= lower[s + 1] / dr;
    d[s] = (q - 1) * acc;
  }
  return d;
}

Eigen::VectorXd SplineBasis::eval_deriv2(double u) const {
  if (u < 0.0 || u > 1.0) throw DomainError("eval_deriv2: u outside [0,1]");
  Eigen::VectorXd dd = Eigen::VectorXd::Zero(dim_);
  const int q = order_;
  if (q < 3) return dd;
  std::vector<Eigen::VectorXd> rows;
  order_rows(u, order_, rows);
  const Eigen::VectorXd& base = rows[order_ - 3];  // order q-2 values
  // first derivatives of the order q-1 functions
  const int len1 = static_cast<int>(knots_.size()) - (q - 1);
  Eigen::VectorXd d1 = Eigen::VectorXd::Zero(len1);
  for (int s = 0; s < len1; ++s) {
    double acc = 0.0;
    double dl = knots_[s + q - 2] - knots_[s];
    double dr = knots_[s + q - 1] - knots_[s + 1];
    if (dl > 0) acc += base[s] / dl;
    if (dr > 0 && s + 1 < base.size()) acc -= base[s + 1] / dr;
    d1[s] = (q - 2) * acc;
  }
  for (int s = 0; s < dim_; ++s) {
    double acc = 0.0;
    double dl = knots_[s + q - 1] - knots_[s];
    double dr = knots_[s + q] - knots_[s + 1];
    if (dl > 0) acc += d1[s] / dl;
    if (dr > 0) acc -= d1[s + 1] / dr;
    dd[s] = (q - 1) * acc;
  }
  return dd;
}

Eigen::VectorXd SplineBasis::greville_abscissae() const {
  Eigen::VectorXd g(dim_);
  for (int s = 0; s < dim_; ++s) {
    double acc = 0.0;
    for (int j = 1; j < order_; ++j) acc += knots_[s + j];
    g[s] = acc / (order_ - 1);
  }
  return g;
}

void gauss_legendre(int npoints, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(npoints, 0.0);
  weights.assign(npoints, 0.0);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < npoints; ++i) {
    // Newton from the Chebyshev-angle initial guess
    double x = std::cos(pi * (i + 0.75) / (npoints + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < npoints; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2 * j + 1) * x * p1 - j * p2) / (j + 1);
      }
      double dp = npoints * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int j = 0; j < npoints; ++j) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2 * j + 1) * x * p1 - j * p2) / (j + 1);
    }
    double dp = npoints * (x * p0 - p1) / (x * x - 1.0);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

Eigen::MatrixXd curvature_gram(const SplineBasis& basis) {
  const int m = basis.dim();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
  if (basis.order() < 3) return D;

  std::vector<double> nodes, weights;
  gauss_legendre(basis.order(), nodes, weights);

  const auto& knots = basis.knots();
  for (std::size_t cell = 0; cell + 1 < knots.size(); ++cell) {
    double a = knots[cell], b = knots[cell + 1];
    if (!(b > a)) continue;
    double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t g = 0; g < nodes.size(); ++g) {
      double u = mid + half * nodes[g];
      Eigen::VectorXd dd = basis.eval_deriv2(u);
      D.noalias() += (weights[g] * half) * (dd * dd.transpose());
    }
  }
  D = (0.5 * (D + D.transpose())).eval();
  return D;
}

}  // namespace vicm
