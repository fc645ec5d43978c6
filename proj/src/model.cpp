#include "vicm/model.hpp"

#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

void Dataset::validate() const {
  if (n() < 1) throw ParameterError("dataset: empty");
  if (x.rows() != n() || z.rows() != n()) throw ParameterError("dataset: row mismatch");
  if (!y.allFinite() || !x.allFinite() || !z.allFinite())
    throw ParameterError("dataset: non-finite entries");
  for (int i = 0; i < n(); ++i)
    if (x(i, 0) != 1.0) throw ParameterError("dataset: x column 1 must be identically 1");
}

void Loadings::validate() const {
  for (int l = 0; l < d(); ++l) {
    double nrm = beta.row(l).norm();
    if (std::abs(nrm - 1.0) > 1e-8)
      throw ConstraintViolation("loadings: row not unit norm");
    if (!(beta(l, 0) > 0.0))
      throw ConstraintViolation("loadings: first entry must be positive");
  }
}

Eigen::VectorXd ReducedLoadings::flat() const {
  Eigen::VectorXd v(beta_m1.size());
  int k = 0;
  for (int l = 0; l < beta_m1.rows(); ++l)
    for (int j = 0; j < beta_m1.cols(); ++j) v[k++] = beta_m1(l, j);
  return v;
}

ReducedLoadings ReducedLoadings::from_flat(const Eigen::VectorXd& v, int d, int p) {
  ReducedLoadings r;
  r.beta_m1.resize(d, p - 1);
  int k = 0;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p - 1; ++j) r.beta_m1(l, j) = v[k++];
  return r;
}

Eigen::VectorXd SplineCoeffs::flat() const {
  Eigen::VectorXd v(lambda.size());
  int k = 0;
  for (int l = 0; l < lambda.rows(); ++l)
    for (int s = 0; s < lambda.cols(); ++s) v[k++] = lambda(l, s);
  return v;
}

SplineCoeffs SplineCoeffs::from_flat(const Eigen::VectorXd& v, int d, int jn) {
  SplineCoeffs c;
  c.lambda.resize(d, jn);
  int k = 0;
  for (int l = 0; l < d; ++l)
    for (int s = 0; s < jn; ++s) c.lambda(l, s) = v[k++];
  return c;
}

Loadings expand(const ReducedLoadings& reduced) {
  const int d = reduced.d(), p = reduced.p();
  Loadings full;
  full.beta.resize(d, p);
  for (int l = 0; l < d; ++l) {
    double nrm2 = reduced.beta_m1.row(l).squaredNorm();
    if (nrm2 >= 1.0)
      throw ConstraintViolation("expand: reduced row squared norm >= 1");
    full.beta(l, 0) = std::sqrt(1.0 - nrm2);
    full.beta.row(l).tail(p - 1) = reduced.beta_m1.row(l);
  }
  return full;
}

ReducedLoadings reduce(const Loadings& full) {
  for (int l = 0; l < full.d(); ++l)
    if (!(full.beta(l, 0) > 0.0))
      throw ConstraintViolation("reduce: first loading entry must be positive");
  ReducedLoadings r;
  r.beta_m1 = full.beta.rightCols(full.p() - 1);
  return r;
}

Eigen::MatrixXd loading_jacobian(const Eigen::VectorXd& reduced_row) {
  const int pm1 = static_cast<int>(reduced_row.size());
  double nrm2 = reduced_row.squaredNorm();
  if (nrm2 >= 1.0)
    throw ConstraintViolation("loading_jacobian: squared norm >= 1");
  Eigen::MatrixXd j(pm1 + 1, pm1);
  j.row(0) = -reduced_row.transpose() / std::sqrt(1.0 - nrm2);
  j.bottomRows(pm1) = Eigen::MatrixXd::Identity(pm1, pm1);
  return j;
}

void shrink_to_feasible(ReducedLoadings& reduced) {
  for (int l = 0; l < reduced.d(); ++l) {
    double nrm = reduced.beta_m1.row(l).norm();
    if (nrm * nrm >= 1.0) reduced.beta_m1.row(l) *= (1.0 - 1e-6) / nrm;
  }
}

Eigen::VectorXd design_vector(const SplineBasis& basis,
                              const std::vector<IndexRescaler>& rescalers,
                              const Eigen::VectorXd& x_i,
                              const Eigen::VectorXd& z_i,
                              const Loadings& loadings) {
  const int d = loadings.d();
  const int jn = basis.dim();
  Eigen::VectorXd out(d * jn);
  for (int l = 0; l < d; ++l) {
    double t = z_i.dot(loadings.beta.row(l));
    double u = rescalers[l].rescale(t);
    out.segment(l * jn, jn) = basis.eval(u) * x_i[l];
  }
  return out;
}

double predict_quantile(const Loadings& loadings, const SplineCoeffs& coeffs,
                        const SplineBasis& basis,
                        const std::vector<IndexRescaler>& rescalers,
                        const Eigen::VectorXd& x_i, const Eigen::VectorXd& z_i) {
  double acc = 0.0;
  const int d = loadings.d();
  for (int l = 0; l < d; ++l) {
    double t = z_i.dot(loadings.beta.row(l));
    double u = rescalers[l].rescale(t);
    acc += basis.eval(u).dot(coeffs.lambda.row(l)) * x_i[l];
  }
  return acc;
}

DesignMatrix build_design(const Dataset& data, const Loadings& loadings,
                          const SplineBasis& basis,
                          const std::vector<IndexRescaler>& rescalers) {
  const int n = data.n(), d = data.d(), jn = basis.dim();
  DesignMatrix dm;
  dm.d_mat.resize(n, d * jn);
  dm.raw_index.resize(n, d);
  dm.u.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < d; ++l) {
      double t = data.z.row(i).dot(loadings.beta.row(l));
      double u = rescalers[l].rescale(t);
      dm.raw_index(i, l) = t;
      dm.u(i, l) = u;
      dm.d_mat.row(i).segment(l * jn, jn) = (basis.eval(u) * data.x(i, l)).transpose();
    }
  }
  return dm;
}

std::vector<IndexRescaler> fit_rescalers(const Dataset& data, const Loadings& loadings,
                                         double margin) {
  std::vector<IndexRescaler> out;
  out.reserve(loadings.d());
  for (int l = 0; l < loadings.d(); ++l) {
    Eigen::VectorXd idx = data.z * loadings.beta.row(l).transpose();
    out.push_back(fit_rescaler(idx, margin));
  }
  return out;
}

}  // namespace vicm
