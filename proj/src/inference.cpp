#include "vicm/inference.hpp"

#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

Eigen::VectorXd residual_weights(const Eigen::VectorXd& residuals, const Bandwidth& bw) {
  Eigen::VectorXd w(residuals.size());
  for (int i = 0; i < residuals.size(); ++i)
    w[i] = BartlettKernel::value(residuals[i] / bw.h) / bw.h;
  return w;
}

Eigen::VectorXd residual_weights(const VicmFit& fit, const Bandwidth& bw) {
  return residual_weights(fit.residuals, bw);
}

Eigen::MatrixXd project_covariates(const Dataset& data, const VicmFit& fit,
                                   const Eigen::VectorXd& weights, double ridge) {
  DesignMatrix dm = build_design(data, fit.loadings, fit.basis, fit.rescalers);
  const int m = static_cast<int>(dm.d_mat.cols());
  Eigen::MatrixXd gram = dm.d_mat.transpose() * weights.asDiagonal() * dm.d_mat;
  double tr = gram.trace();
  if (tr <= 0.0) return data.z;  // all weights vanished: nothing to project on
  gram.diagonal().array() += ridge * tr / m;
  Eigen::MatrixXd coef =
      gram.ldlt().solve(dm.d_mat.transpose() * weights.asDiagonal() * data.z);
  if (!coef.allFinite())
    throw ConditioningError("covariate projection: weighted Gram singular");
  return data.z - dm.d_mat * coef;
}

namespace {

// Rows v_i = (mdot_l X_il J_l' Zhat_i)_{l=1..d} entering both sandwich
// factors of the loading covariance.
Eigen::MatrixXd sandwich_rows(const Dataset& data, const VicmFit& fit,
                              const Eigen::MatrixXd& z_proj) {
  const int n = data.n(), d = data.d(), p = data.p();
  const int pm1 = p - 1;
  DesignMatrix dm = build_design(data, fit.loadings, fit.basis, fit.rescalers);
  ReducedLoadings red = reduce(fit.loadings);
  std::vector<Eigen::MatrixXd> jac_l(d);
  for (int l = 0; l < d; ++l) jac_l[l] = loading_jacobian(red.beta_m1.row(l));

  Eigen::MatrixXd v(n, d * pm1);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < d; ++l) {
      double mdot = fit.basis.eval_deriv(dm.u(i, l)).dot(fit.coeffs.lambda.row(l)) *
                    fit.rescalers[l].deriv_scale();
      v.row(i).segment(l * pm1, pm1) =
          (mdot * data.x(i, l) * (jac_l[l].transpose() * z_proj.row(i).transpose()))
              .transpose();
    }
  }
  return v;
}

std::vector<int> active_reduced_coords(const VicmFit& fit) {
  const int d = fit.loadings.d(), p = fit.loadings.p();
  std::vector<int> idx;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p - 1; ++j)
      if (!fit.has_mask() || fit.support(l, j + 1)) idx.push_back(l * (p - 1) + j);
  return idx;
}

}  // namespace

CovarianceReport cov_loadings(const Dataset& data, const VicmFit& fit, double tau,
                              const Bandwidth& bw, const Eigen::VectorXd* penalty_diag,
                              double ridge) {
  return cov_loadings_weighted(data, fit, tau, residual_weights(fit, bw), penalty_diag,
                               ridge);
}

CovarianceReport cov_loadings_weighted(const Dataset& data, const VicmFit& fit, double tau,
                                       const Eigen::VectorXd& w,
                                       const Eigen::VectorXd* penalty_diag, double ridge) {
  const int n = data.n(), d = data.d(), p = data.p();
  const int pm1 = p - 1;
  const int dim = d * pm1;

  Eigen::MatrixXd z_proj = project_covariates(data, fit, w, ridge);
  Eigen::MatrixXd v = sandwich_rows(data, fit, z_proj);

  Eigen::VectorXd psi2(n);
  for (int i = 0; i < n; ++i) {
    double s = score(tau, fit.residuals[i]);
    psi2[i] = s * s;
  }

  Eigen::MatrixXd h_full = v.transpose() * w.asDiagonal() * v;
  Eigen::MatrixXd m_full = v.transpose() * psi2.asDiagonal() * v;
  if (penalty_diag) {
    if (penalty_diag->size() != dim)
      throw ParameterError("cov_loadings: penalty diagonal has wrong length");
    h_full += static_cast<double>(n) * penalty_diag->asDiagonal();
  }

  auto active = active_reduced_coords(fit);
  const int na = static_cast<int>(active.size());
  Eigen::MatrixXd h_act(na, na), m_act(na, na);
  for (int a = 0; a < na; ++a)
    for (int b = 0; b < na; ++b) {
      h_act(a, b) = h_full(active[a], active[b]);
      m_act(a, b) = m_full(active[a], active[b]);
    }
  double tr = h_act.trace();
  h_act.diagonal().array() += ridge * (tr > 0 ? tr / std::max(na, 1) : 1.0);
  Eigen::LDLT<Eigen::MatrixXd> solver(h_act);
  Eigen::MatrixXd hinv_m = solver.solve(m_act);
  Eigen::MatrixXd cov_act = solver.solve(hinv_m.transpose()).transpose();
  cov_act = (0.5 * (cov_act + cov_act.transpose())).eval();
  if (!cov_act.allFinite())
    throw ConditioningError("loading covariance: sandwich inversion failed");

  CovarianceReport rep;
  rep.cov_reduced = Eigen::MatrixXd::Zero(dim, dim);
  for (int a = 0; a < na; ++a)
    for (int b = 0; b < na; ++b) rep.cov_reduced(active[a], active[b]) = cov_act(a, b);

  // conjugate by the direct sum of the per-row Jacobians
  ReducedLoadings red = reduce(fit.loadings);
  Eigen::MatrixXd jbig = Eigen::MatrixXd::Zero(d * p, dim);
  for (int l = 0; l < d; ++l)
    jbig.block(l * p, l * pm1, p, pm1) = loading_jacobian(red.beta_m1.row(l));
  rep.cov_full = jbig * rep.cov_reduced * jbig.transpose();
  rep.cov_full = (0.5 * (rep.cov_full + rep.cov_full.transpose())).eval();

  rep.asd_full.resize(d * p);
  for (int k = 0; k < d * p; ++k) rep.asd_full[k] = std::sqrt(std::max(0.0, rep.cov_full(k, k)));
  return rep;
}

std::vector<CurveBandPoint> curve_bands(const Dataset& data, const VicmFit& fit, double tau,
                                        const Bandwidth& bw, int l,
                                        const std::vector<double>& grid_raw, double ridge) {
  if (l < 0 || l >= fit.loadings.d()) throw ParameterError("curve_bands: component out of range");
  const int n = data.n();
  const int jn = fit.basis.dim();
  const int m = fit.loadings.d() * jn;

  DesignMatrix dm = build_design(data, fit.loadings, fit.basis, fit.rescalers);
  Eigen::VectorXd w = residual_weights(fit, bw);
  Eigen::VectorXd psi2(n);
  for (int i = 0; i < n; ++i) {
    double s = score(tau, fit.residuals[i]);
    psi2[i] = s * s;
  }

  Eigen::MatrixXd c_mat = dm.d_mat.transpose() * w.asDiagonal() * dm.d_mat;
  Eigen::MatrixXd d_mat = dm.d_mat.transpose() * psi2.asDiagonal() * dm.d_mat;
  double tr = c_mat.trace();
  c_mat.diagonal().array() += ridge * (tr > 0 ? tr / m : 1.0);
  Eigen::LDLT<Eigen::MatrixXd> solver(c_mat);
  Eigen::MatrixXd mid = solver.solve(d_mat);
  Eigen::MatrixXd var_full = solver.solve(mid.transpose()).transpose();
  if (!var_full.allFinite())
    throw ConditioningError("curve bands: design Gram singular");
  Eigen::MatrixXd var_block = var_full.block(l * jn, l * jn, jn, jn);

  std::vector<CurveBandPoint> out;
  out.reserve(grid_raw.size());
  for (double t : grid_raw) {
    double u = fit.rescalers[l].rescale(t);
    Eigen::VectorXd b = fit.basis.eval(u);
    double m_hat = b.dot(fit.coeffs.lambda.row(l));
    double var = b.dot(var_block * b);
    double se = std::sqrt(std::max(0.0, var));
    out.push_back({t, m_hat, se, m_hat - 1.96 * se, m_hat + 1.96 * se});
  }
  return out;
}

}  // namespace vicm
