#include "vicm/sparsity.hpp"

#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

void ScadPenalty::validate() const {
  if (!(a > 2.0)) throw ParameterError("scad: a must exceed 2");
  if (alpha < 0.0) throw ParameterError("scad: alpha must be nonnegative");
  if (!(kappa > 0.0)) throw ParameterError("scad: kappa must be positive");
}

double scad_deriv(const ScadPenalty& pen, double x) {
  pen.validate();
  if (x < 0.0) throw ParameterError("scad_deriv: negative argument");
  if (pen.alpha == 0.0) return 0.0;
  if (x <= pen.alpha) return pen.alpha;
  double top = std::max(pen.a * pen.alpha - x, 0.0);
  return top / (pen.a - 1.0);
}

double scad_value(const ScadPenalty& pen, double x) {
  pen.validate();
  if (x < 0.0) throw ParameterError("scad_value: negative argument");
  const double al = pen.alpha, a = pen.a;
  if (al == 0.0) return 0.0;
  if (x <= al) return al * x;
  if (x >= a * al) return (a + 1.0) * al * al / 2.0;
  return (2.0 * a * al * x - x * x - al * al) / (2.0 * (a - 1.0));
}

VicmFit select_loadings(const Dataset& data, double tau, const ScadPenalty& pen,
                        const FitConfig& cfg, const VicmFit& init) {
  pen.validate();
  const int n = data.n(), d = data.d(), p = data.p();
  const int pm1 = p - 1;
  Bandwidth bw(cfg.resolve_bandwidth(n));

  using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
  BoolMatrix mask;
  if (init.has_mask()) {
    mask = init.support;
  } else {
    mask = BoolMatrix::Constant(d, p, true);
  }

  ReducedLoadings reduced = init.reduced;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < pm1; ++j)
      if (!mask(l, j + 1)) reduced.beta_m1(l, j) = 0.0;
  shrink_to_feasible(reduced);

  SplineBasis basis = init.basis;
  SplineCoeffs coeffs = init.coeffs;
  std::vector<IndexRescaler> rescalers = init.rescalers;

  std::vector<std::pair<int, int>> free_idx;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < pm1; ++j)
      if (mask(l, j + 1)) free_idx.emplace_back(l, j);
  const int nfree = static_cast<int>(free_idx.size());

  Loadings beta = expand(reduced);
  if (nfree > 0) {
    for (int iter = 0; iter < cfg.max_outer; ++iter) {
      rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
      coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg, &coeffs);
      EEState st = assemble_ee(data, beta, coeffs, basis, rescalers, tau, bw, true,
                               nullptr, cfg.ridge);

      Eigen::VectorXd r_free(nfree);
      Eigen::MatrixXd j_free(nfree, nfree);
      Eigen::VectorXd b_free(nfree);
      Eigen::VectorXd delta_diag(nfree);
      for (int aidx = 0; aidx < nfree; ++aidx) {
        auto [l, j] = free_idx[aidx];
        int flat = l * pm1 + j;
        double coef = reduced.beta_m1(l, j);
        double mag = std::abs(coef);
        double deriv = scad_deriv(pen, mag);
        r_free[aidx] = st.r_ee[flat];
        b_free[aidx] = deriv * (coef > 0.0 ? 1.0 : (coef < 0.0 ? -1.0 : 0.0));
        delta_diag[aidx] = deriv / (pen.kappa + mag);
        for (int bidx = 0; bidx < nfree; ++bidx) {
          auto [l2, j2] = free_idx[bidx];
          j_free(aidx, bidx) = st.jac(l * pm1 + j, l2 * pm1 + j2);
        }
      }

      Eigen::MatrixXd lhs = -j_free;
      lhs.diagonal() += static_cast<double>(n) * delta_diag;
      lhs.diagonal().array() += cfg.ridge * (1.0 + lhs.trace() / nfree);
      Eigen::VectorXd rhs = r_free - static_cast<double>(n) * b_free;
      Eigen::VectorXd step = lhs.ldlt().solve(rhs);
      if (!step.allFinite())
        throw ConditioningError("penalized selection: singular penalized Jacobian");
      double cap = step.lpNorm<Eigen::Infinity>();
      if (cap > 0.5) step *= 0.5 / cap;

      ReducedLoadings next = reduced;
      for (int aidx = 0; aidx < nfree; ++aidx)
        next.beta_m1(free_idx[aidx].first, free_idx[aidx].second) += step[aidx];
      shrink_to_feasible(next);

      double change = 0.0;
      for (int aidx = 0; aidx < nfree; ++aidx) {
        auto [l, j] = free_idx[aidx];
        change = std::max(change, std::abs(next.beta_m1(l, j) - reduced.beta_m1(l, j)));
      }
      reduced = next;
      beta = expand(reduced);
      if (change < cfg.tol_outer) break;
    }
  }

  // hard-threshold, pin the support, renormalize through expand
  BoolMatrix support = mask;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < pm1; ++j) {
      if (!support(l, j + 1)) {
        reduced.beta_m1(l, j) = 0.0;
        continue;
      }
      if (std::abs(reduced.beta_m1(l, j)) < pen.zero_threshold) {
        reduced.beta_m1(l, j) = 0.0;
        support(l, j + 1) = false;
      }
    }
  beta = expand(reduced);
  rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
  coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg, &coeffs);
  DesignMatrix dm = build_design(data, beta, basis, rescalers);
  Eigen::VectorXd resid = data.y - dm.d_mat * coeffs.flat();

  VicmFit out = init;
  out.loadings = beta;
  out.reduced = reduced;
  out.coeffs = coeffs;
  out.basis = basis;
  out.rescalers = rescalers;
  out.residuals = resid;
  out.objective = check_loss_objective(resid, tau);
  out.converged = true;
  out.stop = StopReason::step_tolerance;
  out.tau = tau;
  out.bandwidth = bw.h;
  out.support = support;
  return out;
}

}  // namespace vicm
