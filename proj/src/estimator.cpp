#include "vicm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vicm/errors.hpp"

namespace vicm {

double FitConfig::resolve_bandwidth(int n) const {
  if (bandwidth > 0.0) return bandwidth;
  return std::pow(static_cast<double>(n), -0.3);
}

int FitConfig::resolve_knots(int n) const {
  if (interior_knots >= 0) return interior_knots;
  return static_cast<int>(std::floor(std::pow(static_cast<double>(n), 1.0 / (2.0 * spline_order + 1.0))));
}

void FitConfig::validate() const {
  if (max_outer <= 0 || max_inner <= 0 || step_halving_max <= 0)
    throw ParameterError("fit config: iteration limits must be positive");
  if (!(tol_outer > 0.0) || !(tol_inner > 0.0) || !(ridge > 0.0))
    throw ParameterError("fit config: tolerances must be positive");
  if (spline_order < 2) throw ParameterError("fit config: spline order must be >= 2");
}

double check_loss_objective(const Eigen::VectorXd& residuals, double tau) {
  double acc = 0.0;
  for (int i = 0; i < residuals.size(); ++i) acc += check_loss(tau, residuals[i]);
  return acc;
}

namespace {

int find_deficient_block(const Eigen::MatrixXd& design, int jn) {
  const int d = static_cast<int>(design.cols()) / jn;
  int worst = -1;
  double worst_min = std::numeric_limits<double>::max();
  for (int l = 0; l < d; ++l) {
    Eigen::MatrixXd block = design.middleCols(l * jn, jn);
    Eigen::MatrixXd gram = block.transpose() * block;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    double mn = es.eigenvalues().minCoeff();
    if (mn < worst_min) {
      worst_min = mn;
      worst = l;
    }
  }
  return worst;
}

}  // namespace

namespace {

// Asymmetric Huber value of the check loss at smoothing floor eps; the
// IRLS weights slope/max(eps,|r|) majorize exactly this function.
double huber_objective(const Eigen::VectorXd& r, double tau, double eps) {
  double acc = 0.0;
  for (int i = 0; i < r.size(); ++i) {
    double a = std::abs(r[i]);
    double slope = r[i] > 0.0 ? tau : 1.0 - tau;
    acc += slope * (a <= eps ? a * a / (2.0 * eps) + eps / 2.0 : a);
  }
  return acc;
}

}  // namespace

Eigen::VectorXd solve_quantile_lp(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                                  double tau, const FitConfig& cfg,
                                  const Eigen::VectorXd* warm) {
  const int n = static_cast<int>(y.size());
  const int m = static_cast<int>(design.cols());
  if (n < 1 || m < 1) throw ParameterError("quantile solve: empty problem");

  Eigen::VectorXd lambda = (warm && warm->size() == m) ? *warm : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd best = lambda;
  double best_obj = check_loss_objective(y - design * lambda, tau);
  double obj_scale = 1.0 + std::abs(best_obj);

  auto solve_weighted = [&](const Eigen::VectorXd& w) {
    Eigen::MatrixXd g = design.transpose() * w.asDiagonal() * design;
    g.diagonal().array() += cfg.ridge * g.trace() / m;
    Eigen::VectorXd next = g.ldlt().solve(design.transpose() * w.cwiseProduct(y));
    if (!next.allFinite())
      throw SingularDesignError("quantile solve: design rank-deficient beyond ridge",
                                find_deficient_block(design, m));
    return next;
  };

  for (double eps = 1e-1; eps > 0.99e-8; eps *= 0.1) {
    double prev = huber_objective(y - design * lambda, tau, eps);
    for (int it = 0; it < cfg.max_inner; ++it) {
      Eigen::VectorXd r = y - design * lambda;
      Eigen::VectorXd w(n);
      for (int i = 0; i < n; ++i) {
        double slope = r[i] > 0.0 ? tau : 1.0 - tau;
        w[i] = slope / std::max(eps, std::abs(r[i]));
      }
      Eigen::VectorXd next = solve_weighted(w);
      double cur = huber_objective(y - design * next, tau, eps);
      // the majorize-minimize step cannot increase the Huber objective;
      // halve toward the old point if rounding says otherwise
      for (int half = 0; half < 30 && cur > prev; ++half) {
        next = 0.5 * (next + lambda);
        cur = huber_objective(y - design * next, tau, eps);
      }
      lambda = next;
      double check = check_loss_objective(y - design * lambda, tau);
      if (check < best_obj) {
        best_obj = check;
        best = lambda;
      }
      if (prev - cur < cfg.tol_inner * obj_scale) break;
      prev = cur;
    }
  }

  // vertex polish: an optimal basic solution interpolates m observations;
  // try the m residuals nearest zero
  {
    Eigen::VectorXd r = y - design * best;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(r[a]) < std::abs(r[b]); });
    if (n >= m) {
      Eigen::MatrixXd sub(m, m);
      Eigen::VectorXd ysub(m);
      for (int k = 0; k < m; ++k) {
        sub.row(k) = design.row(order[k]);
        ysub[k] = y[order[k]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
      if (lu.isInvertible()) {
        Eigen::VectorXd cand = lu.solve(ysub);
        double obj = check_loss_objective(y - design * cand, tau);
        if (obj < best_obj) {
          best_obj = obj;
          best = cand;
        }
      }
    }
  }
  return best;
}

SplineCoeffs fit_spline_coeffs(const Dataset& data, const Loadings& loadings,
                               const SplineBasis& basis,
                               const std::vector<IndexRescaler>& rescalers, double tau,
                               const FitConfig& cfg, const SplineCoeffs* warm) {
  DesignMatrix dm = build_design(data, loadings, basis, rescalers);
  Eigen::VectorXd warm_flat;
  const Eigen::VectorXd* warm_ptr = nullptr;
  if (warm) {
    warm_flat = warm->flat();
    warm_ptr = &warm_flat;
  }
  Eigen::VectorXd lambda;
  try {
    lambda = solve_quantile_lp(data.y, dm.d_mat, tau, cfg, warm_ptr);
  } catch (const SingularDesignError&) {
    throw SingularDesignError("inner spline fit: singular design",
                              find_deficient_block(dm.d_mat, basis.dim()));
  }
  return SplineCoeffs::from_flat(lambda, data.d(), basis.dim());
}

namespace {

// Per-observation pieces shared by the smoothed estimating equations and
// their least-squares analogue used for initialization.
struct EngineMode {
  bool least_squares = false;
  double h = 0.0;
};

Eigen::VectorXd deriv_curve_at(const SplineBasis& basis, const SplineCoeffs& coeffs,
                               const std::vector<IndexRescaler>& rescalers,
                               const Eigen::MatrixXd& u, int i, int d) {
  Eigen::VectorXd mdot(d);
  for (int l = 0; l < d; ++l) {
    mdot[l] = basis.eval_deriv(u(i, l)).dot(coeffs.lambda.row(l)) * rescalers[l].deriv_scale();
  }
  return mdot;
}

// Implicit differentiation of the smoothed inner first-order condition.
// `exact` keeps the score-weighted dD/dbeta correction; the truncated
// variant is the projection form the asymptotics use.
Eigen::MatrixXd sensitivity_impl(const Dataset& data, const Loadings& loadings,
                                 const SplineCoeffs& coeffs, const SplineBasis& basis,
                                 const std::vector<IndexRescaler>& rescalers, double tau,
                                 const EngineMode& mode, double ridge, bool exact) {
  const int n = data.n(), d = data.d(), p = data.p(), jn = basis.dim();
  const int pm1 = p - 1;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d * jn, d * pm1);
  if (pm1 == 0) return s;

  DesignMatrix dm = build_design(data, loadings, basis, rescalers);
  Eigen::VectorXd resid = data.y - dm.d_mat * coeffs.flat();

  Eigen::VectorXd w(n), psi(n);
  Bandwidth bw(mode.least_squares ? 1.0 : mode.h);
  for (int i = 0; i < n; ++i) {
    if (mode.least_squares) {
      w[i] = 1.0;
      psi[i] = resid[i];
    } else {
      w[i] = BartlettKernel::value(resid[i] / mode.h) / mode.h;
      psi[i] = smooth_score(tau, bw, resid[i]);
    }
  }
  double wsum = w.sum();
  if (wsum <= 0.0) return s;  // kernel support empty: flat inner problem

  Eigen::MatrixXd gram = dm.d_mat.transpose() * w.asDiagonal() * dm.d_mat;
  gram.diagonal().array() += ridge * gram.trace() / (d * jn);
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);

  std::vector<Eigen::MatrixXd> jac_l(d);
  ReducedLoadings red = reduce(loadings);
  for (int l = 0; l < d; ++l) jac_l[l] = loading_jacobian(red.beta_m1.row(l));

  for (int l = 0; l < d; ++l) {
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d * jn, pm1);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd grad_idx = jac_l[l].transpose() * data.z.row(i).transpose();
      if (w[i] != 0.0) {
        double mdot = basis.eval_deriv(dm.u(i, l)).dot(coeffs.lambda.row(l)) *
                      rescalers[l].deriv_scale();
        Eigen::VectorXd c = mdot * data.x(i, l) * grad_idx;
        rhs.noalias() += w[i] * dm.d_mat.row(i).transpose() * c.transpose();
      }
      if (exact && psi[i] != 0.0) {
        // block l of dD_i/dbeta_{l,-1}
        Eigen::VectorXd dblock = basis.eval_deriv(dm.u(i, l)) * data.x(i, l) *
                                 rescalers[l].deriv_scale();
        rhs.block(l * jn, 0, jn, pm1).noalias() -= psi[i] * dblock * grad_idx.transpose();
      }
    }
    s.middleCols(l * pm1, pm1) = -solver.solve(rhs);
  }
  if (!s.allFinite())
    throw SingularDesignError("coefficient sensitivity: singular weighted Gram",
                              find_deficient_block(dm.d_mat, jn));
  return s;
}

struct AssembledEE {
  EEState state;
  DesignMatrix dm;
};

AssembledEE assemble_impl(const Dataset& data, const Loadings& loadings,
                          const SplineCoeffs& coeffs, const SplineBasis& basis,
                          const std::vector<IndexRescaler>& rescalers, double tau,
                          const EngineMode& mode, bool include_sensitivity,
                          const Eigen::MatrixXd* frozen_sensitivity, double ridge) {
  const int n = data.n(), d = data.d(), p = data.p();
  const int pm1 = p - 1;
  AssembledEE out;
  out.dm = build_design(data, loadings, basis, rescalers);
  EEState& st = out.state;
  st.residuals = data.y - out.dm.d_mat * coeffs.flat();

  st.psi.resize(n);
  st.w.resize(n);
  Bandwidth bw(mode.least_squares ? 1.0 : mode.h);
  for (int i = 0; i < n; ++i) {
    if (mode.least_squares) {
      st.psi[i] = st.residuals[i];
      st.w[i] = 1.0;
    } else {
      st.psi[i] = smooth_score(tau, bw, st.residuals[i]);
      st.w[i] = BartlettKernel::value(st.residuals[i] / mode.h) / mode.h;
    }
  }

  st.a.resize(n, d * pm1);
  st.r_ee = Eigen::VectorXd::Zero(d * pm1);
  st.jac = Eigen::MatrixXd::Zero(d * pm1, d * pm1);
  if (pm1 == 0) return out;

  // The projection (truncated) sensitivity keeps sum_i w_i D_i a_i' = 0,
  // which is what makes the Fisher matrix below the exact curvature of the
  // profile; the score-weighted correction belongs to coeff_sensitivity.
  Eigen::MatrixXd sens;
  if (frozen_sensitivity) {
    sens = *frozen_sensitivity;
  } else if (include_sensitivity) {
    sens = sensitivity_impl(data, loadings, coeffs, basis, rescalers, tau, mode, ridge,
                            false);
  } else {
    sens = Eigen::MatrixXd::Zero(d * basis.dim(), d * pm1);
  }

  ReducedLoadings red = reduce(loadings);
  std::vector<Eigen::MatrixXd> jac_l(d);
  for (int l = 0; l < d; ++l) jac_l[l] = loading_jacobian(red.beta_m1.row(l));

  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd mdot = deriv_curve_at(basis, coeffs, rescalers, out.dm.u, i, d);
    Eigen::VectorXd a_i = sens.transpose() * out.dm.d_mat.row(i).transpose();
    for (int l = 0; l < d; ++l) {
      a_i.segment(l * pm1, pm1) +=
          mdot[l] * data.x(i, l) * (jac_l[l].transpose() * data.z.row(i).transpose());
    }
    st.a.row(i) = a_i.transpose();
    st.r_ee.noalias() += st.psi[i] * a_i;
    if (st.w[i] != 0.0) st.jac.noalias() -= st.w[i] * a_i * a_i.transpose();
  }
  st.jac = (0.5 * (st.jac + st.jac.transpose())).eval();
  return out;
}

}  // namespace

Eigen::MatrixXd coeff_sensitivity(const Dataset& data, const Loadings& loadings,
                                  const SplineCoeffs& coeffs, const SplineBasis& basis,
                                  const std::vector<IndexRescaler>& rescalers, double tau,
                                  const Bandwidth& bw, double ridge, bool exact) {
  EngineMode mode;
  mode.h = bw.h;
  return sensitivity_impl(data, loadings, coeffs, basis, rescalers, tau, mode, ridge, exact);
}

EEState assemble_ee(const Dataset& data, const Loadings& loadings, const SplineCoeffs& coeffs,
                    const SplineBasis& basis, const std::vector<IndexRescaler>& rescalers,
                    double tau, const Bandwidth& bw, bool include_sensitivity,
                    const Eigen::MatrixXd* frozen_sensitivity, double ridge) {
  EngineMode mode;
  mode.h = bw.h;
  return assemble_impl(data, loadings, coeffs, basis, rescalers, tau, mode, include_sensitivity,
                       frozen_sensitivity, ridge)
      .state;
}

namespace {

struct OuterResult {
  ReducedLoadings reduced;
  SplineCoeffs coeffs;
  std::vector<IndexRescaler> rescalers;
  Eigen::VectorXd residuals;
  double objective = 0.0;
  bool converged = false;
  StopReason stop = StopReason::max_outer;
  std::vector<TraceEntry> trace;
};

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

std::vector<std::pair<int, int>> free_coords(int d, int p, const BoolMatrix* mask) {
  std::vector<std::pair<int, int>> out;
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p - 1; ++j)
      if (!mask || (*mask)(l, j + 1)) out.emplace_back(l, j);
  return out;
}

double ls_objective(const Eigen::VectorXd& resid) { return 0.5 * resid.squaredNorm(); }

SplineCoeffs inner_solve(const Dataset& data, const Loadings& loadings,
                         const SplineBasis& basis,
                         const std::vector<IndexRescaler>& rescalers, double tau,
                         const FitConfig& cfg, const EngineMode& mode,
                         const SplineCoeffs* warm) {
  if (!mode.least_squares) return fit_spline_coeffs(data, loadings, basis, rescalers, tau, cfg, warm);
  DesignMatrix dm = build_design(data, loadings, basis, rescalers);
  const int m = static_cast<int>(dm.d_mat.cols());
  Eigen::MatrixXd g = dm.d_mat.transpose() * dm.d_mat;
  g.diagonal().array() += cfg.ridge * g.trace() / m;
  Eigen::VectorXd lambda = g.ldlt().solve(dm.d_mat.transpose() * data.y);
  if (!lambda.allFinite())
    throw SingularDesignError("least-squares inner fit: singular design",
                              find_deficient_block(dm.d_mat, basis.dim()));
  return SplineCoeffs::from_flat(lambda, data.d(), basis.dim());
}

OuterResult outer_loop(const Dataset& data, double tau, const FitConfig& cfg,
                       const SplineBasis& basis, const ReducedLoadings& start,
                       const BoolMatrix* mask, const EngineMode& mode, int max_outer) {
  const int d = data.d(), p = data.p();
  OuterResult res;
  res.reduced = start;
  shrink_to_feasible(res.reduced);
  if (mask) {
    for (int l = 0; l < d; ++l)
      for (int j = 0; j < p - 1; ++j)
        if (!(*mask)(l, j + 1)) res.reduced.beta_m1(l, j) = 0.0;
  }

  auto objective_of = [&](const Eigen::VectorXd& resid) {
    return mode.least_squares ? ls_objective(resid) : check_loss_objective(resid, tau);
  };

  Loadings beta = expand(res.reduced);
  res.rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
  res.coeffs = inner_solve(data, beta, basis, res.rescalers, tau, cfg, mode, nullptr);
  {
    DesignMatrix dm = build_design(data, beta, basis, res.rescalers);
    res.residuals = data.y - dm.d_mat * res.coeffs.flat();
  }
  res.objective = objective_of(res.residuals);
  res.trace.push_back({0, res.objective, 0.0});

  auto free_idx = free_coords(d, p, mask);
  const int nfree = static_cast<int>(free_idx.size());
  if (nfree == 0) {
    res.converged = true;
    res.stop = StopReason::no_free_loadings;
    return res;
  }

  for (int iter = 1; iter <= max_outer; ++iter) {
    AssembledEE ae = assemble_impl(data, beta, res.coeffs, basis, res.rescalers, tau, mode,
                                   true, nullptr, cfg.ridge);
    Eigen::VectorXd r_free(nfree);
    Eigen::MatrixXd j_free(nfree, nfree);
    for (int a = 0; a < nfree; ++a) {
      int ia = free_idx[a].first * (p - 1) + free_idx[a].second;
      r_free[a] = ae.state.r_ee[ia];
      for (int b = 0; b < nfree; ++b) {
        int ib = free_idx[b].first * (p - 1) + free_idx[b].second;
        j_free(a, b) = ae.state.jac(ia, ib);
      }
    }
    Eigen::MatrixXd neg_j = -j_free;
    neg_j.diagonal().array() += cfg.ridge;
    Eigen::VectorXd delta = neg_j.ldlt().solve(r_free);
    if (!delta.allFinite())
      throw ConditioningError("estimating-equation Jacobian singular after ridge; try a larger bandwidth");
    double cap = delta.lpNorm<Eigen::Infinity>();
    if (cap > 1.0) delta *= 1.0 / cap;

    bool accepted = false;
    double step = 1.0;
    ReducedLoadings cand = res.reduced;
    SplineCoeffs cand_coeffs = res.coeffs;
    std::vector<IndexRescaler> cand_rescalers = res.rescalers;
    Eigen::VectorXd cand_resid;
    double cand_obj = 0.0;
    for (int halving = 0; halving < cfg.step_halving_max; ++halving, step *= 0.5) {
      cand = res.reduced;
      for (int a = 0; a < nfree; ++a)
        cand.beta_m1(free_idx[a].first, free_idx[a].second) += step * delta[a];
      shrink_to_feasible(cand);
      Loadings cand_beta = expand(cand);
      try {
        cand_rescalers = fit_rescalers(data, cand_beta, cfg.rescale_margin);
      } catch (const DegenerateRangeError&) {
        continue;  // index collapsed; shorten the step
      }
      cand_coeffs = inner_solve(data, cand_beta, basis, cand_rescalers, tau, cfg, mode,
                                &res.coeffs);
      DesignMatrix dm = build_design(data, cand_beta, basis, cand_rescalers);
      cand_resid = data.y - dm.d_mat * cand_coeffs.flat();
      cand_obj = objective_of(cand_resid);
      if (cand_obj <= res.objective + 1e-10 * (1.0 + std::abs(res.objective))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.converged = true;
      res.stop = StopReason::no_improving_step;
      break;
    }

    double step_norm = 0.0;
    for (int a = 0; a < nfree; ++a) {
      double change = std::abs(cand.beta_m1(free_idx[a].first, free_idx[a].second) -
                               res.reduced.beta_m1(free_idx[a].first, free_idx[a].second));
      step_norm = std::max(step_norm, change);
    }
    res.reduced = cand;
    beta = expand(res.reduced);
    res.rescalers = cand_rescalers;
    res.coeffs = cand_coeffs;
    res.residuals = cand_resid;
    res.objective = cand_obj;
    res.trace.push_back({iter, res.objective, step_norm});
    if (step_norm < cfg.tol_outer) {
      res.converged = true;
      res.stop = StopReason::step_tolerance;
      break;
    }
  }
  return res;
}

ReducedLoadings normalized_start(Eigen::MatrixXd rows, const BoolMatrix* mask) {
  const int d = static_cast<int>(rows.rows());
  const int p = static_cast<int>(rows.cols());
  for (int l = 0; l < d; ++l) {
    if (mask)
      for (int j = 0; j < p; ++j)
        if (!(*mask)(l, j)) rows(l, j) = 0.0;
    rows(l, 0) = std::abs(rows(l, 0));
    double nrm = rows.row(l).norm();
    if (nrm < 1e-12) {
      rows.row(l).setZero();
      rows(l, 0) = 1.0;
    } else {
      rows.row(l) /= nrm;
    }
    if (rows(l, 0) < 1e-6) {
      // keep strictly inside the feasible set
      rows(l, 0) = 1e-3;
      rows.row(l) /= rows.row(l).norm();
    }
  }
  Loadings full;
  full.beta = rows;
  return reduce(full);
}

ReducedLoadings initialize_loadings(const Dataset& data, double tau, const FitConfig& cfg,
                                    const SplineBasis& basis, const BoolMatrix* mask) {
  const int d = data.d(), p = data.p();
  EngineMode ls_mode;
  ls_mode.least_squares = true;

  std::vector<ReducedLoadings> starts;
  starts.push_back(normalized_start(Eigen::MatrixXd::Ones(d, p), mask));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < cfg.multistart; ++k) {
    Eigen::MatrixXd rows(d, p);
    for (int l = 0; l < d; ++l)
      for (int j = 0; j < p; ++j) rows(l, j) = gauss(rng);
    starts.push_back(normalized_start(rows, mask));
  }

  double best_obj = std::numeric_limits<double>::max();
  ReducedLoadings best = starts.front();
  for (const auto& s0 : starts) {
    ReducedLoadings candidate = s0;
    try {
      OuterResult ls = outer_loop(data, tau, cfg, basis, s0, mask, ls_mode, cfg.init_ls_iters);
      candidate = ls.reduced;
    } catch (const Error&) {
      // fall back to the raw start
    }
    try {
      Loadings beta = expand(candidate);
      auto rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
      SplineCoeffs coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg);
      DesignMatrix dm = build_design(data, beta, basis, rescalers);
      double obj = check_loss_objective(data.y - dm.d_mat * coeffs.flat(), tau);
      if (obj < best_obj) {
        best_obj = obj;
        best = candidate;
      }
    } catch (const Error&) {
      continue;
    }
  }
  return best;
}

}  // namespace

Eigen::VectorXd estimating_equation(const Dataset& data, const ReducedLoadings& reduced,
                                    double tau, const FitConfig& cfg) {
  Loadings beta = expand(reduced);
  SplineBasis basis = make_basis(cfg.spline_order, cfg.resolve_knots(data.n()), cfg.placement);
  auto rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
  SplineCoeffs coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg);
  Bandwidth bw(cfg.resolve_bandwidth(data.n()));
  return assemble_ee(data, beta, coeffs, basis, rescalers, tau, bw, true, nullptr, cfg.ridge)
      .r_ee;
}

Eigen::MatrixXd ee_jacobian(const Dataset& data, const ReducedLoadings& reduced, double tau,
                            const FitConfig& cfg) {
  Loadings beta = expand(reduced);
  SplineBasis basis = make_basis(cfg.spline_order, cfg.resolve_knots(data.n()), cfg.placement);
  auto rescalers = fit_rescalers(data, beta, cfg.rescale_margin);
  SplineCoeffs coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg);
  Bandwidth bw(cfg.resolve_bandwidth(data.n()));
  return assemble_ee(data, beta, coeffs, basis, rescalers, tau, bw, true, nullptr, cfg.ridge)
      .jac;
}

Eigen::VectorXd VicmFit::predict(const Dataset& data) const {
  Eigen::VectorXd out(data.n());
  for (int i = 0; i < data.n(); ++i)
    out[i] = predict_quantile(loadings, coeffs, basis, rescalers,
                              data.x.row(i).transpose(), data.z.row(i).transpose());
  return out;
}

VicmFit fit(const Dataset& data, double tau, const FitConfig& cfg,
            const std::optional<Loadings>& init,
            const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* mask) {
  data.validate();
  cfg.validate();
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("tau must lie in (0,1)");

  const int n = data.n(), d = data.d(), p = data.p();
  const int nn = cfg.resolve_knots(n);
  SplineBasis basis = make_basis(cfg.spline_order, nn, KnotPlacement::uniform);
  const int jn = basis.dim();
  if (n <= d * jn + d * (p - 1))
    throw InsufficientDataError("insufficient observations for the requested basis");

  EngineMode qr_mode;
  qr_mode.h = cfg.resolve_bandwidth(n);

  ReducedLoadings start = [&] {
    if (init) {
      init->validate();
      return reduce(*init);
    }
    return initialize_loadings(data, tau, cfg, basis, mask);
  }();

  if (cfg.placement == KnotPlacement::sample_quantiles) {
    Loadings beta0 = expand(start);
    auto rescalers0 = fit_rescalers(data, beta0, cfg.rescale_margin);
    DesignMatrix dm = build_design(data, beta0, basis, rescalers0);
    Eigen::VectorXd pooled(dm.u.size());
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < d; ++l) pooled[k++] = dm.u(i, l);
    basis = make_basis(cfg.spline_order, nn, KnotPlacement::sample_quantiles, pooled);
  }

  OuterResult res = outer_loop(data, tau, cfg, basis, start, mask, qr_mode, cfg.max_outer);

  VicmFit out{Loadings{}, res.reduced, res.coeffs, basis, res.rescalers,
              res.residuals, res.objective, res.converged, res.stop, res.trace,
              tau, qr_mode.h, {}};
  out.loadings = expand(res.reduced);
  if (mask) out.support = *mask;
  return out;
}

std::vector<std::pair<double, double>> eval_curve(const VicmFit& fit, int l,
                                                  const std::vector<double>& u_raw) {
  if (l < 0 || l >= fit.loadings.d()) throw ParameterError("eval_curve: component out of range");
  std::vector<std::pair<double, double>> out;
  out.reserve(u_raw.size());
  for (double t : u_raw) {
    double u = fit.rescalers[l].rescale(t);
    out.emplace_back(t, fit.basis.eval(u).dot(fit.coeffs.lambda.row(l)));
  }
  return out;
}

}  // namespace vicm
