#include "vicm/structure.hpp"

#include <algorithm>
#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

namespace {

void check_finite(double fx, const Eigen::VectorXd& x) {
  if (!std::isfinite(fx) || !x.allFinite())
    throw NumericError("quasi-Newton: non-finite objective or iterate");
}

}  // namespace

QuasiNewtonResult quasi_newton_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
    const Eigen::VectorXd& x0, const QuasiNewtonOpts& opts) {
  const int m = static_cast<int>(x0.size());
  Eigen::VectorXd x = x0;
  double fx = objective(x);
  Eigen::VectorXd g = gradient(x);
  check_finite(fx, x);
  if (!g.allFinite()) throw NumericError("quasi-Newton: non-finite gradient at start");

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(m, m);
  QuasiNewtonResult res;
  bool first = true;

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -(hinv * g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      dir = -g;
      slope = g.dot(dir);
      if (!(slope < 0.0)) break;  // gradient numerically zero
    }
    double dir_norm = dir.norm();
    double alpha_max = opts.step_cap * std::max(1.0, x.norm()) / std::max(dir_norm, 1e-300);

    // Wolfe search: bracket then bisect
    double alpha = std::min(1.0, alpha_max);
    double alpha_lo = 0.0, alpha_hi = alpha_max;
    double f_lo = fx;
    bool have_hi = false;
    double f_new = fx;
    Eigen::VectorXd x_new = x, g_new = g;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + alpha * dir;
      f_new = objective(x_new);
      if (!std::isfinite(f_new)) {
        alpha_hi = alpha;
        have_hi = true;
        alpha = 0.5 * (alpha_lo + alpha);
        continue;
      }
      if (f_new > fx + opts.wolfe_c1 * alpha * slope) {
        alpha_hi = alpha;
        have_hi = true;
      } else {
        g_new = gradient(x_new);
        double slope_new = g_new.dot(dir);
        if (slope_new < opts.wolfe_c2 * slope) {
          alpha_lo = alpha;
          f_lo = f_new;
          if (!have_hi) {
            double grown = std::min(2.0 * alpha, alpha_max);
            if (grown <= alpha * (1.0 + 1e-12)) {
              ok = true;  // pinned at the cap
              break;
            }
            alpha = grown;
            continue;
          }
        } else {
          ok = true;
          break;
        }
      }
      alpha = 0.5 * (alpha_lo + alpha_hi);
      if (alpha_hi - alpha_lo < 1e-14 * std::max(1.0, alpha_hi)) {
        // interval collapsed; accept the best sufficient-decrease point
        if (alpha_lo > 0.0) {
          alpha = alpha_lo;
          x_new = x + alpha * dir;
          f_new = f_lo;
          g_new = gradient(x_new);
          ok = true;
        }
        break;
      }
    }
    if (!ok || !(f_new <= fx)) break;  // line search failed; stop at current point

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (first) {
        hinv = (sy / yv.squaredNorm()) * Eigen::MatrixXd::Identity(m, m);
        first = false;
      }
      Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
      double rho = 1.0 / sy;
      hinv = (eye - rho * s * yv.transpose()) * hinv * (eye - rho * yv * s.transpose()) +
             rho * s * s.transpose();
    }
    x = x_new;
    fx = f_new;
    g = g_new;
    check_finite(fx, x);
  }

  res.x = x;
  res.fx = fx;
  res.iterations = iter;
  if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) res.converged = true;
  return res;
}

PenalizedSplineObjective::PenalizedSplineObjective(const Dataset& data, const VicmFit& fit,
                                                   double tau, const ScadPenalty& pen,
                                                   const Bandwidth& bw)
    : tau_(tau), pen_(pen), bw_(bw), d_(fit.loadings.d()), jn_(fit.basis.dim()) {
  DesignMatrix dm = build_design(data, fit.loadings, fit.basis, fit.rescalers);
  design_ = dm.d_mat;
  y_ = data.y;
  d_gram_ = curvature_gram(fit.basis);
}

double PenalizedSplineObjective::value(const Eigen::VectorXd& lambda_flat) const {
  Eigen::VectorXd resid = y_ - design_ * lambda_flat;
  double acc = 0.0;
  for (int i = 0; i < resid.size(); ++i) acc += smooth_check_loss(tau_, bw_, resid[i]);
  const double n = static_cast<double>(y_.size());
  for (int l = 0; l < d_; ++l) {
    Eigen::VectorXd lam = lambda_flat.segment(l * jn_, jn_);
    double quad = std::max(0.0, lam.dot(d_gram_ * lam));
    double norm_reg = std::sqrt(quad + pen_.kappa * pen_.kappa) - pen_.kappa;
    acc += n * scad_value(pen_, norm_reg);
  }
  return acc;
}

Eigen::VectorXd PenalizedSplineObjective::gradient(const Eigen::VectorXd& lambda_flat) const {
  Eigen::VectorXd resid = y_ - design_ * lambda_flat;
  Eigen::VectorXd psi(resid.size());
  for (int i = 0; i < resid.size(); ++i) psi[i] = smooth_score(tau_, bw_, resid[i]);
  Eigen::VectorXd grad = -design_.transpose() * psi;
  const double n = static_cast<double>(y_.size());
  for (int l = 0; l < d_; ++l) {
    Eigen::VectorXd lam = lambda_flat.segment(l * jn_, jn_);
    Eigen::VectorXd dl = d_gram_ * lam;
    double quad = std::max(0.0, lam.dot(dl));
    double root = std::sqrt(quad + pen_.kappa * pen_.kappa);
    double norm_reg = root - pen_.kappa;
    grad.segment(l * jn_, jn_) += n * scad_deriv(pen_, norm_reg) / root * dl;
  }
  return grad;
}

namespace {

// Column pair spanning the affine functions of the raw index within the
// spline block: values 1 and t at the Greville abscissae.
Eigen::MatrixXd affine_block_map(const SplineBasis& basis, const IndexRescaler& rescaler) {
  Eigen::VectorXd grev = basis.greville_abscissae();
  Eigen::MatrixXd map(basis.dim(), 2);
  for (int s = 0; s < basis.dim(); ++s) {
    map(s, 0) = 1.0;
    map(s, 1) = rescaler.unrescale(grev[s]);
  }
  return map;
}

}  // namespace

StructureReport identify_linear(const Dataset& data, double tau, const ScadPenalty& pen,
                                const VicmFit& sparse_fit, double linearity_threshold,
                                const QuasiNewtonOpts& opts) {
  const int d = sparse_fit.loadings.d();
  const int jn = sparse_fit.basis.dim();
  Bandwidth bw(sparse_fit.bandwidth > 0 ? sparse_fit.bandwidth : 1.0);

  PenalizedSplineObjective obj(data, sparse_fit, tau, pen, bw);
  auto fval = [&](const Eigen::VectorXd& v) { return obj.value(v); };
  auto fgrad = [&](const Eigen::VectorXd& v) { return obj.gradient(v); };
  QuasiNewtonResult qn = quasi_newton_minimize(fval, fgrad, sparse_fit.coeffs.flat(), opts);

  StructureReport rep;
  rep.lambda_bar = SplineCoeffs::from_flat(qn.x, d, jn);
  rep.converged = qn.converged || qn.iterations < opts.max_iter;

  const Eigen::MatrixXd& gram = obj.curvature();
  rep.d_norms.resize(d);
  for (int l = 0; l < d; ++l) {
    Eigen::VectorXd lam = rep.lambda_bar.lambda.row(l);
    rep.d_norms[l] = std::sqrt(std::max(0.0, lam.dot(gram * lam)));
  }

  double threshold = linearity_threshold;
  if (threshold < 0.0) {
    std::vector<double> positive;
    for (int l = 0; l < d; ++l)
      if (rep.d_norms[l] > 1e-6) positive.push_back(rep.d_norms[l]);
    if (positive.empty()) {
      threshold = 1e-2;
    } else {
      std::sort(positive.begin(), positive.end());
      double median = positive[positive.size() / 2];
      threshold = std::max(1e-2, 1e-2 * median);
    }
  }
  rep.threshold = threshold;

  rep.is_linear.resize(d);
  for (int l = 0; l < d; ++l) rep.is_linear[l] = rep.d_norms[l] < threshold;

  // joint refit: flagged blocks restricted to affine functions
  DesignMatrix dm = build_design(data, sparse_fit.loadings, sparse_fit.basis,
                                 sparse_fit.rescalers);
  std::vector<Eigen::MatrixXd> maps(d);
  int ncols = 0;
  for (int l = 0; l < d; ++l) {
    if (rep.is_linear[l]) {
      maps[l] = affine_block_map(sparse_fit.basis, sparse_fit.rescalers[l]);
      ncols += 2;
    } else {
      maps[l] = Eigen::MatrixXd::Identity(jn, jn);
      ncols += jn;
    }
  }
  Eigen::MatrixXd reduced_design(data.n(), ncols);
  int col = 0;
  for (int l = 0; l < d; ++l) {
    reduced_design.middleCols(col, maps[l].cols()) = dm.d_mat.middleCols(l * jn, jn) * maps[l];
    col += static_cast<int>(maps[l].cols());
  }
  FitConfig inner_cfg;
  inner_cfg.ridge = 1e-8;
  Eigen::VectorXd theta = solve_quantile_lp(data.y, reduced_design, tau, inner_cfg);

  rep.refit.lambda.resize(d, jn);
  rep.linear_coeffs.assign(d, {0.0, 0.0});
  col = 0;
  for (int l = 0; l < d; ++l) {
    int w = static_cast<int>(maps[l].cols());
    Eigen::VectorXd block = maps[l] * theta.segment(col, w);
    rep.refit.lambda.row(l) = block.transpose();
    if (rep.is_linear[l]) rep.linear_coeffs[l] = {theta[col], theta[col + 1]};
    col += w;
  }
  rep.objective = check_loss_objective(data.y - reduced_design * theta, tau);
  return rep;
}

}  // namespace vicm
