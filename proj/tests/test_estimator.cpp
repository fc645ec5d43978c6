#include <doctest.h>

#include <random>

#include "oracle_helpers.hpp"
#include "vicm/errors.hpp"
#include "vicm/estimator.hpp"
#include "vicm/simlab.hpp"

using namespace vicm;

namespace {

FitConfig quick_cfg() {
  FitConfig cfg;
  cfg.seed = 99;
  return cfg;
}

// single-component dataset with a smooth index effect
Dataset toy_dataset(int n, std::uint64_t seed, int p, double noise) {
  SimRng rng(seed);
  Dataset data;
  data.y.resize(n);
  data.x = Eigen::MatrixXd::Ones(n, 1);
  data.z.resize(n, p);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta[j] = 1.0 / std::sqrt(static_cast<double>(p));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.z(i, j) = rng.normal();
    double t = data.z.row(i).dot(beta);
    data.y[i] = std::sin(t) + 0.5 * t + noise * rng.normal();
  }
  return data;
}

}  // namespace

TEST_CASE("lp oracle sanity: median of three points") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 10.0;
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(3, 1);
  // objective at the median (2): 0.5*(|1-2| + |10-2|) = 4.5
  CHECK(oracle::quantile_lp_objective(y, design, 0.5) == doctest::Approx(4.5).epsilon(1e-10));
}

TEST_CASE("inner solver reaches the LP optimum on random instances") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> utau(0.2, 0.8);
  FitConfig cfg = quick_cfg();
  for (int inst = 0; inst < 20; ++inst) {
    int n = 30;
    int m = 2 + inst % 5;  // up to 6 columns
    Eigen::MatrixXd design(n, m);
    Eigen::VectorXd y(n);
    design.col(0).setOnes();
    for (int i = 0; i < n; ++i) {
      for (int j = 1; j < m; ++j) design(i, j) = gauss(rng);
      y[i] = gauss(rng) * 2.0;
    }
    double tau = utau(rng);
    Eigen::VectorXd lambda = solve_quantile_lp(y, design, tau, cfg);
    double obj = check_loss_objective(y - design * lambda, tau);
    double lp = oracle::quantile_lp_objective(y, design, tau);
    CHECK(obj >= lp - 1e-9);  // the LP value is a true lower bound
    CHECK(obj - lp < 1e-6);
  }
}

TEST_CASE("intercept-only fit is the sample quantile") {
  Eigen::VectorXd y(9);
  y << 3.1, -0.4, 2.2, 0.7, 5.5, 1.1, -2.0, 0.9, 4.0;
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(9, 1);
  FitConfig cfg = quick_cfg();
  {
    Eigen::VectorXd lambda = solve_quantile_lp(y, design, 0.5, cfg);
    std::vector<double> sorted(y.data(), y.data() + 9);
    std::sort(sorted.begin(), sorted.end());
    CHECK(lambda[0] == doctest::Approx(sorted[4]).epsilon(1e-6));
  }
  {
    // symmetric pair: any point of [-a, a] attains objective a
    Eigen::VectorXd y2(2);
    double a = 1.8;
    y2 << -a, a;
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd lambda = solve_quantile_lp(y2, d2, 0.5, cfg);
    CHECK(check_loss_objective(y2 - d2 * lambda, 0.5) == doctest::Approx(a).epsilon(1e-7));
    CHECK(lambda[0] >= -a - 1e-6);
    CHECK(lambda[0] <= a + 1e-6);
  }
}

TEST_CASE("coefficient sensitivity") {
  SUBCASE("constant fitted functions give a zero matrix") {
    Dataset data = toy_dataset(50, 5, 2, 0.1);
    Loadings beta;
    beta.beta.resize(1, 2);
    beta.beta << 0.8, 0.6;
    SplineBasis basis = make_basis(4, 1);
    auto rescalers = fit_rescalers(data, beta, 0.01);
    SplineCoeffs coeffs;
    coeffs.lambda = Eigen::MatrixXd::Constant(1, basis.dim(), 0.7);
    Eigen::MatrixXd s = coeff_sensitivity(data, beta, coeffs, basis, rescalers, 0.5,
                                          Bandwidth(0.4), 1e-8, /*exact=*/false);
    CHECK(s.cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("matches implicit differentiation of the smoothed inner problem") {
    const double tau = 0.5, h = 0.5;
    Dataset data = toy_dataset(80, 8, 2, 0.3);
    SplineBasis basis = make_basis(4, 1);
    ReducedLoadings red;
    red.beta_m1.resize(1, 1);
    red.beta_m1(0, 0) = 0.55;
    Loadings beta = expand(red);
    auto rescalers = fit_rescalers(data, beta, 0.01);

    auto smoothed_lambda = [&](double b1) {
      ReducedLoadings r2;
      r2.beta_m1.resize(1, 1);
      r2.beta_m1(0, 0) = b1;
      Loadings b2 = expand(r2);
      DesignMatrix dm = build_design(data, b2, basis, rescalers);
      return oracle::smoothed_inner_solution(
          data.y, dm.d_mat, tau, h,
          [](double t, double hh, double u) { return smooth_score(t, Bandwidth(hh), u); },
          [](double u) { return BartlettKernel::value(u); });
    };

    Eigen::VectorXd lam0 = smoothed_lambda(0.55);
    SplineCoeffs coeffs = SplineCoeffs::from_flat(lam0, 1, basis.dim());
    Eigen::MatrixXd s = coeff_sensitivity(data, beta, coeffs, basis, rescalers, tau,
                                          Bandwidth(h));

    double step = 1e-4;
    Eigen::VectorXd fd = (smoothed_lambda(0.55 + step) - smoothed_lambda(0.55 - step)) /
                         (2.0 * step);
    double denom = std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
    CHECK((s.col(0) - fd).cwiseAbs().maxCoeff() / denom < 5e-2);
  }

  SUBCASE("invariant to uniform weight scaling") {
    // scaling the residuals' kernel weights through the bandwidth keeps the
    // solve unchanged only through the trace-proportional ridge; verified
    // against a direct recomputation with hand-scaled weights
    Dataset data = toy_dataset(60, 21, 3, 0.2);
    ReducedLoadings red;
    red.beta_m1.resize(1, 2);
    red.beta_m1 << 0.4, 0.3;
    Loadings beta = expand(red);
    SplineBasis basis = make_basis(4, 1);
    auto rescalers = fit_rescalers(data, beta, 0.01);
    FitConfig cfg = quick_cfg();
    SplineCoeffs coeffs = fit_spline_coeffs(data, beta, basis, rescalers, 0.5, cfg);

    DesignMatrix dm = build_design(data, beta, basis, rescalers);
    Eigen::VectorXd resid = data.y - dm.d_mat * coeffs.flat();
    auto sens_with_weights = [&](const Eigen::VectorXd& w) {
      const int m = basis.dim();
      Eigen::MatrixXd gram = dm.d_mat.transpose() * w.asDiagonal() * dm.d_mat;
      gram.diagonal().array() += 1e-8 * gram.trace() / m;
      Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 2);
      Eigen::MatrixXd jac = loading_jacobian(red.beta_m1.row(0));
      for (int i = 0; i < data.n(); ++i) {
        double mdot = basis.eval_deriv(dm.u(i, 0)).dot(coeffs.lambda.row(0)) *
                      rescalers[0].deriv_scale();
        Eigen::VectorXd c = mdot * data.x(i, 0) * (jac.transpose() * data.z.row(i).transpose());
        rhs += w[i] * dm.d_mat.row(i).transpose() * c.transpose();
      }
      return Eigen::MatrixXd(-gram.ldlt().solve(rhs));
    };
    Eigen::VectorXd w(data.n());
    for (int i = 0; i < data.n(); ++i)
      w[i] = BartlettKernel::value(resid[i] / 0.4) / 0.4;
    Eigen::MatrixXd s1 = sens_with_weights(w);
    Eigen::MatrixXd s2 = sens_with_weights(3.7 * w);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd s_lib = coeff_sensitivity(data, beta, coeffs, basis, rescalers, 0.5,
                                              Bandwidth(0.4), 1e-8, /*exact=*/false);
    CHECK((s_lib - s1).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("estimating equation special states") {
  Dataset data = toy_dataset(40, 77, 2, 0.0);
  SplineBasis basis = make_basis(4, 1);
  ReducedLoadings red;
  red.beta_m1.resize(1, 1);
  red.beta_m1(0, 0) = 1.0 / std::sqrt(2.0) - 0.05;
  Loadings beta = expand(red);
  auto rescalers = fit_rescalers(data, beta, 0.01);
  Bandwidth bw(0.2);

  SUBCASE("saturated residuals give R = tau * sum(a)") {
    // push the curve far below the data so every residual exceeds the support
    SplineCoeffs coeffs;
    coeffs.lambda = Eigen::MatrixXd::Constant(1, basis.dim(), -100.0);
    EEState st = assemble_ee(data, beta, coeffs, basis, rescalers, 0.75, bw);
    CHECK(st.w.cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(st.a.cols());
    for (int i = 0; i < data.n(); ++i) expected += 0.75 * st.a.row(i).transpose();
    CHECK((st.r_ee - expected).cwiseAbs().maxCoeff() < 1e-10);
    // Jacobian vanishes outside the kernel support
    CHECK(st.jac.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("exact cancellation at a symmetric zero-residual state") {
    // mirror-symmetric data generated exactly from a representable curve
    const int half = 30;
    Dataset sym;
    sym.x = Eigen::MatrixXd::Ones(2 * half, 1);
    sym.z.resize(2 * half, 2);
    sym.y.resize(2 * half);
    SimRng rng(3);
    ReducedLoadings r0;
    r0.beta_m1.resize(1, 1);
    r0.beta_m1(0, 0) = 0.6;
    Loadings b0 = expand(r0);
    for (int i = 0; i < half; ++i) {
      sym.z(i, 0) = rng.normal();
      sym.z(i, 1) = rng.normal();
      sym.z.row(half + i) = -sym.z.row(i);
    }
    auto rsym = fit_rescalers(sym, b0, 0.01);
    // coefficients of a straight line through the Greville points
    SplineCoeffs lam;
    lam.lambda.resize(1, basis.dim());
    Eigen::VectorXd grev = basis.greville_abscissae();
    for (int s = 0; s < basis.dim(); ++s)
      lam.lambda(0, s) = 2.0 * rsym[0].unrescale(grev[s]);
    for (int i = 0; i < 2 * half; ++i)
      sym.y[i] = basis.eval(rsym[0].rescale(sym.z.row(i).dot(b0.beta.row(0))))
                     .dot(lam.lambda.row(0));
    EEState st = assemble_ee(sym, b0, lam, basis, rsym, 0.5, bw);
    CHECK(st.residuals.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(st.r_ee.lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("estimating equation matches the smoothed profile gradient") {
  const double tau = 0.5, h = 0.5;
  const int n = 40;
  SimRng rng(15);
  Dataset data;
  data.y.resize(n);
  data.x.resize(n, 2);
  data.z.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = 1.0;
    data.x(i, 1) = rng.normal();
    for (int j = 0; j < 3; ++j) data.z(i, j) = rng.normal();
    data.y[i] = std::sin(data.z(i, 0)) + 0.4 * data.z(i, 1) * data.x(i, 1) +
                0.3 * rng.normal();
  }
  SplineBasis basis = make_basis(4, 1);
  ReducedLoadings red;
  red.beta_m1.resize(2, 2);
  red.beta_m1 << 0.3, 0.25, 0.2, 0.45;
  Loadings beta = expand(red);
  auto rescalers = fit_rescalers(data, beta, 0.01);

  auto profile = [&](const Eigen::VectorXd& flat) {
    ReducedLoadings r2 = ReducedLoadings::from_flat(flat, 2, 3);
    Loadings b2 = expand(r2);
    DesignMatrix dm = build_design(data, b2, basis, rescalers);
    Eigen::VectorXd lam = oracle::smoothed_inner_solution(
        data.y, dm.d_mat, tau, h,
        [](double t, double hh, double u) { return smooth_score(t, Bandwidth(hh), u); },
        [](double u) { return BartlettKernel::value(u); });
    Eigen::VectorXd resid = data.y - dm.d_mat * lam;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += smooth_check_loss(tau, Bandwidth(h), resid[i]);
    return acc;
  };

  Eigen::VectorXd flat0 = red.flat();
  DesignMatrix dm0 = build_design(data, beta, basis, rescalers);
  Eigen::VectorXd lam0 = oracle::smoothed_inner_solution(
      data.y, dm0.d_mat, tau, h,
      [](double t, double hh, double u) { return smooth_score(t, Bandwidth(hh), u); },
      [](double u) { return BartlettKernel::value(u); });
  SplineCoeffs coeffs = SplineCoeffs::from_flat(lam0, 2, basis.dim());
  EEState st = assemble_ee(data, beta, coeffs, basis, rescalers, tau, Bandwidth(h));

  // R is minus the profile gradient
  for (int k = 0; k < flat0.size(); ++k) {
    double step = 1e-4;
    Eigen::VectorXd fp = flat0, fm = flat0;
    fp[k] += step;
    fm[k] -= step;
    double fd = (profile(fp) - profile(fm)) / (2.0 * step);
    double denom = std::max(std::abs(fd), 1e-3 * st.r_ee.cwiseAbs().maxCoeff());
    CHECK(std::abs(-st.r_ee[k] - fd) / denom < 5e-2);
  }
}

TEST_CASE("ee jacobian against frozen-state finite differences") {
  const double tau = 0.5, h = 0.5;
  Dataset data = toy_dataset(60, 44, 3, 0.3);
  SplineBasis basis = make_basis(4, 1);
  ReducedLoadings red;
  red.beta_m1.resize(1, 2);
  red.beta_m1 << 0.45, 0.25;
  Loadings beta = expand(red);
  auto rescalers = fit_rescalers(data, beta, 0.01);
  FitConfig cfg = quick_cfg();
  SplineCoeffs coeffs = fit_spline_coeffs(data, beta, basis, rescalers, tau, cfg);
  Eigen::MatrixXd sens = coeff_sensitivity(data, beta, coeffs, basis, rescalers, tau,
                                           Bandwidth(h), 1e-8, /*exact=*/false);

  EEState st0 = assemble_ee(data, beta, coeffs, basis, rescalers, tau, Bandwidth(h), true,
                            &sens);
  auto r_at = [&](const Eigen::VectorXd& flat) {
    ReducedLoadings r2 = ReducedLoadings::from_flat(flat, 1, 3);
    Loadings b2 = expand(r2);
    return assemble_ee(data, b2, coeffs, basis, rescalers, tau, Bandwidth(h), true, &sens)
        .r_ee;
  };
  Eigen::VectorXd flat0 = red.flat();
  Eigen::MatrixXd fd(2, 2);
  for (int k = 0; k < 2; ++k) {
    double step = 1e-5;
    Eigen::VectorXd fp = flat0, fm = flat0;
    fp[k] += step;
    fm[k] -= step;
    fd.col(k) = (r_at(fp) - r_at(fm)) / (2.0 * step);
  }
  double denom = fd.cwiseAbs().maxCoeff();
  CHECK((st0.jac - fd).cwiseAbs().maxCoeff() / denom < 0.15);

  // rank bound: sum of n rank-one terms
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(st0.jac);
  int nonzero = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()[i]) > 1e-12 * denom) ++nonzero;
  CHECK(nonzero <= std::min<int>(data.n(), 2));
}

TEST_CASE("fit with p = 1 reduces to a single inner fit") {
  SimRng rng(8);
  const int n = 120;
  Dataset data;
  data.y.resize(n);
  data.x = Eigen::MatrixXd::Ones(n, 1);
  data.z.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    data.z(i, 0) = rng.normal();
    data.y[i] = std::cos(data.z(i, 0)) + 0.1 * rng.normal();
  }
  VicmFit f = fit(data, 0.5, quick_cfg());
  CHECK(f.converged);
  CHECK(f.stop == StopReason::no_free_loadings);
  CHECK(f.loadings.beta(0, 0) == 1.0);
  CHECK(f.trace.size() == 1);
}

TEST_CASE("noiseless example 1 recovers loadings and curves") {
  SimRng rng(101);
  auto [data, truth] = gen_example1(500, ErrorLaw{}, rng, 0.0);
  FitConfig cfg = quick_cfg();
  cfg.interior_knots = 10;  // approximation-error-only regime needs resolution
  VicmFit f = fit(data, 0.5, cfg);
  CHECK((f.loadings.beta - truth.beta0.beta).cwiseAbs().maxCoeff() < 0.02);
  Eigen::VectorXd rase = rase_components(data, f.loadings, f.coeffs, f.basis, f.rescalers,
                                         truth);
  for (int l = 0; l < 3; ++l) CHECK(rase[l] < 0.02);

  // central 80% of the third index range: the fitted curve tracks u^2
  auto curve_err = [&](int l, std::function<double(double)> m) {
    double lo = f.rescalers[l].lo(), hi = f.rescalers[l].hi();
    double span = hi - lo;
    double worst = 0.0;
    for (int g = 0; g <= 100; ++g) {
      double t = lo + 0.1 * span + 0.8 * span * g / 100.0;
      auto pts = eval_curve(f, l, {t});
      worst = std::max(worst, std::abs(pts[0].second - m(t)));
    }
    return worst;
  };
  CHECK(curve_err(2, [](double u) { return u * u; }) < 0.05);
}

TEST_CASE("single-run example 1 estimate lands near the truth") {
  SimRng rng(7);
  auto [data, truth] = gen_example1(500, ErrorLaw{}, rng, 0.5);
  VicmFit f = fit(data, 0.5, quick_cfg());
  CHECK((f.loadings.beta - truth.beta0.beta).cwiseAbs().maxCoeff() < 0.15);
  for (int l = 0; l < 3; ++l) {
    CHECK(f.loadings.beta.row(l).norm() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(f.loadings.beta(l, 0) > 0.0);
  }
  // accepted outer steps never increase the profile objective
  for (std::size_t k = 1; k < f.trace.size(); ++k)
    CHECK(f.trace[k].objective <= f.trace[k - 1].objective + 1e-7);
}

TEST_CASE("shifting y moves only the intercept curve") {
  Dataset data = toy_dataset(150, 55, 3, 0.2);
  // add a second non-intercept component so the test is not vacuous
  SimRng rng(56);
  Dataset both;
  both.y = data.y;
  both.x.resize(data.n(), 2);
  both.x.col(0).setOnes();
  both.x.col(1).resize(data.n());
  both.z = data.z;
  for (int i = 0; i < data.n(); ++i) {
    both.x(i, 1) = rng.normal();
    both.y[i] += 0.8 * both.x(i, 1) * std::tanh(both.z(i, 0));
  }
  FitConfig cfg = quick_cfg();
  VicmFit base = fit(both, 0.5, cfg);
  Dataset shifted = both;
  const double c = 3.25;
  shifted.y.array() += c;
  VicmFit moved = fit(shifted, 0.5, cfg);

  CHECK((base.loadings.beta - moved.loadings.beta).cwiseAbs().maxCoeff() < 1e-6);
  for (int l = 0; l < 2; ++l) {
    double lo = base.rescalers[l].lo(), hi = base.rescalers[l].hi();
    for (int g = 0; g <= 20; ++g) {
      double t = lo + (hi - lo) * g / 20.0;
      double m0 = eval_curve(base, l, {t})[0].second;
      double m1 = eval_curve(moved, l, {t})[0].second;
      double expect = l == 0 ? c : 0.0;
      CHECK(std::abs(m1 - m0 - expect) < 1e-6);
    }
  }
}

TEST_CASE("insufficient observations raise an error") {
  Dataset data = toy_dataset(7, 2, 3, 0.1);  // need n > d*J_n + d(p-1) = 7
  CHECK_THROWS_AS(fit(data, 0.5, quick_cfg()), InsufficientDataError);
}

TEST_CASE("config validation and defaults") {
  FitConfig cfg;
  CHECK(cfg.resolve_bandwidth(500) == doctest::Approx(std::pow(500.0, -0.3)));
  CHECK(cfg.resolve_knots(500) == 1);
  CHECK(cfg.resolve_knots(1500) == 2);
  cfg.max_outer = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
