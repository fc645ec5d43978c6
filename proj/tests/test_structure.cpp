#include <doctest.h>

#include <random>

#include "oracle_helpers.hpp"
#include "vicm/errors.hpp"
#include "vicm/simlab.hpp"
#include "vicm/structure.hpp"
#include "vicm/tuning.hpp"

using namespace vicm;

TEST_CASE("quasi-Newton minimizer") {
  SUBCASE("quadratic bowl") {
    auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    auto g = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); };
    Eigen::VectorXd x0(2);
    x0 << 1.0, 1.0;
    QuasiNewtonOpts opts;
    opts.grad_tol = 1e-10;
    QuasiNewtonResult res = quasi_newton_minimize(f, g, x0, opts);
    CHECK(res.converged);
    CHECK(res.iterations <= 10);
    CHECK(res.x.norm() < 1e-8);
  }

  SUBCASE("Rosenbrock valley") {
    auto f = [](const Eigen::VectorXd& x) {
      double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
      return a * a + 100.0 * b * b;
    };
    auto g = [](const Eigen::VectorXd& x) {
      Eigen::VectorXd out(2);
      double b = x[1] - x[0] * x[0];
      out[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * b;
      out[1] = 200.0 * b;
      return out;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    QuasiNewtonOpts opts;
    opts.max_iter = 2000;
    opts.grad_tol = 1e-9;
    QuasiNewtonResult res = quasi_newton_minimize(f, g, x0, opts);
    CHECK(std::abs(res.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(res.x[1] - 1.0) < 1e-5);
    CHECK(res.fx <= f(x0));
  }

  SUBCASE("random convex quadratic with condition number 1e3") {
    const int dim = 20;
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd q(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) q(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    Eigen::MatrixXd orth = qr.householderQ();
    Eigen::VectorXd eigs(dim);
    for (int i = 0; i < dim; ++i)
      eigs[i] = std::pow(10.0, 3.0 * i / (dim - 1.0));  // 1 .. 1e3
    Eigen::MatrixXd a_mat = orth * eigs.asDiagonal() * orth.transpose();
    Eigen::VectorXd b(dim);
    for (int i = 0; i < dim; ++i) b[i] = gauss(rng);

    auto f = [&](const Eigen::VectorXd& x) {
      return 0.5 * x.dot(a_mat * x) - b.dot(x);
    };
    auto g = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(a_mat * x - b); };
    QuasiNewtonOpts opts;
    opts.max_iter = 2000;
    opts.grad_tol = 1e-9;
    QuasiNewtonResult res = quasi_newton_minimize(f, g, Eigen::VectorXd::Zero(dim), opts);
    double fstar = -0.5 * b.dot(a_mat.ldlt().solve(b));
    CHECK(res.fx - fstar < 1e-8 * std::max(1.0, std::abs(fstar)));
    CHECK(res.fx >= fstar - 1e-10);
  }

  SUBCASE("non-finite objective raises") {
    auto f = [](const Eigen::VectorXd& x) {
      return x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : x.squaredNorm();
    };
    auto g = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); };
    Eigen::VectorXd x0(1);
    x0 << 2.0;
    CHECK_THROWS_AS(quasi_newton_minimize(f, g, x0, {}), NumericError);
  }
}

namespace {

struct StructureCase {
  Dataset data;
  SimTruth truth;
  VicmFit fit_result;
};

StructureCase example3_case(int n, int pn, double sigma, std::uint64_t seed) {
  SimRng rng(seed);
  auto [data, truth] = gen_example3(n, pn, ErrorLaw{}, 0.5, rng, sigma);
  FitConfig cfg;
  cfg.seed = seed;
  StructureCase out{std::move(data), std::move(truth), VicmFit{}};
  out.fit_result = fit(out.data, 0.5, cfg, std::nullopt, &out.truth.support);
  return out;
}

}  // namespace

TEST_CASE("penalized spline objective and gradient") {
  StructureCase c = example3_case(300, 4, 0.2, 5);
  ScadPenalty pen;
  pen.alpha = 0.4;
  Bandwidth bw(c.fit_result.bandwidth);
  PenalizedSplineObjective obj(c.data, c.fit_result, 0.5, pen, bw);

  Eigen::VectorXd lam0 = c.fit_result.coeffs.flat();

  SUBCASE("alpha = 0 leaves only the smoothed loss") {
    ScadPenalty zero = pen;
    zero.alpha = 0.0;
    PenalizedSplineObjective plain(c.data, c.fit_result, 0.5, zero, bw);
    DesignMatrix dm = build_design(c.data, c.fit_result.loadings, c.fit_result.basis,
                                   c.fit_result.rescalers);
    Eigen::VectorXd resid = c.data.y - dm.d_mat * lam0;
    double direct = 0.0;
    for (int i = 0; i < resid.size(); ++i)
      direct += smooth_check_loss(0.5, bw, resid[i]);
    CHECK(plain.value(lam0) == doctest::Approx(direct).epsilon(1e-12));
  }

  SUBCASE("zero coefficients have zero penalty") {
    Eigen::VectorXd zero_lam = Eigen::VectorXd::Zero(lam0.size());
    ScadPenalty big = pen;
    big.alpha = 5.0;
    PenalizedSplineObjective strong(c.data, c.fit_result, 0.5, big, bw);
    ScadPenalty off = pen;
    off.alpha = 0.0;
    PenalizedSplineObjective none(c.data, c.fit_result, 0.5, off, bw);
    CHECK(strong.value(zero_lam) == doctest::Approx(none.value(zero_lam)).epsilon(1e-14));
  }

  SUBCASE("gradient matches central finite differences") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 0.3);
    Eigen::VectorXd point = lam0;
    for (int k = 0; k < point.size(); ++k) point[k] += gauss(rng);
    Eigen::VectorXd grad = obj.gradient(point);
    for (int k = 0; k < point.size(); ++k) {
      double h = 1e-6 * std::max(1.0, std::abs(point[k]));
      Eigen::VectorXd up = point, dn = point;
      up[k] += h;
      dn[k] -= h;
      double fd = (obj.value(up) - obj.value(dn)) / (2.0 * h);
      double denom = std::max(1.0, std::abs(fd));
      CHECK(std::abs(grad[k] - fd) / denom < 1e-5);
    }
  }

  SUBCASE("penalty is invariant to affine shifts of a block") {
    const Eigen::MatrixXd& gram = obj.curvature();
    Eigen::VectorXd grev = c.fit_result.basis.greville_abscissae();
    int jn = c.fit_result.basis.dim();
    Eigen::VectorXd affine(jn);
    for (int s = 0; s < jn; ++s) affine[s] = -0.4 + 2.2 * grev[s];
    Eigen::VectorXd lam_block = lam0.segment(jn, jn);
    double before = lam_block.dot(gram * lam_block);
    Eigen::VectorXd shifted = lam_block + affine;
    double after = shifted.dot(gram * shifted);
    CHECK(std::abs(before - after) < 1e-9 * std::max(1.0, before));
  }
}

TEST_CASE("noiseless structure identification flags the linear pair") {
  StructureCase c = example3_case(500, 4, 0.0, 23);
  FitConfig cfg;
  cfg.seed = 23;
  ScadPenalty pen;
  Alpha2Result res = msic_alpha2(c.data, 0.5, cfg, pen, default_alpha2_grid(),
                                 c.fit_result);
  REQUIRE(res.best_report.is_linear.size() == 4);
  CHECK(!res.best_report.is_linear[0]);
  CHECK(!res.best_report.is_linear[1]);
  CHECK(res.best_report.is_linear[2]);
  CHECK(res.best_report.is_linear[3]);

  // flagged blocks report their line in raw index units
  for (int l : {2, 3}) {
    double slope = res.best_report.linear_coeffs[l].second;
    double expect = l == 2 ? 0.5 : -0.5;
    CHECK(std::abs(slope - expect) < 0.05);
    CHECK(std::abs(res.best_report.linear_coeffs[l].first) < 0.05);
  }
}

TEST_CASE("alpha2 = 0 flags nothing on curved components") {
  SimRng rng(31);
  auto [data, truth] = gen_example1(400, ErrorLaw{}, rng, 0.3);
  FitConfig cfg;
  cfg.seed = 31;
  VicmFit f = fit(data, 0.5, cfg);
  ScadPenalty pen;
  pen.alpha = 0.0;
  StructureReport rep = identify_linear(data, 0.5, pen, f);
  for (int l = 0; l < 3; ++l) {
    CHECK(rep.d_norms[l] > 0.0);
    CHECK(!rep.is_linear[l]);
  }
}

TEST_CASE("penalization shrinks the curvature norm of a truly linear component") {
  SimRng rng(41);
  const int n = 400;
  Dataset data;
  data.y.resize(n);
  data.x = Eigen::MatrixXd::Ones(n, 1);
  data.z.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    data.z(i, 0) = rng.normal();
    data.z(i, 1) = rng.normal();
    double t = (data.z(i, 0) + data.z(i, 1)) / std::sqrt(2.0);
    data.y[i] = t + 0.2 * rng.normal();  // m(u) = u
  }
  FitConfig cfg;
  cfg.seed = 41;
  VicmFit f = fit(data, 0.5, cfg);
  ScadPenalty pen;
  Alpha2Result res = msic_alpha2(data, 0.5, cfg, pen, default_alpha2_grid(), f);

  Eigen::MatrixXd gram = curvature_gram(f.basis);
  Eigen::VectorXd lam_unpen = f.coeffs.lambda.row(0);
  double unpen_norm = std::sqrt(std::max(0.0, lam_unpen.dot(gram * lam_unpen)));
  CHECK(res.best_report.d_norms[0] < unpen_norm);
  CHECK(res.best_report.is_linear[0]);
}

TEST_CASE("linear-subspace starts stay flat on exactly linear data") {
  SimRng rng(47);
  const int n = 300;
  Dataset data;
  data.y.resize(n);
  data.x = Eigen::MatrixXd::Ones(n, 1);
  data.z.resize(n, 2);
  ReducedLoadings red;
  red.beta_m1.resize(1, 1);
  red.beta_m1(0, 0) = 0.6;
  Loadings beta = expand(red);
  for (int i = 0; i < n; ++i) {
    data.z(i, 0) = rng.normal();
    data.z(i, 1) = rng.normal();
    data.y[i] = 1.3 * data.z.row(i).dot(beta.beta.row(0)) - 0.2;  // exact line
  }
  FitConfig cfg;
  cfg.seed = 47;
  VicmFit f = fit(data, 0.5, cfg, beta);
  ScadPenalty pen;
  pen.alpha = 0.5;
  Bandwidth bw(f.bandwidth);
  PenalizedSplineObjective obj(data, f, 0.5, pen, bw);

  // start exactly inside the affine subspace
  Eigen::VectorXd grev = f.basis.greville_abscissae();
  Eigen::VectorXd start(f.basis.dim());
  for (int s = 0; s < f.basis.dim(); ++s)
    start[s] = -0.2 + 1.3 * f.rescalers[0].unrescale(grev[s]);
  auto fv = [&](const Eigen::VectorXd& v) { return obj.value(v); };
  auto gv = [&](const Eigen::VectorXd& v) { return obj.gradient(v); };
  QuasiNewtonResult qn = quasi_newton_minimize(fv, gv, start, {});
  const Eigen::MatrixXd& gram = obj.curvature();
  CHECK(qn.x.dot(gram * qn.x) < 1e-8);
  CHECK(qn.fx <= fv(start) + 1e-12);
}
