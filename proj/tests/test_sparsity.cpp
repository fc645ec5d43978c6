#include <doctest.h>

#include "oracle_helpers.hpp"
#include "vicm/errors.hpp"
#include "vicm/simlab.hpp"
#include "vicm/sparsity.hpp"

using namespace vicm;

TEST_CASE("scad derivative branches") {
  ScadPenalty pen;
  pen.alpha = 0.1;
  CHECK(scad_deriv(pen, 0.05) == doctest::Approx(0.1));
  CHECK(scad_deriv(pen, 0.2) == doctest::Approx(0.1 * 17.0 / 27.0).epsilon(1e-12));
  CHECK(scad_deriv(pen, 0.2) == doctest::Approx(0.062963).epsilon(1e-4));
  CHECK(scad_deriv(pen, 0.5) == 0.0);
  CHECK(scad_deriv(pen, 0.37) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(scad_deriv(pen, -0.1), ParameterError);

  // continuity at the branch points
  CHECK(std::abs(scad_deriv(pen, 0.1 - 1e-13) - scad_deriv(pen, 0.1 + 1e-13)) < 1e-12);
  ScadPenalty bad = pen;
  bad.a = 2.0;
  CHECK_THROWS_AS(scad_deriv(bad, 0.1), ParameterError);
}

TEST_CASE("scad value integrates the derivative") {
  ScadPenalty pen;
  pen.alpha = 0.1;
  CHECK(scad_value(pen, 0.0) == 0.0);
  CHECK(scad_value(pen, 0.5) == doctest::Approx((3.7 + 1.0) * 0.01 / 2.0));
  CHECK(scad_value(pen, 0.5) == doctest::Approx(0.0235));
  CHECK(scad_value(pen, 0.1) == doctest::Approx(0.01));

  for (int k = 1; k <= 100; ++k) {
    double x = 0.6 * k / 100.0;
    double quad = oracle::simpson([&](double t) { return scad_deriv(pen, t); }, 0.0, x,
                                  2000);
    CHECK(std::abs(scad_value(pen, x) - quad) < 1e-10);
  }
}

namespace {

std::pair<Dataset, SimTruth> example3_data(int n, int pn, double sigma,
                                           std::uint64_t seed) {
  SimRng rng(seed);
  return gen_example3(n, pn, ErrorLaw{}, 0.5, rng, sigma);
}

}  // namespace

TEST_CASE("selection limits") {
  auto [data, truth] = example3_data(400, 5, 0.2, 3);
  FitConfig cfg;
  cfg.seed = 3;
  VicmFit base = fit(data, 0.5, cfg);

  SUBCASE("alpha = 0 reproduces the unpenalized fit") {
    ScadPenalty pen;
    pen.alpha = 0.0;
    VicmFit sel = select_loadings(data, 0.5, pen, cfg, base);
    CHECK((sel.loadings.beta - base.loadings.beta).cwiseAbs().maxCoeff() < 5e-4);
  }

  SUBCASE("huge alpha shrinks every free coordinate to zero") {
    ScadPenalty pen;
    pen.alpha = 50.0;
    VicmFit sel = select_loadings(data, 0.5, pen, cfg, base);
    for (int l = 0; l < sel.loadings.d(); ++l) {
      CHECK(sel.loadings.beta(l, 0) == doctest::Approx(1.0));
      for (int j = 1; j < sel.loadings.p(); ++j) CHECK(sel.loadings.beta(l, j) == 0.0);
    }
  }
}

TEST_CASE("noiseless selection recovers the exact support") {
  auto [data, truth] = example3_data(500, 6, 0.0, 11);
  FitConfig cfg;
  cfg.seed = 11;
  VicmFit base = fit(data, 0.5, cfg);
  ScadPenalty pen;
  pen.alpha = 0.05;
  VicmFit sel = select_loadings(data, 0.5, pen, cfg, base);

  int wrong = 0;
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < 6; ++j) {
      bool est_zero = sel.loadings.beta(l, j) == 0.0;
      if (est_zero == truth.support(l, j)) ++wrong;
    }
  CHECK(wrong == 0);

  // oracle behavior: the nonzero entries match the support-restricted fit
  VicmFit oracle_fit = fit(data, 0.5, cfg, std::nullopt, &truth.support);
  CHECK((sel.loadings.beta - oracle_fit.loadings.beta).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("zeroed coordinates stay zero under one further pass") {
  auto [data, truth] = example3_data(400, 5, 0.2, 13);
  FitConfig cfg;
  cfg.seed = 13;
  VicmFit base = fit(data, 0.5, cfg);
  ScadPenalty pen;
  pen.alpha = 0.08;
  VicmFit sel = select_loadings(data, 0.5, pen, cfg, base);
  REQUIRE(sel.has_mask());
  int zeros_before = 0;
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < 5; ++j)
      if (!sel.support(l, j)) ++zeros_before;
  REQUIRE(zeros_before > 0);

  VicmFit again = select_loadings(data, 0.5, pen, cfg, sel);
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < 5; ++j)
      if (!sel.support(l, j)) {
        CHECK(again.loadings.beta(l, j) == 0.0);
        CHECK(!again.support(l, j));
      }
}
