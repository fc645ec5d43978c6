#include "vicm/quantile.hpp"

#include <cmath>

#include "vicm/errors.hpp"

namespace vicm {

namespace {
const double kSqrt5 = std::sqrt(5.0);
const double kC = 3.0 / (4.0 * kSqrt5);

void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("tau must lie in (0,1)");
}
}  // namespace

double check_loss(double tau, double u) {
  require_tau(tau);
  return u * (tau - (u <= 0.0 ? 1.0 : 0.0));
}

double score(double tau, double u) {
  require_tau(tau);
  return tau - (u <= 0.0 ? 1.0 : 0.0);
}

Bandwidth::Bandwidth(double value) : h(value) {
  if (!(value > 0.0)) throw ParameterError("bandwidth must be positive");
}

double BartlettKernel::value(double u) {
  if (std::abs(u) > kSqrt5) return 0.0;
  return kC * (1.0 - u * u / 5.0);
}

double BartlettKernel::cdf(double x) {
  if (x <= -kSqrt5) return 0.0;
  if (x >= kSqrt5) return 1.0;
  return 0.5 + kC * (x - x * x * x / 15.0);
}

double BartlettKernel::cdf_integral(double x) {
  // piecewise antiderivative of cdf(), anchored at 0
  auto inner = [](double t) {
    return 0.5 * t + kC * (0.5 * t * t - t * t * t * t / 60.0);
  };
  if (x > kSqrt5) return inner(kSqrt5) + (x - kSqrt5);
  if (x < -kSqrt5) return inner(-kSqrt5);
  return inner(x);
}

double BartlettKernel::support_halfwidth() { return kSqrt5; }

double smooth_score(double tau, const Bandwidth& bw, double u) {
  require_tau(tau);
  return tau - 1.0 + BartlettKernel::cdf(u / bw.h);
}

double smooth_check_loss(double tau, const Bandwidth& bw, double u) {
  require_tau(tau);
  return (tau - 1.0) * u + bw.h * BartlettKernel::cdf_integral(u / bw.h);
}

}  // namespace vicm
