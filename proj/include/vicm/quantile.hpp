#pragma once

namespace vicm {

// Quantile loss rho_tau(u) = u * (tau - 1{u <= 0}).
double check_loss(double tau, double u);

// Score psi_tau(u) = tau - 1{u <= 0}; the zero point counts as negative.
double score(double tau, double u);

struct Bandwidth {
  explicit Bandwidth(double value);
  double h;
};

// Second-order Bartlett kernel, K(u) = 3/(4*sqrt(5)) (1 - u^2/5) on
// [-sqrt(5), sqrt(5)]. Kernel CDF and its antiderivative are closed form.
class BartlettKernel {
 public:
  static double value(double u);
  static double cdf(double x);
  // int_0^x cdf(s) ds, used by the smoothed check loss.
  static double cdf_integral(double x);
  static double support_halfwidth();
  static int order() { return 2; }
};

// Smoothed score psi_tau_h(u) = tau - 1 + G(u/h).
double smooth_score(double tau, const Bandwidth& bw, double u);

// Antiderivative of the smoothed score with value 0 at u = 0; converges
// to the quantile loss (up to a constant) as h -> 0.
double smooth_check_loss(double tau, const Bandwidth& bw, double u);

}  // namespace vicm
