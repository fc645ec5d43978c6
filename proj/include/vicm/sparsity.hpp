#pragma once

#include "vicm/estimator.hpp"

namespace vicm {

struct ScadPenalty {
  double alpha = 0.0;
  double a = 3.7;
  double kappa = 1e-6;
  double zero_threshold = 1e-4;

  void validate() const;
};

// SCAD derivative: alpha on [0, alpha], linear decay to zero at a*alpha.
double scad_deriv(const ScadPenalty& pen, double x);

// Penalty value by closed-form integration of the derivative.
double scad_value(const ScadPenalty& pen, double x);

// Penalized estimating equations solved by the majorize-minimize update,
// refitting the spline coefficients after every step. Entries below
// zero_threshold are pinned to exact zero and the rows renormalized.
VicmFit select_loadings(const Dataset& data, double tau, const ScadPenalty& pen,
                        const FitConfig& cfg, const VicmFit& init);

}  // namespace vicm
