#pragma once

#include <vector>

#include "vicm/estimator.hpp"
#include "vicm/sparsity.hpp"
#include "vicm/structure.hpp"

namespace vicm {

// floor(n^{1/(2q+1)}) interior knots.
int default_knots(int n, int q);

struct BandwidthCvRow {
  double delta;
  double h;
  double pe;      // 5-fold prediction error, NaN when the point failed
  bool valid;
};

struct BandwidthCvResult {
  double h_star;
  std::vector<BandwidthCvRow> table;
};

BandwidthCvResult cv_bandwidth(const Dataset& data, double tau, const FitConfig& cfg,
                               const std::vector<double>& delta_grid = {});

struct MsicRow {
  double alpha;
  double msic;
  int df;
  bool valid;
};

struct Alpha1Result {
  double alpha_star;
  VicmFit best_fit;
  std::vector<MsicRow> table;
};

// MSIC over a grid of alpha_1 values; each grid point restarts the MM
// selection from `init`. Ties prefer the larger (sparser) alpha.
Alpha1Result msic_alpha1(const Dataset& data, double tau, const FitConfig& cfg,
                         const ScadPenalty& pen_template,
                         const std::vector<double>& alpha_grid, const VicmFit& init);

struct Alpha2Result {
  double alpha_star;
  StructureReport best_report;
  std::vector<MsicRow> table;
};

Alpha2Result msic_alpha2(const Dataset& data, double tau, const FitConfig& cfg,
                         const ScadPenalty& pen_template,
                         const std::vector<double>& alpha_grid, const VicmFit& sparse_fit,
                         double linearity_threshold = -1.0);

std::vector<double> default_alpha1_grid();
std::vector<double> default_alpha2_grid();
double msic_cn(int d, int p);
double msic1_score(double loss, int df1, double cn, int n);
double msic2_score(double loss, int df2, int jn, int n);

}  // namespace vicm
