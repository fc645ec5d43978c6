#include "vicm/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vicm/errors.hpp"

namespace vicm {

int default_knots(int n, int q) {
  if (n < 1 || q < 2) throw ParameterError("default_knots: need n >= 1 and q >= 2");
  return static_cast<int>(std::floor(std::pow(static_cast<double>(n), 1.0 / (2.0 * q + 1.0))));
}

std::vector<double> default_alpha1_grid() {
  std::vector<double> grid(20);
  double lo = std::log(0.001), hi = std::log(1.0);
  for (int i = 0; i < 20; ++i) grid[i] = std::exp(lo + (hi - lo) * i / 19.0);
  return grid;
}

std::vector<double> default_alpha2_grid() {
  std::vector<double> grid(20);
  double lo = std::log(0.01), hi = std::log(10.0);
  for (int i = 0; i < 20; ++i) grid[i] = std::exp(lo + (hi - lo) * i / 19.0);
  return grid;
}

double msic_cn(int d, int p) {
  return std::max(1.0, std::log(std::log(static_cast<double>(d) * p)));
}

double msic1_score(double loss, int df1, double cn, int n) {
  return std::log(loss) + df1 * cn * std::log(static_cast<double>(n)) / (2.0 * n);
}

double msic2_score(double loss, int df2, int jn, int n) {
  return std::log(loss) + df2 * jn * std::log(static_cast<double>(n)) / (2.0 * n);
}

BandwidthCvResult cv_bandwidth(const Dataset& data, double tau, const FitConfig& cfg,
                               const std::vector<double>& delta_grid) {
  const int n = data.n();
  if (n < 10) throw ParameterError("cv_bandwidth: need at least 10 observations");
  std::vector<double> grid = delta_grid;
  if (grid.empty())
    for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);

  // deterministic fold assignment from the config seed
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  const int kfolds = 5;
  std::vector<int> fold_of(n);
  for (int i = 0; i < n; ++i) fold_of[perm[i]] = i % kfolds;

  BandwidthCvResult res;
  res.h_star = cfg.resolve_bandwidth(n);
  double best_pe = std::numeric_limits<double>::max();

  for (double delta : grid) {
    double h = std::pow(static_cast<double>(n), -delta);
    double pe_sum = 0.0;
    bool valid = true;
    for (int v = 0; v < kfolds && valid; ++v) {
      std::vector<int> train, test;
      for (int i = 0; i < n; ++i) (fold_of[i] == v ? test : train).push_back(i);
      Dataset dtr;
      dtr.y.resize(train.size());
      dtr.x.resize(train.size(), data.d());
      dtr.z.resize(train.size(), data.p());
      for (std::size_t i = 0; i < train.size(); ++i) {
        dtr.y[i] = data.y[train[i]];
        dtr.x.row(i) = data.x.row(train[i]);
        dtr.z.row(i) = data.z.row(train[i]);
      }
      FitConfig fold_cfg = cfg;
      fold_cfg.bandwidth = h;
      try {
        VicmFit f = fit(dtr, tau, fold_cfg);
        for (int idx : test) {
          double pred = predict_quantile(f.loadings, f.coeffs, f.basis, f.rescalers,
                                         data.x.row(idx).transpose(),
                                         data.z.row(idx).transpose());
          pe_sum += check_loss(tau, data.y[idx] - pred);
        }
      } catch (const Error&) {
        valid = false;
      }
    }
    double pe = valid ? pe_sum / n : std::numeric_limits<double>::quiet_NaN();
    res.table.push_back({delta, h, pe, valid});
    if (valid && pe < best_pe) {
      best_pe = pe;
      res.h_star = h;
    }
  }
  return res;
}

Alpha1Result msic_alpha1(const Dataset& data, double tau, const FitConfig& cfg,
                         const ScadPenalty& pen_template,
                         const std::vector<double>& alpha_grid, const VicmFit& init) {
  if (alpha_grid.empty()) throw TuningError("msic_alpha1: empty grid");
  const int n = data.n();
  const double cn = msic_cn(data.d(), data.p());

  Alpha1Result res;
  res.alpha_star = alpha_grid.front();
  double best = std::numeric_limits<double>::max();
  bool any = false;

  for (double alpha : alpha_grid) {
    ScadPenalty pen = pen_template;
    pen.alpha = alpha;
    MsicRow row{alpha, std::numeric_limits<double>::quiet_NaN(), 0, false};
    try {
      VicmFit sel = select_loadings(data, tau, pen, cfg, init);
      int df = 0;
      for (int l = 0; l < sel.reduced.d(); ++l)
        for (int j = 0; j < sel.reduced.p() - 1; ++j)
          if (sel.reduced.beta_m1(l, j) != 0.0) ++df;
      double msic = msic1_score(sel.objective, df, cn, n);
      row = {alpha, msic, df, true};
      if (msic <= best) {  // ties prefer the sparser (larger) alpha
        best = msic;
        res.alpha_star = alpha;
        res.best_fit = sel;
        any = true;
      }
    } catch (const Error&) {
      // grid point recorded as failed
    }
    res.table.push_back(row);
  }
  if (!any) throw TuningError("msic_alpha1: every grid point failed");
  return res;
}

Alpha2Result msic_alpha2(const Dataset& data, double tau, const FitConfig& cfg,
                         const ScadPenalty& pen_template,
                         const std::vector<double>& alpha_grid, const VicmFit& sparse_fit,
                         double linearity_threshold) {
  if (alpha_grid.empty()) throw TuningError("msic_alpha2: empty grid");
  const int n = data.n();
  const int jn = sparse_fit.basis.dim();
  (void)cfg;

  Alpha2Result res;
  res.alpha_star = alpha_grid.front();
  double best = std::numeric_limits<double>::max();
  bool any = false;

  for (double alpha : alpha_grid) {
    ScadPenalty pen = pen_template;
    pen.alpha = alpha;
    MsicRow row{alpha, std::numeric_limits<double>::quiet_NaN(), 0, false};
    try {
      StructureReport rep = identify_linear(data, tau, pen, sparse_fit, linearity_threshold);
      int df2 = 0;
      for (bool lin : rep.is_linear)
        if (!lin) ++df2;
      // unsmoothed check loss at the penalized coefficients
      DesignMatrix dm = build_design(data, sparse_fit.loadings, sparse_fit.basis,
                                     sparse_fit.rescalers);
      double loss = check_loss_objective(data.y - dm.d_mat * rep.lambda_bar.flat(), tau);
      double msic = msic2_score(loss, df2, jn, n);
      row = {alpha, msic, df2, true};
      if (msic <= best) {
        best = msic;
        res.alpha_star = alpha;
        res.best_report = rep;
        any = true;
      }
    } catch (const Error&) {
    }
    res.table.push_back(row);
  }
  if (!any) throw TuningError("msic_alpha2: every grid point failed");
  return res;
}

}  // namespace vicm
