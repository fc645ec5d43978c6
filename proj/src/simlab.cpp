#include "vicm/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "vicm/errors.hpp"

namespace vicm {

ErrorLaw error_law_from_string(const std::string& name) {
  ErrorLaw law;
  if (name == "sn") law.kind = ErrorKind::sn;
  else if (name == "t3") law.kind = ErrorKind::t3;
  else if (name == "la") law.kind = ErrorKind::la;
  else if (name == "mn") law.kind = ErrorKind::mn;
  else throw ParameterError("unknown error law: " + name);
  return law;
}

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::sn: return "sn";
    case ErrorKind::t3: return "t3";
    case ErrorKind::la: return "la";
    case ErrorKind::mn: return "mn";
  }
  return "?";
}

double SimRng::uniform() {
  // 53-bit mantissa in (0,1); never returns 0
  std::uint64_t bits = eng_();
  double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  return u;
}

double SimRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::acos(-1.0) * u2;
  spare_ = r * std::sin(angle);
  have_spare_ = true;
  return r * std::cos(angle);
}

double sample_error(const ErrorLaw& law, SimRng& rng) {
  switch (law.kind) {
    case ErrorKind::sn:
      return rng.normal();
    case ErrorKind::t3: {
      double z = rng.normal();
      double c1 = rng.normal(), c2 = rng.normal(), c3 = rng.normal();
      double chi2 = c1 * c1 + c2 * c2 + c3 * c3;
      return z / std::sqrt(chi2 / 3.0);
    }
    case ErrorKind::la: {
      double v = rng.uniform() - 0.5;
      return v >= 0.0 ? -std::log(1.0 - 2.0 * v) : std::log(1.0 + 2.0 * v);
    }
    case ErrorKind::mn: {
      double pick = rng.uniform();
      double sd = pick < 1.0 - law.mn_rho ? law.mn_sigma1 : law.mn_sigma2;
      return sd * rng.normal();
    }
  }
  throw ParameterError("sample_error: bad law");
}

namespace {
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double t3_cdf(double x) {
  // closed form for 3 degrees of freedom
  double s = x / std::sqrt(3.0);
  return 0.5 + (1.0 / std::acos(-1.0)) * (s / (1.0 + s * s) + std::atan(s));
}
}  // namespace

double error_cdf(const ErrorLaw& law, double x) {
  switch (law.kind) {
    case ErrorKind::sn:
      return norm_cdf(x);
    case ErrorKind::t3:
      return t3_cdf(x);
    case ErrorKind::la:
      return x < 0 ? 0.5 * std::exp(x) : 1.0 - 0.5 * std::exp(-x);
    case ErrorKind::mn:
      return (1.0 - law.mn_rho) * norm_cdf(x / law.mn_sigma1) +
             law.mn_rho * norm_cdf(x / law.mn_sigma2);
  }
  throw ParameterError("error_cdf: bad law");
}

double quantile_shift(const ErrorLaw& law, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("quantile_shift: tau in (0,1)");
  if (law.kind == ErrorKind::la)
    return tau < 0.5 ? std::log(2.0 * tau) : -std::log(2.0 * (1.0 - tau));
  // bisection on the cdf (monotone, continuous)
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (error_cdf(law, mid) < tau)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Symmetric square root of the equicorrelation matrix (1-rho) I + rho 11'.
Eigen::MatrixXd equicorr_sqrt(int k, double rho) {
  double a = std::sqrt(1.0 - rho);
  double b = (std::sqrt(1.0 - rho + k * rho) - a) / k;
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(k, k, b);
  m.diagonal().array() += a;
  return m;
}

Eigen::VectorXd correlated_normals(const Eigen::MatrixXd& root, SimRng& rng) {
  Eigen::VectorXd g(root.cols());
  for (int j = 0; j < g.size(); ++j) g[j] = rng.normal();
  return root * g;
}

}  // namespace

std::pair<Dataset, SimTruth> gen_example1(int n, const ErrorLaw& law, SimRng& rng,
                                          double sigma) {
  if (n < 1) throw ParameterError("gen_example1: n >= 1");
  const int d = 3, p = 3;
  Dataset data;
  data.y.resize(n);
  data.x.resize(n, d);
  data.z.resize(n, p);

  SimTruth truth;
  truth.beta0.beta.resize(d, p);
  double s14 = std::sqrt(14.0);
  truth.beta0.beta.row(0) << 2 / s14, 1 / s14, 3 / s14;
  truth.beta0.beta.row(1) << 3 / s14, 2 / s14, 1 / s14;
  truth.beta0.beta.row(2) << 2 / s14, 3 / s14, 1 / s14;
  truth.m = {[](double u) { return std::exp(u) / 5.0; },
             [](double u) { return std::sin(0.5 * std::acos(-1.0) * u); },
             [](double u) { return u * u; }};
  truth.support = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, p, true);
  truth.linear = {false, false, false};

  Eigen::MatrixXd root_x = equicorr_sqrt(2, 0.5);
  Eigen::MatrixXd root_z = equicorr_sqrt(3, 0.5);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = 1.0;
    Eigen::VectorXd gx = correlated_normals(root_x, rng);
    data.x(i, 1) = gx[0];
    data.x(i, 2) = gx[1];
    data.z.row(i) = correlated_normals(root_z, rng).transpose();
    double mean = 0.0;
    for (int l = 0; l < d; ++l)
      mean += truth.m[l](data.z.row(i).dot(truth.beta0.beta.row(l))) * data.x(i, l);
    data.y[i] = mean + sigma * sample_error(law, rng);
  }
  return {std::move(data), std::move(truth)};
}

Eigen::Vector3d ex2_beta(int l, double tau) {
  double scale = std::sqrt(5.0 * tau * tau + tau);
  Eigen::Vector3d v;
  double root = std::sqrt(tau);
  if (l == 0) v << root, tau, 2.0 * tau;
  else if (l == 1) v << tau, root, 2.0 * tau;
  else if (l == 2) v << 2.0 * tau, tau, root;
  else throw ParameterError("ex2_beta: l out of range");
  return v / scale;
}

double ex2_m(int l, double tau, double u) {
  if (l == 0) return std::sqrt(tau) * u;
  if (l == 1) return tau * std::sin(0.5 * std::acos(-1.0) * u);
  if (l == 2) return -0.5 * std::log(1.0 - tau) * u * u;
  throw ParameterError("ex2_m: l out of range");
}

std::pair<Dataset, SimTruth> gen_example2(int n, SimRng& rng, double tau) {
  if (n < 1) throw ParameterError("gen_example2: n >= 1");
  const int d = 3, p = 3;
  Dataset data;
  data.y.resize(n);
  data.x.resize(n, d);
  data.z.resize(n, p);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = 1.0;
    data.x(i, 1) = rng.normal();
    data.x(i, 2) = rng.normal();
    for (int j = 0; j < p; ++j) data.z(i, j) = rng.uniform();
    double u_level = rng.uniform();
    double y = 0.0;
    for (int l = 0; l < d; ++l)
      y += ex2_m(l, u_level, data.z.row(i).dot(ex2_beta(l, u_level))) * data.x(i, l);
    data.y[i] = y;
  }
  SimTruth truth;
  truth.beta0.beta.resize(d, p);
  for (int l = 0; l < d; ++l) truth.beta0.beta.row(l) = ex2_beta(l, tau).transpose();
  truth.m = {[tau](double u) { return ex2_m(0, tau, u); },
             [tau](double u) { return ex2_m(1, tau, u); },
             [tau](double u) { return ex2_m(2, tau, u); }};
  truth.support = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, p, true);
  truth.linear = {true, false, false};
  return {std::move(data), std::move(truth)};
}

std::pair<Dataset, SimTruth> gen_example3(int n, int pn, const ErrorLaw& law, double tau,
                                          SimRng& rng, double sigma) {
  if (pn < 3) throw ParameterError("gen_example3: p_n must be at least 3");
  const int d = 4;
  Dataset data;
  data.y.resize(n);
  data.x.resize(n, d);
  data.z.resize(n, pn);

  SimTruth truth;
  truth.beta0.beta = Eigen::MatrixXd::Zero(d, pn);
  truth.beta0.beta.row(0).head(3) << std::sqrt(2.0) / 2, std::sqrt(3.0) / 3, std::sqrt(6.0) / 6;
  truth.beta0.beta.row(1).head(3) << std::sqrt(3.0) / 3, std::sqrt(2.0) / 2, std::sqrt(6.0) / 6;
  double s50 = std::sqrt(50.0);
  truth.beta0.beta.row(2).head(3) << 3 / s50, 4 / s50, 5 / s50;
  truth.beta0.beta.row(3).head(3) << 4 / s50, 3 / s50, 5 / s50;
  truth.m = {[](double u) { return 0.2 * u * u * u; },
             [](double u) { return std::cos(0.5 * std::acos(-1.0) * u); },
             [](double u) { return 0.5 * u; },
             [](double u) { return -0.5 * u; }};
  truth.support = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, pn, false);
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < 3; ++j) truth.support(l, j) = true;
  truth.linear = {false, false, true, true};

  double c_tau = quantile_shift(law, tau);
  Eigen::MatrixXd root_x = equicorr_sqrt(d - 1, 0.5);
  Eigen::MatrixXd root_z = equicorr_sqrt(pn, 0.5);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = 1.0;
    Eigen::VectorXd gx = correlated_normals(root_x, rng);
    for (int l = 1; l < d; ++l) data.x(i, l) = gx[l - 1];
    data.z.row(i) = correlated_normals(root_z, rng).transpose();
    double mean = 0.0;
    for (int l = 0; l < d; ++l)
      mean += truth.m[l](data.z.row(i).dot(truth.beta0.beta.row(l))) * data.x(i, l);
    data.y[i] = mean + sigma * (sample_error(law, rng) - c_tau);
  }
  return {std::move(data), std::move(truth)};
}

int SimDesign::resolved_pn() const {
  if (pn > 0) return pn;
  if (example == 3) return static_cast<int>(std::floor(std::cbrt(static_cast<double>(n))));
  return 3;
}

double SimDesign::resolved_sigma() const {
  if (sigma >= 0.0) return sigma;
  return example == 3 ? 0.2 : 0.5;
}

Pipeline pipeline_from_string(const std::string& name) {
  if (name == "fit_only" || name == "fit") return Pipeline::fit_only;
  if (name == "select") return Pipeline::select;
  if (name == "select+identify" || name == "select_identify") return Pipeline::select_identify;
  throw ParameterError("unknown pipeline: " + name);
}

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  // splitmix64 over the (seed, rep) pair
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(rep) + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

SimTruth design_truth(const SimDesign& design) {
  SimRng rng(1);
  switch (design.example) {
    case 1:
      return gen_example1(1, design.error, rng, 0.0).second;
    case 2:
      return gen_example2(1, rng, design.tau).second;
    case 3:
      return gen_example3(1, design.resolved_pn(), design.error, design.tau, rng, 0.0).second;
    default:
      throw ParameterError("design_truth: bad example");
  }
}

Eigen::VectorXd rase_components(const Dataset& data, const Loadings& beta,
                                const SplineCoeffs& coeffs, const SplineBasis& basis,
                                const std::vector<IndexRescaler>& rescalers,
                                const SimTruth& truth) {
  const int n = data.n(), d = beta.d();
  Eigen::VectorXd out(d);
  for (int l = 0; l < d; ++l) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double t = data.z.row(i).dot(beta.beta.row(l));
      double m_hat = basis.eval(rescalers[l].rescale(t)).dot(coeffs.lambda.row(l));
      double diff = m_hat - truth.m[l](t);
      acc += diff * diff;
    }
    out[l] = std::sqrt(acc / n);
  }
  return out;
}

namespace {

RepRecord run_one(const SimDesign& design, Pipeline pipeline, int rep) {
  RepRecord rec;
  SimRng rng(replication_seed(design.seed, rep));
  Dataset data;
  SimTruth truth;
  try {
    switch (design.example) {
      case 1: {
        auto pair = gen_example1(design.n, design.error, rng, design.resolved_sigma());
        data = std::move(pair.first);
        truth = std::move(pair.second);
        break;
      }
      case 2: {
        auto pair = gen_example2(design.n, rng, design.tau);
        data = std::move(pair.first);
        truth = std::move(pair.second);
        break;
      }
      case 3: {
        auto pair = gen_example3(design.n, design.resolved_pn(), design.error, design.tau,
                                 rng, design.resolved_sigma());
        data = std::move(pair.first);
        truth = std::move(pair.second);
        break;
      }
      default:
        throw ParameterError("run_replications: bad example");
    }

    FitConfig cfg;
    cfg.seed = replication_seed(design.seed, rep) ^ 0x5851f42d4c957f2dULL;
    VicmFit ufit = fit(data, design.tau, cfg);

    Bandwidth bw(ufit.bandwidth);
    CovarianceReport cov = cov_loadings(data, ufit, design.tau, bw);
    const int d = data.d(), p = data.p();
    rec.beta_hat = ufit.loadings.beta;
    rec.asd.resize(d, p);
    for (int l = 0; l < d; ++l)
      for (int j = 0; j < p; ++j) rec.asd(l, j) = cov.asd_full[l * p + j];
    rec.rase = rase_components(data, ufit.loadings, ufit.coeffs, ufit.basis, ufit.rescalers, truth);

    if (pipeline != Pipeline::fit_only) {
      rec.mse_u = (ufit.loadings.beta - truth.beta0.beta).squaredNorm();

      VicmFit ofit = fit(data, design.tau, cfg, std::nullopt, &truth.support);
      rec.beta_oracle = ofit.loadings.beta;
      rec.mse_o = (ofit.loadings.beta - truth.beta0.beta).squaredNorm();

      ScadPenalty pen;
      Alpha1Result a1 = msic_alpha1(data, design.tau, cfg, pen, default_alpha1_grid(), ufit);
      rec.alpha1 = a1.alpha_star;
      rec.beta_pen = a1.best_fit.loadings.beta;
      rec.mse_p = (a1.best_fit.loadings.beta - truth.beta0.beta).squaredNorm();

      rec.correct_zeros = 0;
      rec.incorrect_zeros = 0;
      bool exact = true;
      for (int l = 0; l < d; ++l)
        for (int j = 0; j < p; ++j) {
          bool est_zero = a1.best_fit.loadings.beta(l, j) == 0.0;
          bool true_zero = !truth.support(l, j);
          if (true_zero && est_zero) ++rec.correct_zeros;
          if (!true_zero && est_zero) ++rec.incorrect_zeros;
          if (true_zero != est_zero) exact = false;
        }
      rec.correctly_fit = exact;

      if (pipeline == Pipeline::select_identify) {
        Alpha2Result a2 =
            msic_alpha2(data, design.tau, cfg, pen, default_alpha2_grid(), a1.best_fit);
        rec.alpha2 = a2.alpha_star;
        rec.linear_flags = a2.best_report.is_linear;
        rec.rase_pen = rase_components(data, a1.best_fit.loadings, a2.best_report.refit,
                               a1.best_fit.basis, a1.best_fit.rescalers, truth);
      }
    }
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.fail_reason = e.what();
  }
  return rec;
}

}  // namespace

SimAggregates compute_metrics(const std::vector<RepRecord>& reps, const SimTruth& truth,
                              Pipeline pipeline) {
  SimAggregates agg;
  std::vector<const RepRecord*> ok;
  for (const auto& r : reps)
    if (r.ok) ok.push_back(&r);
  const int used = static_cast<int>(ok.size());
  agg.used_reps = used;
  if (used == 0) return agg;

  const int d = static_cast<int>(ok.front()->beta_hat.rows());
  const int p = static_cast<int>(ok.front()->beta_hat.cols());

  agg.bias = Eigen::MatrixXd::Zero(d, p);
  agg.mad = Eigen::MatrixXd::Zero(d, p);
  agg.esd = Eigen::MatrixXd::Zero(d, p);
  agg.asd_mean = Eigen::MatrixXd::Zero(d, p);
  agg.rase_mean = Eigen::VectorXd::Zero(d);

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, p);
  for (const auto* r : ok) {
    mean += r->beta_hat;
    agg.mad += (r->beta_hat - truth.beta0.beta).cwiseAbs();
    agg.asd_mean += r->asd;
    agg.rase_mean += r->rase;
  }
  mean /= used;
  agg.mad /= used;
  agg.asd_mean /= used;
  agg.rase_mean /= used;
  agg.bias = mean - truth.beta0.beta;

  if (used > 1) {
    for (const auto* r : ok) agg.esd += (r->beta_hat - mean).cwiseAbs2();
    agg.esd = (agg.esd / (used - 1)).cwiseSqrt();
  }

  if (pipeline != Pipeline::fit_only) {
    agg.rase_u_mean = agg.rase_mean;
    for (const auto* r : ok) {
      agg.c_avg += r->correct_zeros;
      agg.ic_avg += r->incorrect_zeros;
      agg.cf_rate += r->correctly_fit ? 1.0 : 0.0;
      agg.mse_o += r->mse_o;
      agg.mse_p += r->mse_p;
      agg.mse_u += r->mse_u;
    }
    agg.c_avg /= used;
    agg.ic_avg /= used;
    agg.cf_rate /= used;
    agg.mse_o /= used;
    agg.mse_p /= used;
    agg.mse_u /= used;
  }

  if (pipeline == Pipeline::select_identify) {
    agg.ilc = Eigen::VectorXd::Zero(d);
    agg.rase_p_mean = Eigen::VectorXd::Zero(d);
    for (const auto* r : ok) {
      bool all_match = true;
      for (int l = 0; l < d; ++l) {
        bool flagged = l < static_cast<int>(r->linear_flags.size()) && r->linear_flags[l];
        if (flagged) agg.ilc[l] += 1.0;
        if (flagged != truth.linear[l]) all_match = false;
      }
      if (all_match) agg.cil_rate += 1.0;
      agg.rase_p_mean += r->rase_pen;
    }
    agg.ilc /= used;
    agg.cil_rate /= used;
    agg.rase_p_mean /= used;
  }
  return agg;
}

SimulationReport run_replications(const SimDesign& design, Pipeline pipeline, int threads) {
  if (design.replications < 1) throw ParameterError("run_replications: need replications >= 1");
  SimulationReport report;
  report.design = design;
  report.pipeline = pipeline;
  report.reps.resize(design.replications);

  int nthreads = std::max(1, threads);
  if (nthreads == 1) {
    for (int r = 0; r < design.replications; ++r)
      report.reps[r] = run_one(design, pipeline, r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        while (true) {
          int r = next.fetch_add(1);
          if (r >= design.replications) break;
          report.reps[r] = run_one(design, pipeline, r);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  report.failures = 0;
  for (const auto& r : report.reps)
    if (!r.ok) ++report.failures;
  report.unreliable = report.failures * 5 > design.replications;

  report.agg = compute_metrics(report.reps, design_truth(design), pipeline);
  return report;
}

}  // namespace vicm
