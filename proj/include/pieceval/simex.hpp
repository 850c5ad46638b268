#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elo.hpp"
#include "error.hpp"
#include "glm.hpp"
#include "random.hpp"

namespace pieceval {

// {0} followed by `points - 1` geometric steps from sigma0/4 up to 3 sigma0.
inline std::vector<double> default_sigma_grid(double sigma0, int points = 12) {
  if (sigma0 <= 0) throw Error(ErrorKind::Usage, "default grid needs a positive sigma0");
  if (points < 2) throw Error(ErrorKind::Usage, "grid needs at least two points");
  std::vector<double> grid{0.0};
  const double lo = sigma0 / 4, hi = 3 * sigma0;
  for (int k = 0; k < points - 1; ++k)
    grid.push_back(points == 2 ? hi : lo * std::pow(hi / lo, double(k) / double(points - 2)));
  return grid;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

struct SimexConfig {
  double sigma0 = 58;
  std::vector<double> sigma_z;  // added noise, rating points; empty means default_sigma_grid(sigma0)
  int replicates = 21;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  FitOptions fit;

  std::vector<double> grid() const {
    auto g = sigma_z.empty() ? default_sigma_grid(sigma0) : sigma_z;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] < 0) throw Error(ErrorKind::Usage, "negative sigma in grid");
      if (i > 0 && g[i] <= g[i - 1]) throw Error(ErrorKind::Usage, "sigma grid must be strictly increasing");
    }
    if (replicates < 1) throw Error(ErrorKind::Usage, "need at least one replicate");
    return g;
  }
};

struct SimexPoint {
  double sigma_z = 0;      // noise added on top of the data
  double sigma_total = 0;  // abscissa used for extrapolation
  RegressionFit median;    // coordinate-wise median over successful replicates
  int succeeded = 0;
  int failed = 0;
};

struct SimexCurve {
  std::vector<std::string> terms;
  int rating_index = -1;
  double sigma0 = 0;
  int replicates = 0;
  std::uint64_t seed = 0;
  std::size_t n_games = 0;
  std::vector<SimexPoint> points;
  std::vector<double> dropped;  // grid values where every replicate failed
};

namespace detail {

inline RegressionFit median_fit(const std::vector<RegressionFit>& fits) {
  RegressionFit m = fits.front();
  m.standard_errors.clear();
  m.log_likelihood_trace.clear();
  for (std::size_t j = 0; j < m.terms.size(); ++j) {
    std::vector<double> c, l;
    for (const auto& f : fits) {
      c.push_back(f.coefficients[j]);
      l.push_back(f.logit[j]);
    }
    m.coefficients[j] = median(c);
    m.logit[j] = median(l);
  }
  std::vector<double> ll;
  for (const auto& f : fits) ll.push_back(f.log_likelihood);
  m.log_likelihood = median(ll);
  m.status = FitStatus::Converged;
  return m;
}

// Fit with the rating column replaced by c * (delta + noise).
inline RegressionFit fit_noisy(const Design& base, const std::vector<double>& delta, double sigma, Rng& rng,
                               const FitOptions& opt) {
  Design d = base;
  std::normal_distribution<double> z(0.0, 1.0);
  const auto rc = static_cast<std::size_t>(base.rating_column);
  for (std::size_t i = 0; i < d.n; ++i) d.at(i, rc) = kEloScale * (delta[i] + sigma * z(rng));
  return fit_design(d, opt);
}

}  // namespace detail

// Sweep over an existing design whose rating column holds kEloScale * delta.
// `delta` carries the same ratings in points (kept separately so no rounding
// creeps in from dividing the column back out).
inline SimexCurve simex_sweep(const Design& base, const std::vector<double>& delta, const SimexConfig& cfg) {
  if (base.rating_column < 0) throw Error(ErrorKind::Usage, "SIMEX needs the rating term in the model");
  if (delta.size() != base.n) throw Error(ErrorKind::Usage, "rating delta length does not match design");
  const auto grid = cfg.grid();
  FitOptions opt = cfg.fit;
  opt.standard_errors = false;

  struct Job {
    std::size_t point;
    int replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const int reps = grid[s] == 0 ? 1 : cfg.replicates;
    for (int r = 0; r < reps; ++r) jobs.push_back({s, r});
  }
  std::vector<std::optional<RegressionFit>> results(jobs.size());
  parallel_for(
      jobs.size(),
      [&](std::size_t k) {
        const Job& job = jobs[k];
        try {
          RegressionFit fit;
          if (grid[job.point] == 0) {
            fit = fit_design(base, opt);
          } else {
            Rng rng = make_rng({cfg.seed, job.point, static_cast<std::uint64_t>(job.replicate)});
            fit = detail::fit_noisy(base, delta, grid[job.point], rng, opt);
          }
          if (fit.converged()) results[k] = std::move(fit);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::Usage) throw;
        }
      },
      cfg.threads);

  SimexCurve curve;
  curve.terms = base.terms;
  curve.rating_index = base.rating_column;
  curve.sigma0 = cfg.sigma0;
  curve.replicates = cfg.replicates;
  curve.seed = cfg.seed;
  curve.n_games = base.n;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    std::vector<RegressionFit> ok;
    int failed = 0;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (jobs[k].point != s) continue;
      if (results[k]) ok.push_back(*results[k]);
      else ++failed;
    }
    if (ok.empty()) {
      curve.dropped.push_back(grid[s]);
      continue;
    }
    SimexPoint pt;
    pt.sigma_z = grid[s];
    pt.sigma_total = std::sqrt(cfg.sigma0 * cfg.sigma0 + grid[s] * grid[s]);
    pt.median = detail::median_fit(ok);
    pt.succeeded = static_cast<int>(ok.size());
    pt.failed = failed;
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

inline SimexCurve simex_sweep(const std::vector<FeatureRow>& rows, const std::vector<Term>& terms,
                              const SimexConfig& cfg) {
  if (rows.empty()) throw Error(ErrorKind::InsufficientPoints, "no rows for SIMEX");
  const Design base = make_design(rows, terms);
  std::vector<double> delta(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) delta[i] = rows[i].rating_delta;
  return simex_sweep(base, delta, cfg);
}

// Recomputes abscissas for a different assumed sigma0.
inline SimexCurve reindex(SimexCurve curve, double sigma0) {
  curve.sigma0 = sigma0;
  for (auto& p : curve.points) p.sigma_total = std::sqrt(sigma0 * sigma0 + p.sigma_z * p.sigma_z);
  return curve;
}

// ---------------------------------------------------------------------------
// Regression calibration back to zero noise

struct CalibrationTerm {
  std::string term;
  double value = 0;                // zero-noise estimate, quoted units
  std::vector<double> regression;  // rating: b0, b2, b4, b6 ; others: c0, c1 (sigma in rating points)
  double residual_rms = 0;
};

struct CalibratedFit {
  std::vector<std::string> terms;
  std::vector<double> coefficients;
  double sigma0 = 0;
  std::vector<double> sigma_used;
  std::vector<CalibrationTerm> diagnostics;  // one per term, same order
  double condition_number = 0;               // of the rating regression design (scaled sigma)

  double coefficient(std::string_view term) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == term) return coefficients[j];
    throw Error(ErrorKind::Usage, "calibrated fit has no term '" + std::string(term) + "'");
  }
};

inline CalibratedFit calibrate(const SimexCurve& curve, double sigma0) {
  if (curve.rating_index < 0) throw Error(ErrorKind::Usage, "calibration needs the rating term");
  std::vector<const SimexPoint*> pts;
  for (const auto& p : curve.points)
    if (p.sigma_total >= sigma0 * (1 - 1e-12)) pts.push_back(&p);
  if (pts.size() < 5)
    throw Error(ErrorKind::InsufficientPoints,
                std::to_string(pts.size()) + " curve points at or above sigma0; need 5");

  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto ri = static_cast<std::size_t>(curve.rating_index);
  // Powers of sigma are formed on sigma / scale; intercepts are unaffected.
  double scale = 0;
  for (auto* p : pts) scale = std::max(scale, p->sigma_total);
  if (scale == 0) scale = 1;

  CalibratedFit out;
  out.terms = curve.terms;
  out.sigma0 = sigma0;
  for (auto* p : pts) out.sigma_used.push_back(p->sigma_total);

  Eigen::MatrixXd x(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u2 = std::pow(pts[static_cast<std::size_t>(i)]->sigma_total / scale, 2);
    x.row(i) << 1, u2, u2 * u2, u2 * u2 * u2;
    const double b = pts[static_cast<std::size_t>(i)]->median.coefficients[ri];
    if (b == 0) throw Error(ErrorKind::IllConditioned, "rating coefficient is zero on the curve");
    y[i] = 1.0 / b;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto sv = svd.singularValues();
  out.condition_number = sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
  if (!(out.condition_number <= 1e12))
    throw Error(ErrorKind::IllConditioned, "calibration design condition number " + std::to_string(out.condition_number));
  const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);

  out.coefficients.assign(curve.terms.size(), 0.0);
  out.diagnostics.resize(curve.terms.size());
  {
    auto& d = out.diagnostics[ri];
    d.term = curve.terms[ri];
    d.value = 1.0 / b[0];
    for (int k = 0; k < 4; ++k) d.regression.push_back(b[k] / std::pow(scale, 2 * k));
    d.residual_rms = std::sqrt((x * b - y).squaredNorm() / double(n));
    out.coefficients[ri] = d.value;
  }
  for (std::size_t j = 0; j < curve.terms.size(); ++j) {
    if (j == ri) continue;
    Eigen::MatrixXd x2(n, 2);
    Eigen::VectorXd y2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const SimexPoint& p = *pts[static_cast<std::size_t>(i)];
      x2.row(i) << 1, std::pow(p.sigma_total / scale, 2) * p.median.coefficients[ri];
      y2[i] = p.median.coefficients[j];
    }
    const Eigen::VectorXd c = x2.colPivHouseholderQr().solve(y2);
    auto& d = out.diagnostics[j];
    d.term = curve.terms[j];
    d.value = c[0];
    d.regression = {c[0], c[1] / (scale * scale)};
    d.residual_rms = std::sqrt((x2 * c - y2).squaredNorm() / double(n));
    out.coefficients[j] = c[0];
  }
  return out;
}

inline CalibratedFit calibrate(const SimexCurve& curve) { return calibrate(curve, curve.sigma0); }

// ---------------------------------------------------------------------------
// sigma0 by matching a Monte Carlo attenuation curve to the SIMEX curve

struct Sigma0Config {
  std::vector<double> candidates;
  std::vector<double> sigma_z;  // empty: default_sigma_grid(60, 8)
  int simex_replicates = 11;
  int mc_replicates = 5;
  std::size_t mc_games = 0;  // 0: as many as there are rows
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct Sigma0Estimate {
  double sigma0 = 0;
  std::vector<double> candidates;
  std::vector<double> objective;
  std::vector<double> simex_ratio;             // by grid point
  std::vector<std::vector<double>> mc_ratio;   // [candidate][grid point]
  std::vector<double> sigma_z;
};

inline Sigma0Estimate estimate_sigma0(const std::vector<FeatureRow>& rows, const Sigma0Config& cfg) {
  if (cfg.candidates.empty()) throw Error(ErrorKind::NoCandidates, "no sigma0 candidates given");
  if (rows.size() < 10) throw Error(ErrorKind::InsufficientPoints, "too few rows to estimate sigma0");
  for (double c : cfg.candidates)
    if (c < 0) throw Error(ErrorKind::Usage, "negative sigma0 candidate");
  const std::vector<Term> terms{Term::Rating, Term::WhiteAdv};
  SimexConfig sc;
  sc.sigma0 = 0;  // abscissas are re-indexed per candidate below
  sc.sigma_z = cfg.sigma_z.empty() ? default_sigma_grid(60, 8) : cfg.sigma_z;
  sc.replicates = cfg.simex_replicates;
  sc.seed = derive_seed({cfg.seed, 1});
  sc.threads = cfg.threads;
  const SimexCurve curve = simex_sweep(rows, terms, sc);
  if (!curve.dropped.empty()) throw Error(ErrorKind::NotConverged, "SIMEX points failed while estimating sigma0");

  Sigma0Estimate est;
  est.candidates = cfg.candidates;
  est.sigma_z = sc.grid();
  for (const auto& p : curve.points) est.simex_ratio.push_back(p.median.coefficients[0]);
  const double white_logit = curve.points.front().median.logit[1];

  std::vector<double> obs(rows.size());
  double mean = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) mean += obs[i] = rows[i].rating_delta;
  mean /= double(rows.size());
  double var = 0;
  for (double v : obs) var += (v - mean) * (v - mean);
  var /= double(rows.size() - 1);

  // Common random numbers: the same resampled games, uniforms and normals for
  // every candidate, so the objective varies smoothly in sigma0.
  const std::size_t m = cfg.mc_games ? cfg.mc_games : rows.size();
  const int reps = cfg.mc_replicates;
  const std::size_t grid_n = est.sigma_z.size();
  std::vector<std::vector<std::uint32_t>> idx(static_cast<std::size_t>(reps));
  std::vector<std::vector<double>> unif(static_cast<std::size_t>(reps));
  std::vector<std::vector<double>> normal(static_cast<std::size_t>(reps) * grid_n);
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng({cfg.seed, 2, static_cast<std::uint64_t>(r)});
    auto& ix = idx[static_cast<std::size_t>(r)];
    auto& un = unif[static_cast<std::size_t>(r)];
    ix.resize(m);
    un.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      ix[i] = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::int64_t>(rows.size()) - 1));
      un[i] = uniform01(rng);
    }
    for (std::size_t s = 0; s < grid_n; ++s) {
      Rng zr = make_rng({cfg.seed, 3, static_cast<std::uint64_t>(r), s});
      std::normal_distribution<double> z(0, 1);
      auto& nz = normal[static_cast<std::size_t>(r) * grid_n + s];
      nz.resize(m);
      for (auto& v : nz) v = z(zr);
    }
  }

  est.mc_ratio.assign(cfg.candidates.size(), std::vector<double>(grid_n, 0.0));
  FitOptions opt;
  opt.standard_errors = false;
  std::vector<std::size_t> job_c, job_s;
  for (std::size_t c = 0; c < cfg.candidates.size(); ++c)
    for (std::size_t s = 0; s < grid_n; ++s) {
      job_c.push_back(c);
      job_s.push_back(s);
    }
  parallel_for(
      job_c.size(),
      [&](std::size_t k) {
        const std::size_t c = job_c[k], s = job_s[k];
        const double s0 = cfg.candidates[c];
        const double shrink = std::sqrt(std::max(0.0, var - s0 * s0) / var);
        const double total = std::sqrt(s0 * s0 + est.sigma_z[s] * est.sigma_z[s]);
        Design d;
        d.terms = {"rating", "white_adv"};
        d.rating_column = 0;
        d.n = m;
        d.p = 2;
        d.x.resize(2 * m);
        d.successes.resize(m);
        std::vector<double> ratios;
        for (int r = 0; r < reps; ++r) {
          const auto& ix = idx[static_cast<std::size_t>(r)];
          const auto& un = unif[static_cast<std::size_t>(r)];
          const auto& nz = normal[static_cast<std::size_t>(r) * grid_n + s];
          for (std::size_t i = 0; i < m; ++i) {
            const double truth = mean + shrink * (obs[ix[i]] - mean);
            const double p = logistic(white_logit + kEloScale * truth);
            d.successes[i] = un[i] < p ? 2.0 : 0.0;
            d.x[2 * i] = kEloScale * (truth + total * nz[i]);
            d.x[2 * i + 1] = 1.0;
          }
          const auto fit = fit_design(d, opt);
          if (fit.converged()) ratios.push_back(fit.coefficients[0]);
        }
        est.mc_ratio[c][s] = median(ratios);
      },
      cfg.threads);

  for (std::size_t c = 0; c < cfg.candidates.size(); ++c) {
    double obj = 0;
    for (std::size_t s = 0; s < grid_n; ++s) obj += std::pow(est.simex_ratio[s] - est.mc_ratio[c][s], 2);
    est.objective.push_back(obj);
  }
  const auto best = std::min_element(est.objective.begin(), est.objective.end());
  const double hi = *std::max_element(est.objective.begin(), est.objective.end());
  if (!std::isfinite(*best)) throw Error(ErrorKind::NotConverged, "Monte Carlo fits failed for every candidate");
  if (est.candidates.size() > 1 && hi - *best < 0.01 * hi)
    throw Error(ErrorKind::FlatObjective, "objective varies by less than 1% across sigma0 candidates");
  est.sigma0 = est.candidates[static_cast<std::size_t>(best - est.objective.begin())];
  return est;
}

// ---------------------------------------------------------------------------
// Bootstrap over games

struct BootstrapConfig {
  int replicates = 100;
  std::vector<Term> terms;
  SimexConfig simex;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct BootstrapResult {
  std::vector<std::string> terms;
  std::vector<std::vector<double>> replicates;  // successful replicates, in replicate order
  std::vector<int> replicate_ids;
  std::vector<double> lower, upper;
  int succeeded = 0;
  int failed = 0;
  std::vector<std::string> failures;
};

// Nearest-rank percentile of sorted data, q in (0, 1].
inline double nearest_rank(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto rank = static_cast<std::size_t>(std::ceil(q * double(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline BootstrapResult bootstrap(const std::vector<FeatureRow>& rows, const BootstrapConfig& cfg) {
  if (cfg.replicates < 2) throw Error(ErrorKind::Usage, "bootstrap needs B >= 2");
  if (rows.empty()) throw Error(ErrorKind::InsufficientPoints, "no rows to bootstrap");
  const Design full = make_design(rows, cfg.terms);
  if (full.rating_column < 0) throw Error(ErrorKind::Usage, "bootstrap pipeline needs the rating term");

  std::vector<std::optional<std::vector<double>>> out(static_cast<std::size_t>(cfg.replicates));
  std::vector<std::string> errors(static_cast<std::size_t>(cfg.replicates));
  parallel_for(
      out.size(),
      [&](std::size_t b) {
        Rng rng = make_rng({cfg.seed, b});
        Design d;
        d.terms = full.terms;
        d.rating_column = full.rating_column;
        d.n = full.n;
        d.p = full.p;
        d.x.resize(full.x.size());
        d.successes.resize(full.n);
        std::vector<double> delta(full.n);
        for (std::size_t i = 0; i < full.n; ++i) {
          const auto k = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(full.n) - 1));
          std::copy_n(full.x.begin() + static_cast<std::ptrdiff_t>(k * full.p), full.p,
                      d.x.begin() + static_cast<std::ptrdiff_t>(i * full.p));
          d.successes[i] = full.successes[k];
          delta[i] = rows[k].rating_delta;
        }
        SimexConfig sc = cfg.simex;
        sc.seed = derive_seed({cfg.seed, b, 1});
        sc.threads = 1;
        try {
          const auto curve = simex_sweep(d, delta, sc);
          out[b] = calibrate(curve, sc.sigma0).coefficients;
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::Usage) throw;
          errors[b] = e.what();
        }
      },
      cfg.threads);

  BootstrapResult res;
  res.terms = full.terms;
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (out[b]) {
      res.replicates.push_back(*out[b]);
      res.replicate_ids.push_back(static_cast<int>(b));
      ++res.succeeded;
    } else {
      ++res.failed;
      res.failures.push_back("replicate " + std::to_string(b) + ": " + errors[b]);
    }
  }
  const double tail = (1 - cfg.level) / 2;
  for (std::size_t j = 0; j < res.terms.size(); ++j) {
    std::vector<double> col;
    for (const auto& r : res.replicates) col.push_back(r[j]);
    std::sort(col.begin(), col.end());
    res.lower.push_back(nearest_rank(col, tail));
    res.upper.push_back(nearest_rank(col, 1 - tail));
  }
  return res;
}

}  // namespace pieceval
