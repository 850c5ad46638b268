#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "elo.hpp"
#include "error.hpp"
#include "glm.hpp"
#include "pgn.hpp"
#include "random.hpp"
#include "simex.hpp"

namespace pieceval {

// ---------------------------------------------------------------------------
// Knight Monte Carlo

struct KnightExperimentConfig {
  std::size_t n_games = 500000;
  double beta_w = 15 * kEloScale;
  double beta_n = 45 * kEloScale;
  double beta_s = kEloScale;
  double sigma0 = 58;               // noise on the true deltas before any SIMEX noise
  std::vector<double> sigma_z;      // empty: default_sigma_grid(sigma0)
  int replicates = 21;
  // Rating-delta source. With no empirical deltas a Gaussian is used whose
  // standard deviation plus sigma0 noise gives observed_sd.
  std::vector<double> empirical_deltas;
  double observed_sd = 175;
  std::optional<double> shrink;     // overrides the computed shrink factor
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const {
    if (n_games == 0) throw Error(ErrorKind::Usage, "knight experiment needs n_games > 0");
    if (sigma0 < 0) throw Error(ErrorKind::Usage, "sigma0 must be non-negative");
    for (double s : sigma_z)
      if (s < 0) throw Error(ErrorKind::Usage, "sigma grid values must be non-negative");
    if (empirical_deltas.empty() && observed_sd <= sigma0)
      throw Error(ErrorKind::Usage, "observed_sd must exceed sigma0");
  }
};

struct KnightExperimentResult {
  SimexCurve curve;
  RegressionFit truth_fit;  // fit on the true deltas
  std::optional<CalibratedFit> calibrated;
  std::string calibration_error;
  double shrink = 1;
  double true_sd = 0;
  std::size_t clamped = 0;
  double clamp_fraction = 0;
  bool clamp_warning = false;  // more than 0.1% of binomial probabilities clamped
  double mean_knight_delta = 0;
};

struct KnightDraw {
  int knight_delta;
  bool clamped;
};

// Delta N = -2 + Binomial(4, (c/2) * delta_s), probability clamped into [0, 1].
inline KnightDraw draw_knight_delta(double delta_s, Rng& rng) {
  const double raw = 0.5 * kEloScale * delta_s;
  const double p = std::clamp(raw, 0.0, 1.0);
  int k = 0;
  for (int t = 0; t < 4; ++t) k += uniform01(rng) < p;
  return {k - 2, raw < 0 || raw > 1};
}

inline KnightExperimentResult run_knight_experiment(const KnightExperimentConfig& cfg) {
  cfg.validate();
  KnightExperimentResult res;
  double centre = 0;
  if (cfg.empirical_deltas.empty()) {
    res.true_sd = std::sqrt(cfg.observed_sd * cfg.observed_sd - cfg.sigma0 * cfg.sigma0);
  } else {
    const auto& e = cfg.empirical_deltas;
    for (double v : e) centre += v;
    centre /= double(e.size());
    double var = 0;
    for (double v : e) var += (v - centre) * (v - centre);
    var /= double(std::max<std::size_t>(e.size() - 1, 1));
    if (cfg.shrink) {
      res.shrink = *cfg.shrink;
    } else {
      if (var <= cfg.sigma0 * cfg.sigma0)
        throw Error(ErrorKind::Usage, "empirical delta variance does not exceed sigma0^2");
      res.shrink = std::sqrt((var - cfg.sigma0 * cfg.sigma0) / var);
    }
    res.true_sd = res.shrink * std::sqrt(var);
  }

  const std::size_t n = cfg.n_games;
  Design truth;
  truth.terms = {"rating", "white_adv", "knight"};
  truth.rating_column = 0;
  truth.n = n;
  truth.p = 3;
  truth.x.resize(3 * n);
  truth.successes.resize(n);
  std::vector<double> observed(n);
  std::vector<unsigned char> clamped(n);

  constexpr std::size_t kChunk = 8192;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        Rng rng = make_rng({cfg.seed, 0x6b6e, c});
        std::normal_distribution<double> z(0, 1);
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
          double ds;
          if (cfg.empirical_deltas.empty()) {
            ds = res.true_sd * z(rng);
          } else {
            const auto k = static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<std::int64_t>(cfg.empirical_deltas.size()) - 1));
            ds = centre + res.shrink * (cfg.empirical_deltas[k] - centre);
          }
          const KnightDraw kd = draw_knight_delta(ds, rng);
          clamped[i] = kd.clamped;
          const double eta = cfg.beta_w + cfg.beta_s * ds + cfg.beta_n * kd.knight_delta;
          truth.successes[i] = uniform01(rng) < logistic(eta) ? 2.0 : 0.0;
          truth.x[3 * i] = kEloScale * ds;
          truth.x[3 * i + 1] = 1;
          truth.x[3 * i + 2] = kd.knight_delta;
          observed[i] = ds + cfg.sigma0 * z(rng);
        }
      },
      cfg.threads);

  double knight_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    res.clamped += clamped[i];
    knight_sum += truth.x[3 * i + 2];
  }
  res.mean_knight_delta = knight_sum / double(n);
  res.clamp_fraction = double(res.clamped) / double(n);
  res.clamp_warning = res.clamp_fraction > 0.001;

  FitOptions plain;
  plain.standard_errors = false;
  res.truth_fit = fit_design(truth, plain);

  Design noisy = truth;
  for (std::size_t i = 0; i < n; ++i) noisy.x[3 * i] = kEloScale * observed[i];
  SimexConfig sc;
  sc.sigma0 = cfg.sigma0;
  sc.sigma_z = cfg.sigma_z.empty() && cfg.sigma0 > 0 ? default_sigma_grid(cfg.sigma0) : cfg.sigma_z;
  if (sc.sigma_z.empty()) sc.sigma_z = {0};
  sc.replicates = cfg.replicates;
  sc.seed = derive_seed({cfg.seed, 0x5e});
  sc.threads = cfg.threads;
  res.curve = simex_sweep(noisy, observed, sc);
  try {
    res.calibrated = calibrate(res.curve, cfg.sigma0);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Usage) throw;
    res.calibration_error = e.what();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic rated archives

struct SyntheticArchiveConfig {
  std::size_t n_games = 10000;
  double ability_sd = 150;      // sd of the true ability difference
  double noise_sd = 0;          // published rating = ability + noise
  double draw_prob = 0;         // P(draw); P(white win) = g - p/2
  double white_advantage = 0;   // rating points added to white's ability in the outcome law
  std::vector<double> k_values; // rating updates drawn from these; empty: no rating diffs
  double base_rating = 1800;
  int players = 200;
  YearMonth month{2020, 1};
  std::uint64_t seed = 0;
};

inline int sample_outcome(double g, double p, Rng& rng) {
  const double u = uniform01(rng);
  if (u < g - p / 2) return 2;
  if (u < g + p / 2) return 1;
  return 0;
}

// Games whose outcomes follow the Elo law on true ability; published ratings
// carry Gaussian noise. Move lists are empty.
inline std::vector<GameRecord> generate_elo_games(const SyntheticArchiveConfig& cfg) {
  if (cfg.draw_prob < 0 || cfg.draw_prob > 1) throw Error(ErrorKind::Usage, "draw probability outside [0, 1]");
  if (cfg.players < 2) throw Error(ErrorKind::Usage, "need at least two players");
  Rng rng = make_rng({cfg.seed, 0xe10});
  std::normal_distribution<double> z(0, 1);
  std::vector<GameRecord> out;
  out.reserve(cfg.n_games);
  for (std::size_t i = 0; i < cfg.n_games; ++i) {
    GameRecord g;
    g.ordinal = i;
    g.variant = Variant::Standard;
    const auto w = uniform_int(rng, 0, cfg.players - 1);
    auto b = uniform_int(rng, 0, cfg.players - 2);
    if (b >= w) ++b;
    g.white = "p" + std::to_string(w);
    g.black = "p" + std::to_string(b);
    const double ability = cfg.ability_sd * z(rng);
    const double published = ability + cfg.noise_sd * z(rng);
    const double half = std::round(published / 2);
    g.white_rating = static_cast<int>(std::lround(cfg.base_rating + half));
    g.black_rating = static_cast<int>(std::lround(cfg.base_rating + half - published));
    const double gp = expected_score(ability + cfg.white_advantage);
    const double p = std::min(cfg.draw_prob, 2 * std::min(gp, 1 - gp));
    const int y2 = sample_outcome(gp, p, rng);
    g.result = y2 == 2 ? Result::WhiteWin : (y2 == 1 ? Result::Draw : Result::BlackWin);
    if (!cfg.k_values.empty()) {
      const double k = cfg.k_values[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<std::int64_t>(cfg.k_values.size()) - 1))];
      const double change = k * (0.5 * y2 - expected_score(g.white_rating - g.black_rating));
      g.white_rating_diff = static_cast<int>(std::lround(change));
      g.black_rating_diff = static_cast<int>(std::lround(-change));
    }
    g.time_control = {600, 0};
    g.termination = Termination::Normal;
    g.month = cfg.month;
    out.push_back(std::move(g));
  }
  return out;
}

// Rating-and-outcome rows (no material) for rating-only fits.
inline std::vector<FeatureRow> rating_rows(const std::vector<GameRecord>& games) {
  std::vector<FeatureRow> rows;
  rows.reserve(games.size());
  for (const auto& g : games) {
    FeatureRow r;
    r.game = g.ordinal;
    r.rating_delta = g.rating_delta();
    r.outcome = g.outcome();
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Underdog calibration

struct UnderdogBin {
  double lo = 0, hi = 0;  // absolute rating gap, [lo, hi)
  std::size_t games = 0;
  double median_gap = 0;
  double empirical = 0;    // underdog score, draws count half
  double theoretical = 0;  // Elo law at the median gap
  double std_error = 0;    // binomial, on the empirical rate
  std::size_t white_underdog_games = 0;
  double empirical_white_underdog = 0;
  double empirical_black_underdog = 0;
};

struct UnderdogTable {
  std::vector<UnderdogBin> bins;
  std::vector<std::string> notes;
};

inline UnderdogTable underdog_calibration(const std::vector<GameRecord>& games, double bin_width = 25,
                                          double max_gap = 800) {
  if (bin_width <= 0 || max_gap <= 0) throw Error(ErrorKind::Usage, "bin width and range must be positive");
  const auto nbins = static_cast<std::size_t>(std::ceil(max_gap / bin_width));
  std::vector<std::vector<double>> gaps(nbins);
  std::vector<double> score(nbins, 0), white_score(nbins, 0), black_score(nbins, 0);
  std::vector<std::size_t> white_n(nbins, 0);
  std::size_t beyond = 0;
  for (const auto& g : games) {
    const double delta = g.rating_delta();
    const double gap = std::abs(delta);
    const auto b = static_cast<std::size_t>(gap / bin_width);
    if (b >= nbins) {
      ++beyond;
      continue;
    }
    const bool white_underdog = delta < 0;
    const double s = white_underdog ? g.outcome() : 1 - g.outcome();
    gaps[b].push_back(gap);
    score[b] += s;
    if (white_underdog) {
      ++white_n[b];
      white_score[b] += s;
    } else {
      black_score[b] += s;
    }
  }
  UnderdogTable t;
  for (std::size_t b = 0; b < nbins; ++b) {
    const double lo = double(b) * bin_width, hi = std::min(max_gap, lo + bin_width);
    if (gaps[b].empty()) {
      t.notes.push_back("empty bin [" + format_double(lo) + ", " + format_double(hi) + ") dropped");
      continue;
    }
    UnderdogBin bin;
    bin.lo = lo;
    bin.hi = hi;
    bin.games = gaps[b].size();
    bin.median_gap = median(gaps[b]);
    bin.empirical = score[b] / double(bin.games);
    bin.theoretical = expected_score(-bin.median_gap);
    bin.std_error = std::sqrt(bin.theoretical * (1 - bin.theoretical) / double(bin.games));
    bin.white_underdog_games = white_n[b];
    if (white_n[b]) bin.empirical_white_underdog = white_score[b] / double(white_n[b]);
    if (bin.games > white_n[b]) bin.empirical_black_underdog = black_score[b] / double(bin.games - white_n[b]);
    t.bins.push_back(bin);
  }
  if (beyond) t.notes.push_back(std::to_string(beyond) + " games beyond the largest bin ignored");
  return t;
}

// ---------------------------------------------------------------------------
// Rating noise as an AR(1) process

struct EloNoiseParams {
  double k = 22.83;
  double delta_a = 0;
  double p_draw = 0;
};

struct EloNoiseResult {
  double g = 0, g_prime = 0, var_y = 0, variance = 0, se = 0;
};

inline void check_stationary(const EloNoiseParams& p) {
  const double g = expected_score(p.delta_a);
  const double gp = kEloScale * g * (1 - g);
  if (p.k <= 0) throw Error(ErrorKind::Usage, "k must be positive");
  if (p.k * kEloScale >= 1 || p.k * gp >= 1)
    throw Error(ErrorKind::NonStationary, "k = " + format_double(p.k) + " is at or above 1/c = " +
                                              format_double(1 / kEloScale));
  if (p.p_draw < 0 || p.p_draw > 2 * std::min(g, 1 - g))
    throw Error(ErrorKind::Usage, "draw probability incompatible with expected score");
}

inline EloNoiseResult elo_noise_se(const EloNoiseParams& p) {
  check_stationary(p);
  EloNoiseResult r;
  r.g = expected_score(p.delta_a);
  r.g_prime = kEloScale * r.g * (1 - r.g);
  r.var_y = r.g * (1 - r.g) - p.p_draw / 4;
  r.variance = p.k * r.var_y / (r.g_prime * (1 - p.k * r.g_prime));
  r.se = std::sqrt(r.variance);
  return r;
}

struct ArSimulation {
  double mean_error = 0;
  double sd_error = 0;
  std::size_t steps = 0;
};

// Iterates the exact update delta_r += 2k (y - g(delta_r)) with fixed ability.
inline ArSimulation simulate_rating_updates(const EloNoiseParams& p, std::size_t steps, std::uint64_t seed,
                                            std::size_t burn_in = 10000) {
  check_stationary(p);
  Rng rng = make_rng({seed, 0xa1});
  const double ga = expected_score(p.delta_a);
  double r = p.delta_a;
  double sum = 0, sum2 = 0;
  for (std::size_t t = 0; t < steps + burn_in; ++t) {
    const double y = 0.5 * sample_outcome(ga, p.p_draw, rng);
    r += 2 * p.k * (y - expected_score(r));
    if (t >= burn_in) {
      const double e = r - p.delta_a;
      sum += e;
      sum2 += e * e;
    }
  }
  ArSimulation s;
  s.steps = steps;
  s.mean_error = sum / double(steps);
  s.sd_error = std::sqrt(std::max(0.0, sum2 / double(steps) - s.mean_error * s.mean_error));
  return s;
}

struct ImpliedK {
  std::vector<double> values;
  double median = 0;
  std::size_t near_zero = 0;       // |y - g| < 1e-6
  std::size_t missing_diffs = 0;   // no rating change recorded
  std::vector<std::pair<double, std::size_t>> histogram;  // bin lower edge, count
};

inline ImpliedK implied_k(const std::vector<GameRecord>& games, double bin_width = 2.5) {
  ImpliedK out;
  for (const auto& g : games) {
    if (!g.white_rating_diff || !g.black_rating_diff) {
      ++out.missing_diffs;
      continue;
    }
    const double resid = g.outcome() - expected_score(g.rating_delta());
    if (std::abs(resid) < 1e-6) {
      ++out.near_zero;
      continue;
    }
    out.values.push_back(double(*g.white_rating_diff - *g.black_rating_diff) / (2 * resid));
  }
  if (out.values.empty()) throw Error(ErrorKind::InsufficientPoints, "no games with usable rating changes");
  out.median = median(out.values);
  std::vector<double> sorted = out.values;
  std::sort(sorted.begin(), sorted.end());
  for (double v : sorted) {
    const double edge = std::floor(v / bin_width) * bin_width;
    if (out.histogram.empty() || out.histogram.back().first != edge) out.histogram.push_back({edge, 0});
    ++out.histogram.back().second;
  }
  return out;
}

}  // namespace pieceval
