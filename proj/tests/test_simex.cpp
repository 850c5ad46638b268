#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pieceval/simex.hpp"

using namespace pieceval;

namespace {

// Games with a true rating gap, an observed gap carrying N(0, noise) error and
// a knight imbalance. Two flips per game.
std::vector<FeatureRow> noisy_rows(std::size_t n, double noise, std::uint64_t seed, double true_sd = 165,
                                   double white = 15, double knight = 45) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> delta(0, true_sd), err(0, 1);
  std::uniform_int_distribution<int> kn(-1, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<FeatureRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRow r;
    r.game = i;
    const double truth = delta(rng);
    r.material.knight = kn(rng);
    const double p = 1 / (1 + std::exp(-std::log(10.0) / 400 * (truth + white + knight * r.material.knight)));
    const int a = u(rng) < p, b = u(rng) < p;
    r.outcome = 0.5 * (a + b);
    r.rating_delta = truth + noise * err(rng);
    rows.push_back(r);
  }
  return rows;
}

SimexCurve exact_curve(const std::vector<double>& sigmas, double a0, double a1, double a2, double a3, double c0,
                       double c1) {
  SimexCurve c;
  c.terms = {"rating", "knight"};
  c.rating_index = 0;
  for (double s : sigmas) {
    SimexPoint p;
    p.sigma_z = s;
    p.sigma_total = s;
    const double s2 = s * s;
    const double bs = 1 / (a0 + a1 * s2 + a2 * s2 * s2 + a3 * s2 * s2 * s2);
    p.median.terms = c.terms;
    p.median.coefficients = {bs, c0 + c1 * s2 * bs};
    p.median.logit = p.median.coefficients;
    c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST(SimexGrid, DefaultShape) {
  const auto g = default_sigma_grid(58);
  ASSERT_EQ(g.size(), 12u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 14.5, 1e-12);
  EXPECT_NEAR(g[11], 174, 1e-9);
  for (std::size_t i = 2; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(12.0, 0.1), 1e-12);
  EXPECT_THROW(default_sigma_grid(0), Error);
  SimexConfig bad;
  bad.sigma_z = {0, 10, 10};
  EXPECT_THROW(bad.grid(), Error);
}

TEST(SimexGrid, Median) {
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(SimexSweep, ZeroPointIsPlainFitAndDeterministic) {
  const auto rows = noisy_rows(3000, 58, 1);
  const std::vector<Term> terms{Term::Rating, Term::WhiteAdv, Term::Knight};
  SimexConfig cfg;
  cfg.sigma_z = {0, 30, 60, 90};
  cfg.replicates = 4;
  cfg.seed = 77;
  cfg.threads = 1;
  const auto a = simex_sweep(rows, terms, cfg);
  ASSERT_EQ(a.points.size(), 4u);
  const auto direct = fit_logistic(rows, terms);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a.points[0].median.coefficients[j], direct.coefficients[j]);
  EXPECT_EQ(a.points[0].succeeded, 1);
  EXPECT_EQ(a.points[1].succeeded, 4);
  EXPECT_NEAR(a.points[2].sigma_total, std::hypot(58.0, 60.0), 1e-12);

  cfg.threads = 3;
  const auto b = simex_sweep(rows, terms, cfg);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(a.points[s].median.coefficients[j], b.points[s].median.coefficients[j]);

  // attenuation grows with added noise
  for (std::size_t s = 1; s < 4; ++s)
    EXPECT_LT(a.points[s].median.coefficients[0], a.points[s - 1].median.coefficients[0]);
}

TEST(SimexSweep, ReplicateMatchesHandRolledNoise) {
  const auto rows = noisy_rows(800, 0, 2);
  const std::vector<Term> terms{Term::Rating, Term::WhiteAdv};
  SimexConfig cfg;
  cfg.sigma0 = 0;
  cfg.sigma_z = {0, 50};
  cfg.replicates = 1;
  cfg.seed = 5;
  const auto curve = simex_sweep(rows, terms, cfg);

  Rng rng = make_rng({5, 1, 0});
  std::normal_distribution<double> z(0, 1);
  auto copy = rows;
  for (auto& r : copy) r.rating_delta += 50 * z(rng);
  const auto direct = fit_logistic(copy, terms);
  EXPECT_NEAR(curve.points[1].median.coefficients[0], direct.coefficients[0], 1e-9);
  EXPECT_NEAR(curve.points[1].median.coefficients[1], direct.coefficients[1], 1e-7);
}

TEST(Calibrate, RecoversExactPolynomial) {
  // Wide sigma range: unscaled powers up to sigma^6 ~ 1e21 would be hopeless.
  std::vector<double> s;
  for (int k = 0; k < 10; ++k) s.push_back(100 * std::pow(1.4, k));
  const auto curve = exact_curve(s, 1.05, 2e-6, 3e-12, 1e-18, 45, 0.004);
  const auto cal = calibrate(curve, 100);
  EXPECT_NEAR(cal.coefficients[0], 1 / 1.05, 1e-8);
  EXPECT_NEAR(cal.coefficients[1], 45, 1e-7);
  EXPECT_LT(cal.condition_number, 1e12);
  EXPECT_EQ(cal.sigma_used.size(), 10u);
  EXPECT_NEAR(cal.diagnostics[0].regression[1], 2e-6, 1e-12);
  EXPECT_NEAR(cal.diagnostics[1].regression[1], 0.004, 1e-10);
  EXPECT_LT(cal.diagnostics[0].residual_rms, 1e-10);
}

TEST(Calibrate, UsesOnlyPointsAtOrAboveSigma0) {
  auto curve = exact_curve({60, 70, 80, 90, 100}, 1, 1e-5, 0, 0, 10, 0.01);
  // junk below sigma0 must be ignored
  auto low = exact_curve({10, 20}, 7, 0, 0, 0, -100, 0);
  curve.points.insert(curve.points.begin(), low.points.begin(), low.points.end());
  const auto cal = calibrate(curve, 60);
  EXPECT_NEAR(cal.coefficients[0], 1, 1e-8);
  EXPECT_NEAR(cal.coefficients[1], 10, 1e-7);
  try {
    calibrate(curve, 61);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientPoints);
  }
}

TEST(Calibrate, IllConditionedOnRepeatedSigma) {
  const auto curve = exact_curve({80, 80, 80, 80, 80, 80}, 1, 1e-5, 0, 0, 10, 0.01);
  try {
    calibrate(curve, 58);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IllConditioned);
  }
}

TEST(Calibrate, ReindexShiftsAbscissa) {
  SimexCurve c = exact_curve({0, 30}, 1, 0, 0, 0, 0, 0);
  c = reindex(c, 40);
  EXPECT_EQ(c.points[0].sigma_total, 40);
  EXPECT_NEAR(c.points[1].sigma_total, 50, 1e-12);
}

TEST(SimexPipeline, UndoesAttenuation) {
  const auto rows = noisy_rows(60000, 58, 11);
  const std::vector<Term> terms{Term::Rating, Term::WhiteAdv, Term::Knight};
  const auto naive = fit_logistic(rows, terms);
  EXPECT_LT(naive.coefficient("rating"), 0.93);
  SimexConfig cfg;
  cfg.sigma0 = 58;
  cfg.replicates = 5;
  cfg.seed = 3;
  const auto cal = calibrate(simex_sweep(rows, terms, cfg));
  EXPECT_NEAR(cal.coefficient("rating"), 1.0, 0.04);
  EXPECT_NEAR(cal.coefficient("knight"), 45, 4);
  EXPECT_NEAR(cal.coefficient("white_adv"), 15, 3);
}

TEST(Sigma0, RejectsEmptyAndFlat) {
  const auto rows = noisy_rows(2000, 40, 4, 100);
  Sigma0Config cfg;
  try {
    estimate_sigma0(rows, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoCandidates);
  }
  cfg.candidates = {30, 30, 30};
  cfg.simex_replicates = 2;
  cfg.mc_replicates = 1;
  cfg.sigma_z = {0, 40, 80};
  try {
    estimate_sigma0(rows, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FlatObjective);
  }
}

TEST(Sigma0, RecoversInjectedNoise) {
  const auto rows = noisy_rows(100000, 40, 21, 100, 15, 0);
  Sigma0Config cfg;
  for (double c = 10; c <= 70; c += 5) cfg.candidates.push_back(c);
  cfg.sigma_z = {0, 20, 40, 80};
  cfg.simex_replicates = 3;
  cfg.mc_replicates = 2;
  cfg.seed = 9;
  const auto est = estimate_sigma0(rows, cfg);
  EXPECT_NEAR(est.sigma0, 40, 10);
  EXPECT_EQ(est.objective.size(), cfg.candidates.size());
}

TEST(Bootstrap, NearestRank) {
  EXPECT_EQ(nearest_rank({1, 2}, 0.025), 1);
  EXPECT_EQ(nearest_rank({1, 2}, 0.975), 2);
  std::vector<double> fifty;
  for (int i = 1; i <= 50; ++i) fifty.push_back(i);
  EXPECT_EQ(nearest_rank(fifty, 0.025), 2);
  EXPECT_EQ(nearest_rank(fifty, 0.975), 49);
  EXPECT_EQ(nearest_rank(fifty, 0.5), 25);
}

TEST(Bootstrap, TwoReplicatesGiveMinMax) {
  const auto rows = noisy_rows(1500, 58, 6);
  BootstrapConfig cfg;
  cfg.replicates = 2;
  cfg.terms = {Term::Rating, Term::WhiteAdv, Term::Knight};
  cfg.simex.sigma0 = 58;
  cfg.simex.sigma_z = {0, 20, 40, 60, 80, 100};
  cfg.simex.replicates = 2;
  cfg.seed = 8;
  const auto res = bootstrap(rows, cfg);
  ASSERT_EQ(res.succeeded, 2);
  ASSERT_EQ(res.replicates.size(), 2u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(res.lower[j], std::min(res.replicates[0][j], res.replicates[1][j]));
    EXPECT_EQ(res.upper[j], std::max(res.replicates[0][j], res.replicates[1][j]));
  }
  cfg.threads = 1;
  const auto again = bootstrap(rows, cfg);
  EXPECT_EQ(again.replicates, res.replicates);
}

TEST(Bootstrap, CountsFailures) {
  const auto rows = noisy_rows(500, 58, 7);
  BootstrapConfig cfg;
  cfg.replicates = 3;
  cfg.terms = {Term::Rating, Term::WhiteAdv};
  cfg.simex.sigma0 = 58;
  cfg.simex.sigma_z = {0, 20, 40};  // too few points to calibrate
  cfg.simex.replicates = 1;
  const auto res = bootstrap(rows, cfg);
  EXPECT_EQ(res.succeeded, 0);
  EXPECT_EQ(res.failed, 3);
  ASSERT_EQ(res.failures.size(), 3u);
  EXPECT_NE(res.failures[0].find("need 5"), std::string::npos);
}

TEST(Bootstrap, WidthsShrinkWithSampleSize) {
  // Quadrupling n should roughly halve each interval: widths at 1k / 16k near 4.
  std::vector<std::vector<double>> widths;
  for (std::size_t n : {1000u, 4000u, 16000u}) {
    const auto rows = noisy_rows(n, 58, 40 + n);
    BootstrapConfig cfg;
    cfg.replicates = 40;
    cfg.terms = {Term::Rating, Term::WhiteAdv, Term::Knight};
    cfg.simex.sigma0 = 58;
    cfg.simex.sigma_z = {0, 30, 60, 90, 120, 170};
    cfg.simex.replicates = 2;
    cfg.seed = 5;
    const auto res = bootstrap(rows, cfg);
    std::vector<double> w;
    for (std::size_t j = 0; j < 3; ++j) w.push_back(res.upper[j] - res.lower[j]);
    widths.push_back(w);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_GT(widths[0][j], widths[1][j]);
    EXPECT_GT(widths[1][j], widths[2][j]);
    const double ratio = widths[0][j] / widths[2][j];
    EXPECT_GT(ratio, 2.5) << j;
    EXPECT_LT(ratio, 6.5) << j;
  }
}
