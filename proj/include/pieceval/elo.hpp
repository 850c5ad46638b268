#pragma once

#include <cmath>
#include <numbers>

namespace pieceval {

// Logit slope of the Elo scale: a 400 point gap means 10:1 odds.
inline constexpr double kEloScale = std::numbers::ln10 / 400.0;

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Expected score of the first player at rating difference `delta` (points).
inline double expected_score(double delta) { return logistic(kEloScale * delta); }

inline double expected_score_slope(double delta) {
  const double g = expected_score(delta);
  return kEloScale * g * (1.0 - g);
}

}  // namespace pieceval
