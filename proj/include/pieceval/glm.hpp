#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "elo.hpp"
#include "error.hpp"
#include "snapshot.hpp"

namespace pieceval {

enum class Term : std::uint8_t {
  Rating,
  WhiteAdv,
  Tempo,
  Pawn,
  Knight,
  Bishop,
  Rook,
  Queen,
  King,
  Passed2to4,
  Passed5,
  Passed6,
  Passed7,
};

inline constexpr std::array<Term, 13> kAllTerms{Term::Rating,     Term::WhiteAdv, Term::Tempo,   Term::Pawn,   Term::Knight,
                                                 Term::Bishop,     Term::Rook,     Term::Queen,   Term::King,   Term::Passed2to4,
                                                 Term::Passed5,    Term::Passed6,  Term::Passed7};

constexpr std::string_view to_string(Term t) {
  switch (t) {
    case Term::Rating: return "rating";
    case Term::WhiteAdv: return "white_adv";
    case Term::Tempo: return "tempo";
    case Term::Pawn: return "pawn";
    case Term::Knight: return "knight";
    case Term::Bishop: return "bishop";
    case Term::Rook: return "rook";
    case Term::Queen: return "queen";
    case Term::King: return "king";
    case Term::Passed2to4: return "passed_2_4";
    case Term::Passed5: return "passed_5";
    case Term::Passed6: return "passed_6";
    case Term::Passed7: return "passed_7";
  }
  return "?";
}

inline Term parse_term(std::string_view s) {
  for (Term t : kAllTerms)
    if (to_string(t) == s) return t;
  throw Error(ErrorKind::Usage, "unknown term '" + std::string(s) + "'");
}

// Comma separated list; the shorthands "compact", "passed", "antichess" and
// "horde" expand to the usual model specifications.
inline std::vector<Term> parse_terms(std::string_view text) {
  std::vector<Term> out;
  auto add = [&](Term t) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  };
  const std::vector<Term> compact{Term::Rating, Term::WhiteAdv, Term::Tempo, Term::Pawn,
                                  Term::Knight, Term::Bishop,   Term::Rook,  Term::Queen};
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view tok = text.substr(start, comma - start);
    start = comma + 1;
    if (tok.empty()) continue;
    if (tok == "compact" || tok == "horde") {
      for (Term t : compact) add(t);
    } else if (tok == "passed") {
      for (Term t : compact) add(t);
      for (Term t : {Term::Passed2to4, Term::Passed5, Term::Passed6, Term::Passed7}) add(t);
    } else if (tok == "antichess") {
      for (Term t : compact) add(t);
      add(Term::King);
    } else {
      add(parse_term(tok));
    }
  }
  if (out.empty()) throw Error(ErrorKind::Usage, "empty term list");
  return out;
}

inline double term_value(const FeatureRow& r, Term t) {
  const auto& m = r.material;
  switch (t) {
    case Term::Rating: return r.rating_delta_rescaled();
    case Term::WhiteAdv: return 1.0;
    case Term::Tempo: return r.tempo;
    case Term::Pawn: return m.pawn;
    case Term::Knight: return m.knight;
    case Term::Bishop: return m.bishop;
    case Term::Rook: return m.rook;
    case Term::Queen: return m.queen;
    case Term::King:
      if (!r.has_king) throw Error(ErrorKind::Usage, "king term requested but rows carry no king delta");
      return m.king;
    case Term::Passed2to4:
    case Term::Passed5:
    case Term::Passed6:
    case Term::Passed7:
      if (!r.has_passed) throw Error(ErrorKind::Usage, "passed-pawn terms requested but rows carry none");
      return m.passed[static_cast<std::size_t>(static_cast<int>(t) - static_cast<int>(Term::Passed2to4))];
  }
  return 0;
}

// Each game is `trials` Bernoulli pseudo-observations with `successes`
// ones: win (1,1), draw (1,0), loss (0,0) for the default of two.
struct Design {
  std::vector<std::string> terms;
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> x;  // row major, n by p
  std::vector<double> successes;
  int trials = 2;
  int rating_column = -1;  // quoted as a raw ratio instead of Elo units

  double& at(std::size_t i, std::size_t j) { return x[i * p + j]; }
  double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
};

inline Design make_design(const std::vector<FeatureRow>& rows, const std::vector<Term>& terms) {
  Design d;
  d.n = rows.size();
  d.p = terms.size();
  d.x.resize(d.n * d.p);
  d.successes.resize(d.n);
  for (std::size_t j = 0; j < terms.size(); ++j) {
    d.terms.emplace_back(to_string(terms[j]));
    if (terms[j] == Term::Rating) d.rating_column = static_cast<int>(j);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < terms.size(); ++j) d.at(i, j) = term_value(rows[i], terms[j]);
    d.successes[i] = 2.0 * rows[i].outcome;
  }
  return d;
}

enum class FitStatus : std::uint8_t { Converged, NotConverged, QuasiSeparated };

constexpr std::string_view to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::NotConverged: return "not_converged";
    case FitStatus::QuasiSeparated: return "quasi_separated";
  }
  return "?";
}

struct RegressionFit {
  std::vector<std::string> terms;
  std::vector<double> coefficients;  // Elo-like units; the rating term is a raw ratio
  std::vector<double> logit;         // same coefficients on the logit scale
  // Classical SEs in the units of `coefficients`. They treat the doubled
  // pseudo-observations as independent, so they are too small by about sqrt(2).
  std::vector<double> standard_errors;
  int rating_index = -1;
  std::size_t n_games = 0;
  std::size_t n_pseudo = 0;
  double log_likelihood = 0;
  FitStatus status = FitStatus::NotConverged;
  int iterations = 0;
  double max_gradient = 0;  // max |score| divided by the pseudo-observation count
  std::vector<double> log_likelihood_trace;  // after each iteration, starting at zero coefficients

  bool converged() const { return status == FitStatus::Converged; }

  std::optional<std::size_t> index_of(std::string_view term) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == term) return j;
    return std::nullopt;
  }

  double coefficient(std::string_view term) const {
    auto j = index_of(term);
    if (!j) throw Error(ErrorKind::Usage, "fit has no term '" + std::string(term) + "'");
    return coefficients[*j];
  }
};

// Converts between logit and quoted units for column j.
inline double quote_scale(int rating_index, std::size_t j) {
  return static_cast<int>(j) == rating_index ? 1.0 : 1.0 / kEloScale;
}

struct FitOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;      // on max |step| in logit units
  double separation_bound = 50;  // |logit coefficient| beyond this flags quasi-separation
  bool standard_errors = true;
};

namespace detail {

inline double log_likelihood(const Design& d, const Eigen::VectorXd& beta) {
  const double m = d.trials;
  double ll = 0;
  const double* row = d.x.data();
  for (std::size_t i = 0; i < d.n; ++i, row += d.p) {
    double eta = 0;
    for (std::size_t j = 0; j < d.p; ++j) eta += row[j] * beta[static_cast<Eigen::Index>(j)];
    ll += d.successes[i] * eta - m * log1p_exp(eta);
  }
  return ll;
}

// Score vector and Fisher information at beta.
inline void score_and_information(const Design& d, const Eigen::VectorXd& beta, Eigen::VectorXd& g,
                                  Eigen::MatrixXd& h) {
  const auto p = static_cast<Eigen::Index>(d.p);
  g.setZero(p);
  h.setZero(p, p);
  const double m = d.trials;
  const double* row = d.x.data();
  for (std::size_t i = 0; i < d.n; ++i, row += d.p) {
    double eta = 0;
    for (Eigen::Index j = 0; j < p; ++j) eta += row[j] * beta[j];
    const double mu = logistic(eta);
    const double w = m * mu * (1.0 - mu);
    const double r = d.successes[i] - m * mu;
    for (Eigen::Index j = 0; j < p; ++j) {
      g[j] += r * row[j];
      const double wj = w * row[j];
      for (Eigen::Index k = 0; k <= j; ++k) h(j, k) += wj * row[k];
    }
  }
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k < j; ++k) h(k, j) = h(j, k);
}

// Names the columns involved in an exact (to 1e-9) linear dependence.
inline std::vector<std::string> collinear_terms(const Design& d) {
  const auto p = static_cast<Eigen::Index>(d.p);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  const double* row = d.x.data();
  for (std::size_t i = 0; i < d.n; ++i, row += d.p)
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = 0; k <= j; ++k) gram(j, k) += row[j] * row[k];
  std::vector<std::string> bad;
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    scale[j] = gram(j, j) > 0 ? 1.0 / std::sqrt(gram(j, j)) : 0.0;
    if (gram(j, j) == 0) bad.push_back(d.terms[static_cast<std::size_t>(j)] + " (all zero)");
  }
  if (!bad.empty()) return bad;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k <= j; ++k) gram(k, j) = gram(j, k) = gram(j, k) * scale[j] * scale[k];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-9);
  if (lu.rank() == p) return {};
  const Eigen::MatrixXd kernel = lu.kernel();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (kernel.row(j).cwiseAbs().maxCoeff() > 1e-6) bad.push_back(d.terms[static_cast<std::size_t>(j)]);
  }
  return bad;
}

}  // namespace detail

inline RegressionFit fit_design(const Design& d, const FitOptions& opt = {}) {
  if (d.p == 0) throw Error(ErrorKind::Usage, "no terms to fit");
  if (d.n < d.p) throw Error(ErrorKind::RankDeficient, "fewer games than terms");
  if (auto bad = detail::collinear_terms(d); !bad.empty()) {
    std::string names;
    for (const auto& b : bad) names += (names.empty() ? "" : ", ") + b;
    throw Error(ErrorKind::RankDeficient, "collinear terms: " + names);
  }

  const auto p = static_cast<Eigen::Index>(d.p);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd g(p);
  Eigen::MatrixXd h(p, p);
  double ll = detail::log_likelihood(d, beta);
  RegressionFit fit;
  fit.status = FitStatus::NotConverged;
  fit.log_likelihood_trace.push_back(ll);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    fit.iterations = it;
    detail::score_and_information(d, beta, g, h);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) throw Error(ErrorKind::RankDeficient, "information matrix is singular");
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = detail::log_likelihood(d, next);
    for (int halving = 0; halving < 60 && !(ll_next >= ll - 1e-12 * std::abs(ll)); ++halving) {
      t *= 0.5;
      next = beta + t * step;
      ll_next = detail::log_likelihood(d, next);
    }
    const double moved = (t * step).cwiseAbs().maxCoeff();
    beta = next;
    ll = ll_next;
    fit.log_likelihood_trace.push_back(ll);
    if (beta.cwiseAbs().maxCoeff() > opt.separation_bound) {
      fit.status = FitStatus::QuasiSeparated;
      break;
    }
    if (moved < opt.tolerance) {
      fit.status = FitStatus::Converged;
      break;
    }
  }

  fit.terms = d.terms;
  fit.rating_index = d.rating_column;
  fit.n_games = d.n;
  fit.n_pseudo = d.n * static_cast<std::size_t>(d.trials);
  fit.log_likelihood = ll;
  fit.logit.resize(d.p);
  fit.coefficients.resize(d.p);
  for (std::size_t j = 0; j < d.p; ++j) {
    fit.logit[j] = beta[static_cast<Eigen::Index>(j)];
    fit.coefficients[j] = fit.logit[j] * quote_scale(d.rating_column, j);
  }
  detail::score_and_information(d, beta, g, h);
  fit.max_gradient = g.cwiseAbs().maxCoeff() / static_cast<double>(fit.n_pseudo);
  if (opt.standard_errors) {
    const Eigen::MatrixXd cov = h.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.standard_errors.resize(d.p);
    for (std::size_t j = 0; j < d.p; ++j) {
      const double v = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
      fit.standard_errors[j] = std::sqrt(std::max(v, 0.0)) * quote_scale(d.rating_column, j);
    }
  }
  return fit;
}

inline RegressionFit fit_logistic(const std::vector<FeatureRow>& rows, const std::vector<Term>& terms,
                                  const FitOptions& opt = {}) {
  if (rows.empty()) throw Error(ErrorKind::RankDeficient, "no rows to fit");
  return fit_design(make_design(rows, terms), opt);
}

inline const RegressionFit& require_converged(const RegressionFit& fit) {
  if (fit.status == FitStatus::NotConverged)
    throw Error(ErrorKind::NotConverged, "IRLS stopped after " + std::to_string(fit.iterations) + " iterations");
  if (fit.status == FitStatus::QuasiSeparated)
    throw Error(ErrorKind::NotConverged, "quasi-separation: a logit coefficient exceeded the bound");
  return fit;
}

inline double predict_logit(const RegressionFit& fit, const std::vector<double>& x) {
  if (x.size() != fit.logit.size()) throw Error(ErrorKind::Usage, "feature vector length does not match fit");
  double eta = 0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += fit.logit[j] * x[j];
  return eta;
}

inline double predict_probability(const RegressionFit& fit, const std::vector<double>& x) {
  return logistic(predict_logit(fit, x));
}

inline double predict_probability(const RegressionFit& fit, const FeatureRow& row) {
  std::vector<double> x;
  x.reserve(fit.terms.size());
  for (const auto& t : fit.terms) x.push_back(term_value(row, parse_term(t)));
  return predict_probability(fit, x);
}

}  // namespace pieceval
