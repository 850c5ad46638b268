#pragma once

// Report tables: values relative to a pawn, rounded handicaps, per-ply
// curves, and the historical value systems. Also the artifact header shared
// by every file the command line writes.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "board.hpp"
#include "error.hpp"
#include "glm.hpp"
#include "selfplay.hpp"
#include "simex.hpp"
#include "snapshot.hpp"

#ifndef PIECEVAL_VERSION
#define PIECEVAL_VERSION "0.0.0"
#endif

namespace pieceval {

// A labelled set of coefficients in Elo-like units.
struct CoefficientSet {
  std::string label;
  std::vector<std::string> terms;
  std::vector<double> values;
  std::optional<double> mean_ply;
  std::size_t rows = 0;

  std::optional<double> get(std::string_view term) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == term) return values[j];
    return std::nullopt;
  }
};

inline CoefficientSet coefficient_set(const RegressionFit& f, std::string label = "") {
  return {std::move(label), f.terms, f.coefficients, std::nullopt, f.n_games};
}

inline CoefficientSet coefficient_set(const CalibratedFit& f, std::string label = "", std::size_t rows = 0) {
  return {std::move(label), f.terms, f.coefficients, std::nullopt, rows};
}

// ---------------------------------------------------------------------------

struct RelativeRow {
  std::string term;
  double raw = 0;
  std::optional<double> ratio;
};

struct RelativeValues {
  double pawn = 0;
  bool ratios_available = false;
  std::vector<RelativeRow> rows;
  std::vector<std::string> notes;
};

inline constexpr std::array<std::string_view, 5> kRelativeTerms{"knight", "bishop", "rook", "queen", "king"};

inline RelativeValues report_relative_values(const CoefficientSet& fit) {
  const auto pawn = fit.get("pawn");
  if (!pawn) throw Error(ErrorKind::Usage, "relative values need a pawn term");
  RelativeValues out;
  out.pawn = *pawn;
  out.ratios_available = std::abs(*pawn) >= 1;
  if (!out.ratios_available)
    out.notes.push_back(std::string(to_string(ErrorKind::PawnNearZero)) + ": |pawn| = " + format_double(std::abs(*pawn)) +
                        " is below 1 Elo unit; only absolute values are given");
  else if (*pawn < 0)
    out.notes.push_back("the pawn coefficient is negative; ratios are piece value divided by that negative pawn value");
  for (auto t : kRelativeTerms) {
    const auto v = fit.get(t);
    if (!v) continue;
    RelativeRow r{std::string(t), *v, std::nullopt};
    if (out.ratios_available) r.ratio = *v / *pawn;
    out.rows.push_back(r);
  }
  if (out.ratios_available && *pawn < 0)
    if (auto k = fit.get("king"); k && *k > 0)
      out.notes.push_back("a negative king ratio here means the king has a small positive value");
  return out;
}

inline double round_to_25(double v) { return 25 * std::round(v / 25); }

struct EqualizerRow {
  std::string term;
  double raw = 0;
  double rounded = 0;
};

struct Equalizers {
  std::vector<EqualizerRow> rows;
  std::string caveat;
};

inline Equalizers report_equalizers(const CoefficientSet& early) {
  Equalizers e;
  for (auto t : {"pawn", "knight", "bishop", "rook", "queen"})
    if (auto v = early.get(t)) e.rows.push_back({t, *v, round_to_25(*v)});
  e.caveat =
      "Handicaps ignore positional effects: taking a piece off the starting board also changes the mobility "
      "of what remains. Removing major pieces for a large skill gap is safer than removing pawns.";
  return e;
}

struct PlyCurveRow {
  std::string label;
  std::optional<double> mean_ply;
  std::string term;
  double raw = 0;
  std::optional<double> relative;  // raw / |pawn|
};

inline std::vector<PlyCurveRow> report_ply_curves(const std::vector<CoefficientSet>& fits) {
  std::vector<PlyCurveRow> out;
  for (const auto& f : fits) {
    const auto pawn = f.get("pawn");
    for (std::size_t j = 0; j < f.terms.size(); ++j) {
      PlyCurveRow r{f.label, f.mean_ply, f.terms[j], f.values[j], std::nullopt};
      if (pawn && *pawn != 0 && f.terms[j] != "rating") r.relative = f.values[j] / std::abs(*pawn);
      out.push_back(r);
    }
  }
  return out;
}

// Net effect for white of the variant's starting imbalance: intercept, tempo
// (white to move) and each material term times the opening delta.
inline double opening_effect(const CoefficientSet& fit, Variant v) {
  const Position start = Position::start(v);
  const MaterialDelta d = delta(material_counts(start));
  double net = fit.get("white_adv").value_or(0) + fit.get("tempo").value_or(0);
  const std::array<std::pair<const char*, int>, 6> m{
      {{"pawn", d.pawn}, {"knight", d.knight}, {"bishop", d.bishop}, {"rook", d.rook}, {"queen", d.queen},
       {"king", d.king}}};
  for (auto [t, n] : m) net += fit.get(t).value_or(0) * n;
  return net;
}

struct HistoricalSystem {
  std::string_view source;
  int year;  // 0 when undated
  double knight, bishop, rook, queen;
};

inline constexpr std::array<HistoricalSystem, 28> kHistoricalSystems{{
    {"Mobility", 0, 3.00, 5.00, 8.00, 13.00},
    {"Modenese", 1750, 3.00, 3.00, 5.00, 9.00},
    {"Sarratt", 1813, 3.10, 3.30, 5.00, 7.90},
    {"Philidor", 1817, 3.05, 3.50, 5.48, 9.94},
    {"Peter Pratt", 1833, 3.00, 3.00, 5.00, 10.00},
    {"Bilguer", 1843, 3.50, 3.50, 5.70, 10.30},
    {"Tomlinson", 1845, 3.05, 3.50, 5.48, 9.94},
    {"Lasker", 1934, 3.00, 3.00, 5.00, 9.50},
    {"Maizelis", 1936, 3.50, 3.50, 5.00, 9.75},
    {"Fine", 1942, 3.00, 3.00, 5.00, 9.00},
    {"Euwe", 1944, 3.50, 3.50, 5.50, 10.00},
    {"Lasker", 1947, 3.50, 3.50, 5.00, 8.50},
    {"Horowitz", 1951, 3.00, 3.10, 5.00, 9.00},
    {"Turing", 1953, 3.00, 3.50, 5.00, 10.00},
    {"Evans", 1958, 3.50, 3.62, 5.00, 10.00},
    {"Styeklov", 1961, 3.50, 3.50, 5.00, 9.50},
    {"Fischer", 1972, 3.00, 3.25, 5.00, 9.00},
    {"Euwe", 1974, 3.00, 3.00, 4.25, 8.50},
    {"Kasparov", 1986, 3.00, 3.15, 4.50, 9.00},
    {"Soviet chess encyclopedia", 1990, 3.00, 3.00, 5.00, 9.50},
    {"Hooper and Whyld", 1992, 4.00, 3.50, 7.00, 13.50},
    {"Berliner", 1999, 3.20, 3.33, 5.10, 8.80},
    {"Kaufman", 1999, 3.25, 3.25, 5.00, 9.75},
    {"Kaufman", 2011, 3.50, 3.50, 5.25, 10.00},
    {"Kurzdorfer", 2003, 3.50, 3.50, 5.00, 9.00},
    {"Soltis", 2004, 3.00, 3.00, 4.50, 9.00},
    {"Yevgeny Gik", 2004, 2.40, 4.00, 6.40, 10.40},
    {"AlphaZero", 2020, 3.05, 3.33, 5.63, 9.50},
}};

struct HistoricalRow {
  std::string source;
  std::optional<int> year;
  std::array<std::optional<double>, 4> values;  // knight, bishop, rook, queen
};

// The fit's ratios (when available) first, then the static systems.
inline std::vector<HistoricalRow> compare_historical(const std::optional<RelativeValues>& fit,
                                                     const std::string& label = "this fit") {
  std::vector<HistoricalRow> out;
  if (fit && fit->ratios_available) {
    HistoricalRow r{label, std::nullopt, {}};
    const std::array<std::string_view, 4> names{"knight", "bishop", "rook", "queen"};
    for (std::size_t k = 0; k < 4; ++k)
      for (const auto& row : fit->rows)
        if (row.term == names[k]) r.values[k] = row.ratio;
    out.push_back(r);
  }
  for (const auto& h : kHistoricalSystems)
    out.push_back({std::string(h.source), h.year ? std::optional<int>(h.year) : std::nullopt,
                   {h.knight, h.bishop, h.rook, h.queen}});
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

struct ArtifactHeader {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> extra;  // row counts and similar

  void add(std::string key, std::string value) { extra.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, std::size_t value) { extra.emplace_back(std::move(key), std::to_string(value)); }
};

inline std::string config_hash(const nlohmann::ordered_json& config) { return hex64(fnv1a(config.dump())); }

inline void write_header(std::ostream& out, const ArtifactHeader& h) {
  out << "# pieceval " << PIECEVAL_VERSION << '\n';
  out << "# command: " << h.command << '\n';
  out << "# config_hash: " << h.config_hash << '\n';
  out << "# seed: " << h.seed << '\n';
  for (const auto& [k, v] : h.extra) out << "# " << k << ": " << v << '\n';
}

inline nlohmann::ordered_json header_json(const ArtifactHeader& h) {
  nlohmann::ordered_json j;
  j["version"] = PIECEVAL_VERSION;
  j["command"] = h.command;
  j["config_hash"] = h.config_hash;
  j["seed"] = h.seed;
  for (const auto& [k, v] : h.extra) j[k] = v;
  return j;
}

inline std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline void write_relative(std::ostream& out, const RelativeValues& r) {
  out << "term\traw\tratio_to_pawn\n";
  out << "pawn\t" << format_double(r.pawn) << '\t' << (r.ratios_available ? "1" : "NA") << '\n';
  for (const auto& row : r.rows) out << row.term << '\t' << format_double(row.raw) << '\t' << opt_str(row.ratio) << '\n';
  for (const auto& n : r.notes) out << "# note: " << n << '\n';
}

inline void write_equalizers(std::ostream& out, const Equalizers& e) {
  out << "term\traw\trounded_25\n";
  for (const auto& r : e.rows) out << r.term << '\t' << format_double(r.raw) << '\t' << format_double(r.rounded) << '\n';
  out << "# note: " << e.caveat << '\n';
}

inline void write_ply_curves(std::ostream& out, const std::vector<PlyCurveRow>& rows) {
  out << "label\tmean_ply\tterm\traw\trelative_to_abs_pawn\n";
  for (const auto& r : rows)
    out << r.label << '\t' << opt_str(r.mean_ply) << '\t' << r.term << '\t' << format_double(r.raw) << '\t'
        << opt_str(r.relative) << '\n';
}

inline void write_historical(std::ostream& out, const std::vector<HistoricalRow>& rows) {
  out << "source\tyear\tknight\tbishop\trook\tqueen\n";
  for (const auto& r : rows) {
    out << r.source << '\t' << (r.year ? std::to_string(*r.year) : "NA");
    for (const auto& v : r.values) out << '\t' << opt_str(v);
    out << '\n';
  }
}

// Coefficient tables written by `fit` and `simex`: header lines, then
// term / value / std_error.
inline void write_coefficients(std::ostream& out, const ArtifactHeader& h, const CoefficientSet& c,
                               const std::vector<double>& std_errors = {}) {
  write_header(out, h);
  if (c.mean_ply) out << "# mean_ply: " << format_double(*c.mean_ply) << '\n';
  out << "# rows: " << c.rows << '\n';
  out << "term\tvalue\tstd_error\n";
  for (std::size_t j = 0; j < c.terms.size(); ++j)
    out << c.terms[j] << '\t' << format_double(c.values[j]) << '\t'
        << (j < std_errors.size() ? format_double(std_errors[j]) : "NA") << '\n';
}

inline CoefficientSet read_coefficients(std::istream& in, std::string label = "") {
  CoefficientSet c;
  c.label = std::move(label);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# mean_ply: ", 0) == 0) c.mean_ply = std::stod(line.substr(12));
      if (line.rfind("# rows: ", 0) == 0) c.rows = std::stoull(line.substr(8));
      continue;
    }
    if (!header) {
      if (line.rfind("term\tvalue", 0) != 0) throw Error(ErrorKind::ParseError, "not a coefficient table");
      header = true;
      continue;
    }
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos) throw Error(ErrorKind::ParseError, "bad coefficient row '" + line + "'");
    c.terms.push_back(line.substr(0, t1));
    try {
      c.values.push_back(std::stod(line.substr(t1 + 1, t2 - t1 - 1)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad coefficient value in '" + line + "'");
    }
  }
  if (!header) throw Error(ErrorKind::ParseError, "empty coefficient table");
  return c;
}

}  // namespace pieceval
