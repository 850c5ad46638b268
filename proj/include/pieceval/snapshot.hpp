#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "board.hpp"
#include "elo.hpp"
#include "error.hpp"
#include "pgn.hpp"
#include "random.hpp"

namespace pieceval {

struct FeatureRow {
  std::uint64_t game = 0;
  int snapshot_ply = 0;
  int total_ply = 0;
  double rating_delta = 0;  // rating points, white minus black
  int tempo = 1;            // +1 when white is to move at the snapshot
  MaterialDelta material;
  bool has_king = false;   // Antichess only
  bool has_passed = true;  // dropped for Horde
  double outcome = 0.5;    // from white's point of view

  double rating_delta_rescaled() const { return kEloScale * rating_delta; }
  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

enum class SchemeKind : std::uint8_t { Uniform, FirstThird, MiddleThird, LastThird, PlyRange };

struct SnapshotScheme {
  SchemeKind kind = SchemeKind::Uniform;
  double lo = 0, hi = 0;  // PlyRange bounds, inclusive
  int depth = 0;          // no-capture lookahead: 0, 1 or 2 played moves
  std::uint64_t seed = 0;

  void validate() const {
    if (depth < 0 || depth > 2) throw Error(ErrorKind::Usage, "no-capture depth must be 0, 1 or 2");
    if (kind == SchemeKind::PlyRange && lo > hi) throw Error(ErrorKind::Usage, "ply range lo > hi");
  }

  std::string name() const {
    switch (kind) {
      case SchemeKind::Uniform: return "uniform";
      case SchemeKind::FirstThird: return "first-third";
      case SchemeKind::MiddleThird: return "middle-third";
      case SchemeKind::LastThird: return "last-third";
      case SchemeKind::PlyRange: {
        std::ostringstream s;
        s << "range:" << lo << ':' << hi;
        return s.str();
      }
    }
    return "?";
  }

  // "uniform", "first-third", "middle-third", "last-third", "range:LO:HI"
  static SnapshotScheme parse(std::string_view text, int depth = 0, std::uint64_t seed = 0) {
    SnapshotScheme s;
    s.depth = depth;
    s.seed = seed;
    if (text == "uniform") s.kind = SchemeKind::Uniform;
    else if (text == "first-third") s.kind = SchemeKind::FirstThird;
    else if (text == "middle-third") s.kind = SchemeKind::MiddleThird;
    else if (text == "last-third") s.kind = SchemeKind::LastThird;
    else if (text.substr(0, 6) == "range:") {
      s.kind = SchemeKind::PlyRange;
      const std::string rest(text.substr(6));
      const auto colon = rest.find(':');
      if (colon == std::string::npos) throw Error(ErrorKind::Usage, "range scheme needs range:LO:HI");
      try {
        std::size_t used = 0;
        s.lo = std::stod(rest.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("lo");
        s.hi = std::stod(rest.substr(colon + 1), &used);
        if (used != rest.size() - colon - 1) throw std::invalid_argument("hi");
      } catch (const std::logic_error&) {
        throw Error(ErrorKind::Usage, "bad range scheme '" + std::string(text) + "'");
      }
    } else {
      throw Error(ErrorKind::Usage, "unknown snapshot scheme '" + std::string(text) + "'");
    }
    s.validate();
    return s;
  }
};

// Inclusive ply range of one of the four standard schemes, intersected with
// [2, total]. Empty ranges come back with first > second.
inline std::pair<int, int> scheme_range(SchemeKind kind, int total) {
  const int a = (total + 2) / 3;      // ceil(total / 3)
  const int b = (2 * total + 2) / 3;  // ceil(2 total / 3)
  std::pair<int, int> r;
  switch (kind) {
    case SchemeKind::Uniform: r = {2, total}; break;
    case SchemeKind::FirstThird: r = {2, a}; break;
    case SchemeKind::MiddleThird: r = {a + 1, b}; break;
    case SchemeKind::LastThird: r = {b + 1, total}; break;
    case SchemeKind::PlyRange: throw Error(ErrorKind::Usage, "ply range has no fixed scheme range");
  }
  r.first = std::max(r.first, 2);
  r.second = std::min(r.second, total);
  return r;
}

// The four standard snapshots (uniform, first, middle, last third), drawn in
// that order from a stream keyed by (seed, game ordinal). 0 = empty range.
struct SnapshotPlies {
  std::array<int, 4> ply{};
};

inline SnapshotPlies draw_snapshot_plies(int total, std::uint64_t seed, std::uint64_t ordinal) {
  Rng rng = make_rng({seed, ordinal});
  SnapshotPlies out;
  constexpr std::array<SchemeKind, 4> kinds{SchemeKind::Uniform, SchemeKind::FirstThird, SchemeKind::MiddleThird,
                                            SchemeKind::LastThird};
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto [lo, hi] = scheme_range(kinds[i], total);
    out.ply[i] = lo <= hi ? static_cast<int>(uniform_int(rng, lo, hi)) : 0;
  }
  return out;
}

struct SnapshotReport {
  std::uint64_t games = 0;
  std::uint64_t rows = 0;
  std::uint64_t empty_range = 0;
  std::uint64_t capture_filtered = 0;
  std::uint64_t imbalance_rejected = 0;
  std::uint64_t replay_errors = 0;

  void merge(const SnapshotReport& o) {
    games += o.games;
    rows += o.rows;
    empty_range += o.empty_range;
    capture_filtered += o.capture_filtered;
    imbalance_rejected += o.imbalance_rejected;
    replay_errors += o.replay_errors;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["games"] = games;
    j["rows"] = rows;
    j["empty_range"] = empty_range;
    j["capture_filtered"] = capture_filtered;
    j["imbalance_rejected"] = imbalance_rejected;
    j["replay_errors"] = replay_errors;
    return j;
  }
};

namespace detail {

inline Position replay_to(const GameRecord& g, int ply) {
  Position pos = g.start_position();
  for (int i = 0; i < ply; ++i) pos = apply_move(pos, parse_san(pos, g.moves[static_cast<std::size_t>(i)]));
  return pos;
}

// True when none of the next `depth` played moves after `ply` is a capture.
inline bool quiet_after(const GameRecord& g, Position pos, int ply, int depth) {
  for (int k = 0; k < depth && ply + k < g.total_ply(); ++k) {
    const Move m = parse_san(pos, g.moves[static_cast<std::size_t>(ply + k)]);
    if (pos.is_capture(m)) return false;
    pos = apply_move(pos, m);
  }
  return true;
}

inline FeatureRow make_row(const GameRecord& g, const Position& pos, int ply) {
  FeatureRow r;
  r.game = g.ordinal;
  r.snapshot_ply = ply;
  r.total_ply = g.total_ply();
  r.rating_delta = g.rating_delta();
  r.tempo = pos.side_to_move() == Color::White ? 1 : -1;
  r.material = delta(material_counts(pos));
  r.has_king = g.variant == Variant::Antichess;
  r.has_passed = g.variant != Variant::Horde;
  if (!r.has_king) r.material.king = 0;
  if (!r.has_passed) r.material.passed = {};
  r.outcome = g.outcome();
  return r;
}

}  // namespace detail

// Row at a specific ply, or none when the quiet or imbalance filters fail.
inline std::optional<FeatureRow> snapshot_at(const GameRecord& g, int ply, int depth, const FilterPolicy& policy,
                                             SnapshotReport* report = nullptr) {
  SnapshotReport local;
  SnapshotReport& rep = report ? *report : local;
  try {
    const Position pos = detail::replay_to(g, ply);
    if (!detail::quiet_after(g, pos, ply, depth)) {
      ++rep.capture_filtered;
      return std::nullopt;
    }
    FeatureRow row = detail::make_row(g, pos, ply);
    if (!imbalance_ok(row.material, policy)) {
      ++rep.imbalance_rejected;
      return std::nullopt;
    }
    ++rep.rows;
    return row;
  } catch (const Error&) {
    ++rep.replay_errors;
    return std::nullopt;
  }
}

// One row per game from the first of the four standard snapshots lying in
// [lo, hi] whose following moves are quiet.
inline std::optional<FeatureRow> snapshot_for_range(const GameRecord& g, const SnapshotPlies& plies, double lo,
                                                    double hi, int depth, const FilterPolicy& policy,
                                                    SnapshotReport* report = nullptr) {
  SnapshotReport local;
  SnapshotReport& rep = report ? *report : local;
  bool any_in_range = false;
  try {
    for (int ply : plies.ply) {
      if (ply == 0 || ply < lo || ply > hi) continue;
      any_in_range = true;
      const Position pos = detail::replay_to(g, ply);
      if (!detail::quiet_after(g, pos, ply, depth)) continue;
      FeatureRow row = detail::make_row(g, pos, ply);
      if (!imbalance_ok(row.material, policy)) {
        ++rep.imbalance_rejected;
        return std::nullopt;
      }
      ++rep.rows;
      return row;
    }
  } catch (const Error&) {
    ++rep.replay_errors;
    return std::nullopt;
  }
  if (any_in_range) ++rep.capture_filtered;
  else ++rep.empty_range;
  return std::nullopt;
}

inline std::optional<FeatureRow> snapshot(const GameRecord& g, const SnapshotScheme& scheme,
                                          const FilterPolicy& policy, SnapshotReport* report = nullptr) {
  SnapshotReport local;
  SnapshotReport& rep = report ? *report : local;
  ++rep.games;
  const SnapshotPlies plies = draw_snapshot_plies(g.total_ply(), scheme.seed, g.ordinal);
  if (scheme.kind == SchemeKind::PlyRange)
    return snapshot_for_range(g, plies, scheme.lo, scheme.hi, scheme.depth, policy, &rep);
  const int ply = plies.ply[static_cast<std::size_t>(scheme.kind)];
  if (ply == 0) {
    ++rep.empty_range;
    return std::nullopt;
  }
  return snapshot_at(g, ply, scheme.depth, policy, &rep);
}

inline std::vector<FeatureRow> snapshot_games(const std::vector<GameRecord>& games, const SnapshotScheme& scheme,
                                              const FilterPolicy& policy, SnapshotReport& report,
                                              unsigned threads = 0) {
  scheme.validate();
  std::vector<std::optional<FeatureRow>> slots(games.size());
  std::vector<SnapshotReport> reports(games.size());
  parallel_for(
      games.size(), [&](std::size_t i) { slots[i] = snapshot(games[i], scheme, policy, &reports[i]); }, threads);
  std::vector<FeatureRow> rows;
  for (std::size_t i = 0; i < games.size(); ++i) {
    report.merge(reports[i]);
    if (slots[i]) rows.push_back(*slots[i]);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Feature table: tab separated, one header line, NA for absent columns.

inline constexpr std::array<std::string_view, 18> kFeatureColumns{
    "game",     "snapshot_ply", "total_ply",    "rating_delta", "rating_delta_rescaled", "white_adv",
    "tempo",    "d_pawn",       "d_knight",     "d_bishop",     "d_rook",                "d_queen",
    "d_king",   "d_passed_2_4", "d_passed_5",   "d_passed_6",   "d_passed_7",            "outcome"};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_feature_table(std::ostream& out, const std::vector<FeatureRow>& rows, bool header = true) {
  if (header) {
    for (std::size_t i = 0; i < kFeatureColumns.size(); ++i) out << (i ? "\t" : "") << kFeatureColumns[i];
    out << '\n';
  }
  for (const auto& r : rows) {
    const auto& m = r.material;
    out << r.game << '\t' << r.snapshot_ply << '\t' << r.total_ply << '\t' << format_double(r.rating_delta) << '\t'
        << format_double(r.rating_delta_rescaled()) << "\t1\t" << r.tempo << '\t' << m.pawn << '\t' << m.knight << '\t'
        << m.bishop << '\t' << m.rook << '\t' << m.queen << '\t';
    if (r.has_king) out << m.king;
    else out << "NA";
    for (int b = 0; b < 4; ++b) {
      out << '\t';
      if (r.has_passed) out << m.passed[static_cast<std::size_t>(b)];
      else out << "NA";
    }
    out << '\t' << format_double(r.outcome) << '\n';
  }
}

inline std::vector<FeatureRow> read_feature_table(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  // Leading '#' lines carry artifact metadata.
  while (std::getline(in, line) && !line.empty() && line[0] == '#') ++lineno;
  if (!in && line.empty()) throw Error(ErrorKind::ParseError, "empty feature table");
  {
    std::istringstream hdr(line);
    std::string col;
    for (auto expected : kFeatureColumns) {
      if (!std::getline(hdr, col, '\t') || col != expected)
        throw Error(ErrorKind::ParseError, "feature table header mismatch at '" + std::string(expected) + "'");
    }
  }
  std::vector<FeatureRow> rows;
  std::vector<std::string> f;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    f.clear();
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != kFeatureColumns.size())
      throw Error(ErrorKind::ParseError, "feature table line " + std::to_string(lineno) + ": wrong column count");
    try {
      FeatureRow r;
      r.game = std::stoull(f[0]);
      r.snapshot_ply = std::stoi(f[1]);
      r.total_ply = std::stoi(f[2]);
      r.rating_delta = std::stod(f[3]);
      r.tempo = std::stoi(f[6]);
      auto& m = r.material;
      m.pawn = std::stoi(f[7]);
      m.knight = std::stoi(f[8]);
      m.bishop = std::stoi(f[9]);
      m.rook = std::stoi(f[10]);
      m.queen = std::stoi(f[11]);
      r.has_king = f[12] != "NA";
      if (r.has_king) m.king = std::stoi(f[12]);
      r.has_passed = f[13] != "NA";
      if (r.has_passed)
        for (std::size_t b = 0; b < 4; ++b) m.passed[b] = std::stoi(f[13 + b]);
      r.outcome = std::stod(f[17]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::ParseError, "feature table line " + std::to_string(lineno) + ": bad number");
    }
  }
  if (in.bad()) throw Error(ErrorKind::IoError, "read failure in feature table");
  return rows;
}

}  // namespace pieceval
