#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "board.hpp"
#include "error.hpp"

namespace pieceval {

enum class Termination : std::uint8_t { Normal, TimeForfeit, Abandoned, Other };
enum class Result : std::uint8_t { WhiteWin, BlackWin, Draw };

constexpr std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Normal: return "Normal";
    case Termination::TimeForfeit: return "Time forfeit";
    case Termination::Abandoned: return "Abandoned";
    case Termination::Other: return "Other";
  }
  return "Other";
}

inline Termination parse_termination(std::string_view s) {
  if (s == "Normal") return Termination::Normal;
  if (s == "Time forfeit" || s == "TimeForfeit") return Termination::TimeForfeit;
  if (s == "Abandoned") return Termination::Abandoned;
  return Termination::Other;
}

constexpr std::string_view to_string(Result r) {
  switch (r) {
    case Result::WhiteWin: return "1-0";
    case Result::BlackWin: return "0-1";
    case Result::Draw: return "1/2-1/2";
  }
  return "*";
}

inline std::optional<Result> parse_result(std::string_view s) {
  if (s == "1-0") return Result::WhiteWin;
  if (s == "0-1") return Result::BlackWin;
  if (s == "1/2-1/2") return Result::Draw;
  return std::nullopt;
}

// Outcome from white's point of view.
constexpr double score(Result r) {
  return r == Result::WhiteWin ? 1.0 : r == Result::BlackWin ? 0.0 : 0.5;
}

struct TimeControl {
  int initial_seconds = -1;  // -1: no clock ("-" in the PGN header)
  int increment_seconds = 0;

  bool unlimited() const { return initial_seconds < 0; }
  friend bool operator==(const TimeControl&, const TimeControl&) = default;
};

inline std::optional<TimeControl> parse_time_control(std::string_view s) {
  if (s == "-") return TimeControl{};
  const auto plus = s.find('+');
  if (plus == std::string_view::npos) return std::nullopt;
  TimeControl tc;
  auto a = std::from_chars(s.data(), s.data() + plus, tc.initial_seconds);
  auto b = std::from_chars(s.data() + plus + 1, s.data() + s.size(), tc.increment_seconds);
  if (a.ec != std::errc{} || a.ptr != s.data() + plus || b.ec != std::errc{} || b.ptr != s.data() + s.size())
    return std::nullopt;
  return tc;
}

inline std::string to_string(const TimeControl& tc) {
  if (tc.unlimited()) return "-";
  return std::to_string(tc.initial_seconds) + "+" + std::to_string(tc.increment_seconds);
}

struct YearMonth {
  int year = 1970;
  int month = 1;

  int index() const { return year * 12 + (month - 1); }
  static YearMonth from_index(int i) { return {i / 12, i % 12 + 1}; }
  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
  }
  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

// Accepts "2013.01.15", "2013-01", "2013.01.??".
inline std::optional<YearMonth> parse_year_month(std::string_view s) {
  if (s.size() < 7) return std::nullopt;
  YearMonth ym;
  auto a = std::from_chars(s.data(), s.data() + 4, ym.year);
  auto b = std::from_chars(s.data() + 5, s.data() + 7, ym.month);
  if (a.ec != std::errc{} || b.ec != std::errc{} || ym.month < 1 || ym.month > 12) return std::nullopt;
  return ym;
}

struct GameRecord {
  std::uint64_t ordinal = 0;  // position in the source archive, counting every game seen
  Variant variant = Variant::Standard;
  std::string white;
  std::string black;
  int white_rating = 0;
  int black_rating = 0;
  std::optional<int> white_rating_diff;
  std::optional<int> black_rating_diff;
  TimeControl time_control;
  Termination termination = Termination::Normal;
  Result result = Result::Draw;
  std::optional<std::string> start_fen;
  std::vector<std::string> moves;
  YearMonth month;

  int total_ply() const { return static_cast<int>(moves.size()); }
  double outcome() const { return score(result); }
  int rating_delta() const { return white_rating - black_rating; }
  Position start_position() const {
    return start_fen ? Position::from_fen(*start_fen, variant) : Position::start(variant);
  }
  friend bool operator==(const GameRecord&, const GameRecord&) = default;
};

// NDJSON schema, one object per line. Keys are written in this order.
inline nlohmann::ordered_json to_json(const GameRecord& g) {
  nlohmann::ordered_json j;
  j["ordinal"] = g.ordinal;
  j["variant"] = std::string(to_string(g.variant));
  j["white"] = g.white;
  j["black"] = g.black;
  j["white_rating"] = g.white_rating;
  j["black_rating"] = g.black_rating;
  j["white_rating_diff"] = g.white_rating_diff ? nlohmann::ordered_json(*g.white_rating_diff) : nullptr;
  j["black_rating_diff"] = g.black_rating_diff ? nlohmann::ordered_json(*g.black_rating_diff) : nullptr;
  j["time_control"] = to_string(g.time_control);
  j["termination"] = std::string(to_string(g.termination));
  j["result"] = std::string(to_string(g.result));
  j["start_fen"] = g.start_fen ? nlohmann::ordered_json(*g.start_fen) : nullptr;
  j["month"] = g.month.str();
  j["moves"] = g.moves;
  return j;
}

inline GameRecord game_from_json(const nlohmann::json& j) {
  try {
    GameRecord g;
    g.ordinal = j.at("ordinal").get<std::uint64_t>();
    g.variant = parse_variant(j.at("variant").get<std::string>());
    g.white = j.at("white").get<std::string>();
    g.black = j.at("black").get<std::string>();
    g.white_rating = j.at("white_rating").get<int>();
    g.black_rating = j.at("black_rating").get<int>();
    if (j.contains("white_rating_diff") && !j["white_rating_diff"].is_null())
      g.white_rating_diff = j["white_rating_diff"].get<int>();
    if (j.contains("black_rating_diff") && !j["black_rating_diff"].is_null())
      g.black_rating_diff = j["black_rating_diff"].get<int>();
    auto tc = parse_time_control(j.at("time_control").get<std::string>());
    if (!tc) throw Error(ErrorKind::ParseError, "bad time_control");
    g.time_control = *tc;
    g.termination = parse_termination(j.at("termination").get<std::string>());
    auto r = parse_result(j.at("result").get<std::string>());
    if (!r) throw Error(ErrorKind::ParseError, "bad result");
    g.result = *r;
    if (j.contains("start_fen") && !j["start_fen"].is_null()) g.start_fen = j["start_fen"].get<std::string>();
    auto ym = parse_year_month(j.at("month").get<std::string>());
    if (!ym) throw Error(ErrorKind::ParseError, "bad month");
    g.month = *ym;
    g.moves = j.at("moves").get<std::vector<std::string>>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("game record: ") + e.what());
  }
}

inline void write_records(std::ostream& out, const std::vector<GameRecord>& games) {
  for (const auto& g : games) out << to_json(g).dump() << '\n';
}

inline std::vector<GameRecord> read_records(std::istream& in) {
  std::vector<GameRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::ParseError, "record line " + std::to_string(lineno) + " is not JSON");
    if (j.is_object() && j.contains("artifact")) continue;  // metadata line
    out.push_back(game_from_json(j));
  }
  if (in.bad()) throw Error(ErrorKind::IoError, "read failure in game records");
  return out;
}

// ---------------------------------------------------------------------------
// PGN streaming

struct StreamStats {
  std::uint64_t games_seen = 0;
  std::uint64_t records = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t variant_mismatch = 0;
  std::vector<std::string> error_samples;  // first few messages, for reports
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits movetext into SAN tokens, dropping comments, variations, NAGs and
// move numbers. Returns the terminating result token ("" if none).
inline std::string tokenize_movetext(std::string_view text, std::vector<std::string>& sans) {
  std::string terminator;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '{') {
      const auto close = text.find('}', i);
      if (close == std::string_view::npos) throw Error(ErrorKind::ParseError, "unterminated comment");
      i = close + 1;
    } else if (c == ';') {
      const auto eol = text.find('\n', i);
      i = eol == std::string_view::npos ? n : eol + 1;
    } else if (c == '(') {
      int depth = 0;
      for (; i < n; ++i) {
        if (text[i] == '{') {
          const auto close = text.find('}', i);
          if (close == std::string_view::npos) throw Error(ErrorKind::ParseError, "unterminated comment");
          i = close;
        } else if (text[i] == '(') {
          ++depth;
        } else if (text[i] == ')' && --depth == 0) {
          break;
        }
      }
      if (depth != 0) throw Error(ErrorKind::ParseError, "unbalanced variation");
      ++i;
    } else if (c == ')') {
      throw Error(ErrorKind::ParseError, "unbalanced variation");
    } else {
      std::size_t j = i;
      while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '{' && text[j] != '(' &&
             text[j] != ')' && text[j] != ';')
        ++j;
      std::string_view tok = text.substr(i, j - i);
      i = j;
      if (tok[0] == '$') continue;
      if (tok == "1-0" || tok == "0-1" || tok == "1/2-1/2" || tok == "*") {
        terminator = std::string(tok);
        break;
      }
      // "12." / "12..." / "12.e4"
      std::size_t k = 0;
      while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
      if (k > 0 && k < tok.size() && tok[k] == '.') {
        while (k < tok.size() && tok[k] == '.') ++k;
        tok.remove_prefix(k);
      } else if (k == tok.size()) {
        continue;  // bare move number without dot
      }
      if (tok.empty()) continue;
      sans.emplace_back(tok);
    }
  }
  return terminator;
}

inline int parse_int(std::string_view s, const char* what) {
  int v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++b;
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e) throw Error(ErrorKind::ParseError, std::string("bad ") + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

// Reads one game at a time from a concatenated PGN stream. Games of another
// variant are skipped silently (counted); malformed games are skipped and
// counted. Only a failing stream aborts.
class PgnReader {
 public:
  PgnReader(std::istream& in, Variant variant, bool validate_moves = true)
      : in_(in), variant_(variant), validate_(validate_moves) {}

  std::optional<GameRecord> next() {
    std::map<std::string, std::string> headers;
    std::string movetext;
    while (read_raw(headers, movetext)) {
      const std::uint64_t ordinal = stats_.games_seen++;
      try {
        auto rec = build(headers, movetext, ordinal);
        if (!rec) {
          ++stats_.variant_mismatch;
          continue;
        }
        ++stats_.records;
        return rec;
      } catch (const Error& e) {
        ++stats_.parse_errors;
        if (stats_.error_samples.size() < 10)
          stats_.error_samples.push_back("game " + std::to_string(ordinal) + ": " + e.what());
      }
    }
    return std::nullopt;
  }

  const StreamStats& stats() const { return stats_; }

 private:
  bool getline(std::string& line) {
    if (!std::getline(in_, line)) {
      if (in_.bad()) throw Error(ErrorKind::IoError, "read failure in PGN stream");
      return false;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  // Collects header lines then movetext up to the next header block.
  bool read_raw(std::map<std::string, std::string>& headers, std::string& movetext) {
    headers.clear();
    movetext.clear();
    std::string line;
    bool any = false;
    bool in_moves = false;
    if (pending_) {
      line = std::move(*pending_);
      pending_.reset();
    } else if (!getline(line)) {
      return false;
    }
    do {
      const auto t = detail::trim(line);
      if (t.empty()) {
        if (in_moves && !movetext.empty() && saw_terminator(movetext)) return true;
        continue;
      }
      if (t.front() == '[' && !in_comment(movetext)) {
        if (in_moves) {
          pending_ = line;
          return true;
        }
        any = true;
        add_header(t, headers);
      } else {
        any = true;
        in_moves = true;
        movetext.append(t);
        movetext.push_back('\n');
      }
    } while (getline(line));
    return any;
  }

  static bool in_comment(const std::string& text) {
    return std::count(text.begin(), text.end(), '{') > std::count(text.begin(), text.end(), '}');
  }

  static bool saw_terminator(const std::string& text) {
    const auto t = detail::trim(text);
    for (std::string_view r : {"1-0", "0-1", "1/2-1/2", "*"})
      if (t.size() >= r.size() && t.substr(t.size() - r.size()) == r) return !in_comment(text);
    return false;
  }

  static void add_header(std::string_view t, std::map<std::string, std::string>& headers) {
    // [Key "value"]
    const auto sp = t.find(' ');
    const auto q1 = t.find('"');
    const auto q2 = t.rfind('"');
    if (sp == std::string_view::npos || q1 == std::string_view::npos || q2 <= q1) {
      headers["__malformed"] = std::string(t);
      return;
    }
    headers[std::string(t.substr(1, sp - 1))] = std::string(t.substr(q1 + 1, q2 - q1 - 1));
  }

  std::optional<GameRecord> build(const std::map<std::string, std::string>& h, const std::string& movetext,
                                  std::uint64_t ordinal) const {
    auto get = [&](const char* key) -> const std::string* {
      auto it = h.find(key);
      return it == h.end() ? nullptr : &it->second;
    };
    if (h.count("__malformed")) throw Error(ErrorKind::ParseError, "malformed header " + h.at("__malformed"));
    Variant v = Variant::Standard;
    if (auto* s = get("Variant")) {
      if (*s == "From Position") v = Variant::Standard;
      else v = parse_variant(*s);
    }
    if (v != variant_) return std::nullopt;

    GameRecord g;
    g.ordinal = ordinal;
    g.variant = v;
    auto need = [&](const char* key) -> const std::string& {
      if (auto* s = get(key)) return *s;
      throw Error(ErrorKind::ParseError, std::string("missing header ") + key);
    };
    g.white = need("White");
    g.black = need("Black");
    g.white_rating = detail::parse_int(need("WhiteElo"), "WhiteElo");
    g.black_rating = detail::parse_int(need("BlackElo"), "BlackElo");
    if (g.white_rating <= 0 || g.black_rating <= 0) throw Error(ErrorKind::ParseError, "non-positive rating");
    if (auto* s = get("WhiteRatingDiff")) g.white_rating_diff = detail::parse_int(*s, "WhiteRatingDiff");
    if (auto* s = get("BlackRatingDiff")) g.black_rating_diff = detail::parse_int(*s, "BlackRatingDiff");
    auto tc = parse_time_control(need("TimeControl"));
    if (!tc) throw Error(ErrorKind::ParseError, "bad TimeControl");
    g.time_control = *tc;
    g.termination = get("Termination") ? parse_termination(*get("Termination")) : Termination::Other;
    const std::string* date = get("UTCDate");
    if (!date) date = get("Date");
    if (!date) throw Error(ErrorKind::ParseError, "missing UTCDate");
    auto ym = parse_year_month(*date);
    if (!ym) throw Error(ErrorKind::ParseError, "bad date '" + *date + "'");
    g.month = *ym;
    if (auto* s = get("FEN")) g.start_fen = *s;
    if (v == Variant::Chess960 && !g.start_fen) throw Error(ErrorKind::ParseError, "960 game without FEN");

    const std::string terminator = detail::tokenize_movetext(movetext, g.moves);
    auto tag_result = get("Result") ? parse_result(*get("Result")) : std::nullopt;
    auto text_result = parse_result(terminator);
    if (!tag_result && !text_result) throw Error(ErrorKind::ParseError, "no decided result");
    if (tag_result && text_result && *tag_result != *text_result)
      throw Error(ErrorKind::ParseError, "result tag disagrees with movetext");
    g.result = tag_result ? *tag_result : *text_result;

    if (validate_) {
      Position pos = g.start_position();
      for (std::size_t i = 0; i < g.moves.size(); ++i) {
        try {
          pos = apply_move(pos, parse_san(pos, g.moves[i]), Legality::Strict);
        } catch (const Error& e) {
          throw Error(ErrorKind::ParseError, "ply " + std::to_string(i + 1) + " '" + g.moves[i] + "': " + e.what());
        }
      }
    }
    return g;
  }

  std::istream& in_;
  Variant variant_;
  bool validate_;
  std::optional<std::string> pending_;
  StreamStats stats_;
};

template <typename Sink>
StreamStats stream_games(std::istream& in, Variant variant, Sink&& sink, bool validate_moves = true) {
  PgnReader reader(in, variant, validate_moves);
  while (auto g = reader.next()) sink(std::move(*g));
  return reader.stats();
}

inline std::vector<GameRecord> read_pgn(std::istream& in, Variant variant, StreamStats* stats = nullptr) {
  std::vector<GameRecord> out;
  auto s = stream_games(in, variant, [&](GameRecord&& g) { out.push_back(std::move(g)); });
  if (stats) *stats = s;
  return out;
}

// Lichess-style export of a record (used by the fixture generator).
inline void write_pgn(std::ostream& out, const GameRecord& g) {
  auto tag = [&](const char* k, const std::string& v) { out << '[' << k << " \"" << v << "\"]\n"; };
  if (g.variant != Variant::Standard) tag("Variant", std::string(to_string(g.variant)));
  tag("White", g.white);
  tag("Black", g.black);
  tag("Result", std::string(to_string(g.result)));
  tag("UTCDate", g.month.str().replace(4, 1, ".") + ".01");
  tag("WhiteElo", std::to_string(g.white_rating));
  tag("BlackElo", std::to_string(g.black_rating));
  auto signed_str = [](int v) { return (v > 0 ? "+" : "") + std::to_string(v); };
  if (g.white_rating_diff) tag("WhiteRatingDiff", signed_str(*g.white_rating_diff));
  if (g.black_rating_diff) tag("BlackRatingDiff", signed_str(*g.black_rating_diff));
  tag("TimeControl", to_string(g.time_control));
  tag("Termination", std::string(to_string(g.termination)));
  if (g.start_fen) {
    tag("FEN", *g.start_fen);
    tag("SetUp", "1");
  }
  out << '\n';
  const int first_ply = g.start_fen ? g.start_position().ply() : 0;
  std::size_t col = 0;
  auto emit = [&](const std::string& t) {
    if (col > 0 && col + t.size() + 1 > 79) {
      out << '\n';
      col = 0;
    } else if (col > 0) {
      out << ' ';
      ++col;
    }
    out << t;
    col += t.size();
  };
  for (std::size_t i = 0; i < g.moves.size(); ++i) {
    const int ply = first_ply + static_cast<int>(i);
    if (ply % 2 == 0) emit(std::to_string(ply / 2 + 1) + ". " + g.moves[i]);
    else if (i == 0) emit(std::to_string(ply / 2 + 1) + "... " + g.moves[i]);
    else emit(g.moves[i]);
  }
  emit(std::string(to_string(g.result)));
  out << "\n\n";
}

// ---------------------------------------------------------------------------
// Player history

class PlayerHistoryIndex {
 public:
  void add(const std::string& player, YearMonth month, std::uint32_t n = 1) { counts_[player][month.index()] += n; }

  void add(const GameRecord& g) {
    add(g.white, g.month);
    add(g.black, g.month);
  }

  std::uint32_t count(const std::string& player, YearMonth month) const {
    auto it = counts_.find(player);
    if (it == counts_.end()) return 0;
    auto jt = it->second.find(month.index());
    return jt == it->second.end() ? 0 : jt->second;
  }

  std::uint64_t total(const std::string& player) const {
    auto it = counts_.find(player);
    if (it == counts_.end()) return 0;
    std::uint64_t s = 0;
    for (const auto& [m, c] : it->second) s += c;
    return s;
  }

  // Games in the `window` calendar months strictly before `month`.
  std::uint64_t window_count(const std::string& player, YearMonth month, int window) const {
    auto it = counts_.find(player);
    if (it == counts_.end()) return 0;
    const int hi = month.index();
    std::uint64_t s = 0;
    for (auto jt = it->second.lower_bound(hi - window); jt != it->second.end() && jt->first < hi; ++jt) s += jt->second;
    return s;
  }

  void merge(const PlayerHistoryIndex& other) {
    for (const auto& [p, months] : other.counts_)
      for (const auto& [m, c] : months) counts_[p][m] += c;
  }

  std::size_t players() const { return counts_.size(); }
  const std::map<std::string, std::map<int, std::uint32_t>>& table() const { return counts_; }

  // Sorted binary table: magic, row count, then (name length, name, month index, count) rows, little endian.
  void save(std::ostream& out) const {
    out.write(kMagic, sizeof kMagic);
    std::uint64_t rows = 0;
    for (const auto& [p, months] : counts_) rows += months.size();
    put(out, rows, 8);
    for (const auto& [p, months] : counts_) {
      for (const auto& [m, c] : months) {
        put(out, p.size(), 4);
        out.write(p.data(), static_cast<std::streamsize>(p.size()));
        put(out, static_cast<std::uint32_t>(m), 4);
        put(out, c, 4);
      }
    }
    if (!out) throw Error(ErrorKind::IoError, "failed writing history index");
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    save(out);
  }

  static PlayerHistoryIndex load(std::istream& in) {
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(ErrorKind::IoError, "not a history index");
    PlayerHistoryIndex idx;
    const std::uint64_t rows = get(in, 8);
    std::string name;
    for (std::uint64_t r = 0; r < rows; ++r) {
      name.resize(get(in, 4));
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      const int m = static_cast<int>(get(in, 4));
      const auto c = static_cast<std::uint32_t>(get(in, 4));
      if (!in) throw Error(ErrorKind::IoError, "truncated history index");
      idx.counts_[name][m] = c;
    }
    return idx;
  }

  static PlayerHistoryIndex load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return load(in);
  }

  friend bool operator==(const PlayerHistoryIndex&, const PlayerHistoryIndex&) = default;

 private:
  static constexpr char kMagic[8] = {'P', 'V', 'H', 'I', 'D', 'X', '0', '1'};

  static void put(std::ostream& out, std::uint64_t v, int bytes) {
    char b[8];
    for (int i = 0; i < bytes; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, bytes);
  }
  static std::uint64_t get(std::istream& in, int bytes) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }

  std::map<std::string, std::map<int, std::uint32_t>> counts_;
};

template <typename Range>
PlayerHistoryIndex build_history_index(const Range& records) {
  PlayerHistoryIndex idx;
  for (const GameRecord& g : records) idx.add(g);
  return idx;
}

// ---------------------------------------------------------------------------
// Filtering

struct FilterPolicy {
  int min_history_games = 50;
  int history_window_months = 6;
  int min_clock_seconds = 300;
  int min_rating = 1200;
  int min_ply = 10;
  int max_ply = 150;
  int max_minor_rook_imbalance = 3;
  int max_queen_imbalance = 2;
  std::set<Termination> terminations{Termination::Normal};

  void validate() const {
    if (min_history_games < 0 || history_window_months <= 0 || min_clock_seconds < 0 || min_rating < 0 ||
        max_minor_rook_imbalance < 0 || max_queen_imbalance < 0)
      throw Error(ErrorKind::Usage, "filter policy bounds must be non-negative");
    if (min_ply > max_ply || min_ply < 0) throw Error(ErrorKind::Usage, "filter policy ply range is empty");
    if (terminations.empty()) throw Error(ErrorKind::Usage, "filter policy termination whitelist is empty");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["min_history_games"] = min_history_games;
    j["history_window_months"] = history_window_months;
    j["min_clock_seconds"] = min_clock_seconds;
    j["min_rating"] = min_rating;
    j["ply_range"] = {min_ply, max_ply};
    j["max_minor_rook_imbalance"] = max_minor_rook_imbalance;
    j["max_queen_imbalance"] = max_queen_imbalance;
    auto& t = j["terminations"] = nlohmann::ordered_json::array();
    for (auto x : terminations) t.push_back(std::string(to_string(x)));
    return j;
  }

  static FilterPolicy from_json(const nlohmann::json& j) {
    FilterPolicy p;
    try {
      for (const auto& [key, val] : j.items()) {
        if (key == "min_history_games") p.min_history_games = val.get<int>();
        else if (key == "history_window_months") p.history_window_months = val.get<int>();
        else if (key == "min_clock_seconds") p.min_clock_seconds = val.get<int>();
        else if (key == "min_rating") p.min_rating = val.get<int>();
        else if (key == "ply_range") {
          p.min_ply = val.at(0).get<int>();
          p.max_ply = val.at(1).get<int>();
        } else if (key == "max_minor_rook_imbalance") p.max_minor_rook_imbalance = val.get<int>();
        else if (key == "max_queen_imbalance") p.max_queen_imbalance = val.get<int>();
        else if (key == "terminations") {
          p.terminations.clear();
          for (const auto& t : val) p.terminations.insert(parse_termination(t.get<std::string>()));
        } else {
          throw Error(ErrorKind::Usage, "unknown filter policy key '" + key + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Usage, std::string("filter policy: ") + e.what());
    }
    p.validate();
    return p;
  }
};

enum class FilterPredicate : std::uint8_t { Termination, Clock, Rating, History, PlyRange };
inline constexpr std::array<FilterPredicate, 5> kFilterOrder{FilterPredicate::Termination, FilterPredicate::Clock,
                                                              FilterPredicate::Rating, FilterPredicate::History,
                                                              FilterPredicate::PlyRange};

constexpr std::string_view to_string(FilterPredicate p) {
  switch (p) {
    case FilterPredicate::Termination: return "termination";
    case FilterPredicate::Clock: return "clock";
    case FilterPredicate::Rating: return "rating";
    case FilterPredicate::History: return "history";
    case FilterPredicate::PlyRange: return "ply_range";
  }
  return "?";
}

inline bool passes(FilterPredicate p, const GameRecord& g, const PlayerHistoryIndex& idx, const FilterPolicy& pol) {
  switch (p) {
    case FilterPredicate::Termination:
      return pol.terminations.count(g.termination) > 0;
    case FilterPredicate::Clock:
      return g.time_control.unlimited() || g.time_control.initial_seconds >= pol.min_clock_seconds;
    case FilterPredicate::Rating:
      return g.white_rating >= pol.min_rating && g.black_rating >= pol.min_rating;
    case FilterPredicate::History:
      return idx.window_count(g.white, g.month, pol.history_window_months) >= std::uint64_t(pol.min_history_games) &&
             idx.window_count(g.black, g.month, pol.history_window_months) >= std::uint64_t(pol.min_history_games);
    case FilterPredicate::PlyRange:
      return g.total_ply() >= pol.min_ply && g.total_ply() <= pol.max_ply;
  }
  return false;
}

inline std::optional<FilterPredicate> first_failure(const GameRecord& g, const PlayerHistoryIndex& idx,
                                                    const FilterPolicy& pol) {
  for (auto p : kFilterOrder)
    if (!passes(p, g, idx, pol)) return p;
  return std::nullopt;
}

struct FilterReport {
  std::uint64_t input = 0;
  std::uint64_t output = 0;
  std::array<std::uint64_t, kFilterOrder.size()> rejected{};

  std::uint64_t rejected_by(FilterPredicate p) const { return rejected[static_cast<std::size_t>(p)]; }
  std::uint64_t total_rejected() const {
    std::uint64_t s = 0;
    for (auto r : rejected) s += r;
    return s;
  }

  nlohmann::ordered_json to_json(const FilterPolicy& pol) const {
    nlohmann::ordered_json j;
    j["input"] = input;
    j["output"] = output;
    auto& r = j["rejected"] = nlohmann::ordered_json::object();
    for (auto p : kFilterOrder) r[std::string(to_string(p))] = rejected_by(p);
    j["attribution"] = "first failing predicate, in the order listed";
    j["history_window"] = "the " + std::to_string(pol.history_window_months) +
                          " calendar months strictly before the game's month; the game's own month is excluded";
    j["policy"] = pol.to_json();
    return j;
  }
};

inline std::vector<GameRecord> filter_games(const std::vector<GameRecord>& games, const PlayerHistoryIndex& idx,
                                            const FilterPolicy& pol, FilterReport& report) {
  pol.validate();
  std::vector<GameRecord> out;
  for (const auto& g : games) {
    ++report.input;
    if (auto f = first_failure(g, idx, pol)) {
      ++report.rejected[static_cast<std::size_t>(*f)];
    } else {
      ++report.output;
      out.push_back(g);
    }
  }
  return out;
}

// Applied at the snapshot actually used; a failing game is dropped.
inline bool imbalance_ok(const MaterialDelta& d, const FilterPolicy& pol) {
  const int m = pol.max_minor_rook_imbalance;
  return std::abs(d.knight) <= m && std::abs(d.bishop) <= m && std::abs(d.rook) <= m &&
         std::abs(d.queen) <= pol.max_queen_imbalance;
}

}  // namespace pieceval
