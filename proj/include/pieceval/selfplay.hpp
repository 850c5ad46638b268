#pragma once

// Engine-vs-engine matches from ablated openings, an append-only results
// ledger, and the self-play regression shapes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <csignal>
#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "board.hpp"
#include "elo.hpp"
#include "error.hpp"
#include "glm.hpp"
#include "random.hpp"

namespace pieceval {

inline constexpr std::array<int, 4> kEngineSettings{1600, 2000, 2400, 2800};

struct Removal {
  Square square = 0;
  Piece piece;
  friend bool operator==(const Removal&, const Removal&) = default;
};

inline std::string to_string(const Removal& r) {
  const char l = piece_letter(r.piece.kind);
  return std::string(1, r.piece.color == Color::White ? l : static_cast<char>(std::tolower(l))) +
         square_name(r.square);
}

struct MatchSpec {
  Variant variant = Variant::Standard;
  int opening_id = 518;  // Chess 960 only; 518 is the standard array
  std::vector<Removal> ablation;
  int white_elo = 1600;
  int black_elo = 1600;
  double movetime = 5;  // seconds
  int depth = 7;
  int games = 1;
  int max_plies = 400;  // adjudicated a draw beyond this
  std::uint64_t seed = 0;

  Position base_position() const {
    if (variant == Variant::Standard) return Position::start(Variant::Standard);
    if (variant == Variant::Chess960) return Position::chess960(opening_id);
    throw Error(ErrorKind::Usage, "self-play supports standard and chess960 only");
  }

  void validate() const {
    const Position base = base_position();
    auto setting_ok = [](int e) {
      return std::find(kEngineSettings.begin(), kEngineSettings.end(), e) != kEngineSettings.end();
    };
    if (!setting_ok(white_elo) || !setting_ok(black_elo))
      throw Error(ErrorKind::Usage, "engine settings must be one of 1600, 2000, 2400, 2800");
    if (games < 0) throw Error(ErrorKind::Usage, "negative game count");
    if (movetime <= 0 || depth <= 0 || max_plies <= 0) throw Error(ErrorKind::Usage, "search limits must be positive");
    std::set<Square> seen;
    for (const auto& r : ablation) {
      if (r.piece.kind == PieceKind::King) throw Error(ErrorKind::Usage, "kings cannot be removed");
      if (base.at(r.square) != r.piece || r.piece.empty())
        throw Error(ErrorKind::Usage, "removal " + to_string(r) + " does not match the opening");
      if (!seen.insert(r.square).second) throw Error(ErrorKind::Usage, "square removed twice");
    }
  }

  Position start_position() const {
    Position p = base_position();
    for (const auto& r : ablation) p.set(r.square, kNoPiece);
    return Position::from_fen(p.fen(), variant);
  }
};

// Accepts "b1" (piece taken from the opening) or "Nb1" / "nb8" (checked).
inline Removal parse_removal(const Position& base, std::string_view text) {
  std::string_view sq = text.size() == 3 ? text.substr(1) : text;
  const auto s = parse_square(sq);
  if (!s) throw Error(ErrorKind::Usage, "bad removal '" + std::string(text) + "'");
  Removal r{*s, base.at(*s)};
  if (r.piece.empty()) throw Error(ErrorKind::Usage, "removal square " + std::string(sq) + " is empty");
  if (text.size() == 3) {
    const char c = text[0];
    const Piece want{kind_from_letter(c), std::isupper(static_cast<unsigned char>(c)) ? Color::White : Color::Black};
    if (want != r.piece) throw Error(ErrorKind::Usage, "removal '" + std::string(text) + "' does not match the opening");
  }
  return r;
}

inline nlohmann::ordered_json to_json(const MatchSpec& s, bool with_games = true) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(s.variant));
  if (s.variant == Variant::Chess960) j["opening"] = s.opening_id;
  std::vector<std::string> rem;
  for (const auto& r : s.ablation) rem.push_back(to_string(r));
  j["remove"] = rem;
  j["white_elo"] = s.white_elo;
  j["black_elo"] = s.black_elo;
  j["movetime"] = s.movetime;
  j["depth"] = s.depth;
  if (with_games) j["games"] = s.games;
  j["max_plies"] = s.max_plies;
  j["seed"] = s.seed;
  return j;
}

inline MatchSpec match_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"variant", "opening", "remove", "white_elo", "black_elo",
                                           "movetime", "depth", "games", "max_plies", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw Error(ErrorKind::Usage, "unknown match spec key '" + it.key() + "'");
  MatchSpec s;
  try {
    s.variant = parse_variant(j.value("variant", std::string("standard")));
    s.opening_id = j.value("opening", 518);
    s.white_elo = j.value("white_elo", 1600);
    s.black_elo = j.value("black_elo", 1600);
    s.movetime = j.value("movetime", 5.0);
    s.depth = j.value("depth", 7);
    s.games = j.value("games", 1);
    s.max_plies = j.value("max_plies", 400);
    s.seed = j.value("seed", std::uint64_t{0});
    const Position base = s.base_position();
    if (j.contains("remove"))
      for (const auto& r : j.at("remove")) s.ablation.push_back(parse_removal(base, r.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("bad match spec: ") + e.what());
  }
  s.validate();
  return s;
}

// A file holds one spec object, an array of specs, or {"matches": [...]}.
inline std::vector<MatchSpec> read_match_specs(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("match spec file is not JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("matches")) j = j.at("matches");
  std::vector<MatchSpec> out;
  if (j.is_array())
    for (const auto& e : j) out.push_back(match_spec_from_json(e));
  else
    out.push_back(match_spec_from_json(j));
  return out;
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

// Pass the previous result as `h` to hash a stream in pieces.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// The game count is left out so that extending a spec resumes it.
inline std::string spec_hash(const MatchSpec& s) { return hex64(fnv1a(to_json(s, false).dump())); }

// ---------------------------------------------------------------------------
// Engines

struct SearchLimits {
  double movetime = 5;
  int depth = 7;
};

class Engine {
 public:
  virtual ~Engine() = default;
  virtual void new_game() {}
  // UCI text of the chosen move for the position after `moves` from `start_fen`.
  virtual std::string best_move(const std::string& start_fen, const std::vector<std::string>& moves,
                                const SearchLimits& limits) = 0;
};

// Plays the legal move whose UCI text sorts first.
inline std::string first_legal_move(const Position& pos) {
  std::vector<std::string> ucis;
  const bool c960 = pos.variant() == Variant::Chess960;
  for (const Move& m : pos.legal_moves()) ucis.push_back(to_uci(pos, m, c960));
  if (ucis.empty()) return "(none)";
  return *std::min_element(ucis.begin(), ucis.end());
}

inline Position replay_uci(const std::string& start_fen, Variant v, const std::vector<std::string>& moves) {
  Position pos = Position::from_fen(start_fen, v);
  for (const auto& m : moves) pos = apply_move(pos, parse_uci(pos, m), Legality::Strict);
  return pos;
}

class MockEngine : public Engine {
 public:
  explicit MockEngine(Variant v = Variant::Standard) : variant_(v) {}
  std::string best_move(const std::string& start_fen, const std::vector<std::string>& moves,
                        const SearchLimits&) override {
    return first_legal_move(replay_uci(start_fen, variant_, moves));
  }

 private:
  Variant variant_;
};

// Talks to an external engine over its standard streams.
class UciEngine : public Engine {
 public:
  struct Options {
    std::vector<std::string> argv;  // argv[0] is the executable
    int elo = 0;                    // 0: leave strength unlimited
    bool chess960 = false;
    double handshake_timeout = 10;  // seconds
    double grace = 5;               // added to movetime when waiting for bestmove
  };

  explicit UciEngine(Options opt) : opt_(std::move(opt)) {
    if (opt_.argv.empty()) throw Error(ErrorKind::Usage, "no engine command");
    int sv[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw Error(ErrorKind::IoError, "socketpair failed");
    pid_ = fork();
    if (pid_ < 0) {
      close(sv[0]);
      close(sv[1]);
      throw Error(ErrorKind::IoError, "fork failed");
    }
    if (pid_ == 0) {
      dup2(sv[1], 0);
      dup2(sv[1], 1);
      std::vector<char*> args;
      for (auto& a : opt_.argv) args.push_back(a.data());
      args.push_back(nullptr);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(sv[1]);
    fd_ = sv[0];
    send("uci");
    wait_for("uciok", opt_.handshake_timeout);
    if (opt_.chess960) send("setoption name UCI_Chess960 value true");
    if (opt_.elo > 0) {
      send("setoption name UCI_LimitStrength value true");
      send("setoption name UCI_Elo value " + std::to_string(opt_.elo));
    }
    send("isready");
    wait_for("readyok", opt_.handshake_timeout);
  }

  UciEngine(const UciEngine&) = delete;
  UciEngine& operator=(const UciEngine&) = delete;

  ~UciEngine() override {
    if (fd_ >= 0) {
      const char quit[] = "quit\n";
      (void)::send(fd_, quit, sizeof quit - 1, MSG_NOSIGNAL);
    }
    if (pid_ > 0) {
      int status = 0;
      bool done = false;
      for (int i = 0; i < 50 && !done; ++i) {
        done = waitpid(pid_, &status, WNOHANG) == pid_;
        if (!done) usleep(10000);
      }
      if (!done) {
        kill(pid_, SIGKILL);
        waitpid(pid_, &status, 0);
      }
    }
    if (fd_ >= 0) close(fd_);
  }

  void new_game() override {
    send("ucinewgame");
    send("isready");
    wait_for("readyok", opt_.handshake_timeout);
  }

  std::string best_move(const std::string& start_fen, const std::vector<std::string>& moves,
                        const SearchLimits& limits) override {
    std::string cmd = "position fen " + start_fen;
    if (!moves.empty()) {
      cmd += " moves";
      for (const auto& m : moves) cmd += " " + m;
    }
    send(cmd);
    send("go movetime " + std::to_string(static_cast<long long>(limits.movetime * 1000)) + " depth " +
         std::to_string(limits.depth));
    const std::string line = wait_for("bestmove", limits.movetime + opt_.grace);
    std::istringstream ss(line);
    std::string tag, mv;
    ss >> tag >> mv;
    if (mv.empty()) throw Error(ErrorKind::ProtocolViolation, "bestmove without a move");
    return mv;
  }

 private:
  void send(const std::string& line) {
    const std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw Error(ErrorKind::ProtocolViolation, "engine closed its input");
      off += static_cast<std::size_t>(n);
    }
  }

  // Returns the first line whose first token is `token`.
  std::string wait_for(const std::string& token, double seconds) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == token || line.rfind(token + " ", 0) == 0) return line;
        continue;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(ErrorKind::EngineTimeout, "no '" + token + "' from engine in time");
      pollfd p{fd_, POLLIN, 0};
      const int r = poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
      if (r < 0) throw Error(ErrorKind::IoError, "poll failed");
      if (r == 0) continue;
      char buf[4096];
      const ssize_t n = read(fd_, buf, sizeof buf);
      if (n <= 0) throw Error(ErrorKind::ProtocolViolation, "engine exited while waiting for '" + token + "'");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  Options opt_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

// Makes an engine for a nominal strength setting.
using EngineFactory = std::function<std::unique_ptr<Engine>(int elo, Variant variant)>;

inline EngineFactory mock_engine_factory() {
  return [](int, Variant v) { return std::make_unique<MockEngine>(v); };
}

inline EngineFactory uci_engine_factory(std::vector<std::string> argv, double grace = 5) {
  return [argv, grace](int elo, Variant v) {
    UciEngine::Options o;
    o.argv = argv;
    o.elo = elo;
    o.chess960 = v == Variant::Chess960;
    o.grace = grace;
    return std::make_unique<UciEngine>(o);
  };
}

// ---------------------------------------------------------------------------
// Games and rows

struct GameResult {
  double outcome = 0.5;  // white's score
  int plies = 0;
  std::string reason;    // checkmate, stalemate, fifty_move, insufficient, repetition, max_plies
};

inline GameResult play_game(Engine& white, Engine& black, const Position& start, const SearchLimits& limits,
                            int max_plies) {
  white.new_game();
  black.new_game();
  const std::string start_fen = start.fen();
  const bool c960 = start.variant() == Variant::Chess960;
  Position pos = start;
  std::vector<std::string> moves;
  std::map<std::string, int> seen;
  auto key = [](const Position& p) {
    const std::string f = p.fen();
    std::size_t cut = f.size();
    for (int spaces = 0; cut > 0 && spaces < 2; --cut)
      if (f[cut - 1] == ' ') ++spaces;
    return f.substr(0, cut);
  };
  ++seen[key(pos)];
  for (;;) {
    const GameStatus st = pos.status();
    if (st != GameStatus::Ongoing) {
      GameResult r;
      r.plies = static_cast<int>(moves.size());
      if (st == GameStatus::WhiteWins || st == GameStatus::BlackWins) {
        r.outcome = st == GameStatus::WhiteWins ? 1 : 0;
        r.reason = "checkmate";
      } else if (pos.legal_moves().empty()) {
        r.reason = "stalemate";
      } else if (pos.halfmove_clock() >= 100) {
        r.reason = "fifty_move";
      } else {
        r.reason = "insufficient";
      }
      return r;
    }
    if (static_cast<int>(moves.size()) >= max_plies) return {0.5, max_plies, "max_plies"};
    Engine& e = pos.side_to_move() == Color::White ? white : black;
    const std::string mv = e.best_move(start_fen, moves, limits);
    Move m;
    try {
      m = parse_uci(pos, mv);
      if (!pos.is_legal(m)) throw Error(ErrorKind::IllegalMove, "illegal");
    } catch (const Error&) {
      throw Error(ErrorKind::IllegalEngineMove, "engine played '" + mv + "' in " + pos.fen());
    }
    moves.push_back(to_uci(pos, m, c960));
    pos.play(m);
    if (++seen[key(pos)] >= 3) return {0.5, static_cast<int>(moves.size()), "repetition"};
  }
}

struct SelfPlayRow {
  std::string spec_hash;
  int game = 0;
  Variant variant = Variant::Standard;
  int opening_id = 518;
  int white_elo = 1600;
  int black_elo = 1600;
  std::vector<Removal> removed;
  MaterialDelta material;
  double outcome = 0.5;
  int plies = 0;
  std::string reason;

  // White-setting indicator minus black-setting indicator.
  int strength(int setting) const { return (white_elo == setting) - (black_elo == setting); }
  friend bool operator==(const SelfPlayRow&, const SelfPlayRow&) = default;
};

struct VoidedGame {
  std::string spec_hash;
  int game = 0;
  std::string error;
};

struct MatchRun {
  std::vector<SelfPlayRow> rows;  // ordered by (spec, game)
  std::vector<VoidedGame> voided;
  std::size_t resumed = 0;        // games already in the ledger
};

// ---------------------------------------------------------------------------
// Ledger: tab separated, one line per finished or voided game, appended and
// flushed as games complete.
//
//   spec_hash game status outcome plies reason variant opening white_elo
//   black_elo removed d_pawn d_knight d_bishop d_rook d_queen error

inline constexpr std::string_view kLedgerHeader =
    "spec_hash\tgame\tstatus\toutcome\tplies\treason\tvariant\topening\twhite_elo\tblack_elo\tremoved\t"
    "d_pawn\td_knight\td_bishop\td_rook\td_queen\terror";

inline std::string ledger_line(const SelfPlayRow& r) {
  std::string rem;
  for (const auto& x : r.removed) rem += (rem.empty() ? "" : ",") + to_string(x);
  std::ostringstream o;
  o << r.spec_hash << '\t' << r.game << "\tok\t" << (r.outcome == 1 ? "1" : r.outcome == 0 ? "0" : "0.5") << '\t'
    << r.plies << '\t' << r.reason << '\t' << to_string(r.variant) << '\t' << r.opening_id << '\t' << r.white_elo
    << '\t' << r.black_elo << '\t' << (rem.empty() ? "-" : rem) << '\t' << r.material.pawn << '\t'
    << r.material.knight << '\t' << r.material.bishop << '\t' << r.material.rook << '\t' << r.material.queen
    << "\t-";
  return o.str();
}

inline std::string ledger_line(const VoidedGame& v, const MatchSpec& s) {
  std::string err = v.error;
  std::replace(err.begin(), err.end(), '\t', ' ');
  std::replace(err.begin(), err.end(), '\n', ' ');
  std::ostringstream o;
  o << v.spec_hash << '\t' << v.game << "\tvoid\t-\t-\t-\t" << to_string(s.variant) << '\t' << s.opening_id << '\t'
    << s.white_elo << '\t' << s.black_elo << "\t-\t-\t-\t-\t-\t-\t" << err;
  return o.str();
}

struct Ledger {
  std::vector<SelfPlayRow> rows;
  std::vector<VoidedGame> voided;
};

inline Ledger read_ledger(std::istream& in) {
  Ledger l;
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
      const auto tab = s.find('\t', start);
      out.push_back(s.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line == kLedgerHeader) continue;
    const auto f = split(line);
    if (f.size() != 17) throw Error(ErrorKind::ParseError, "ledger line " + std::to_string(lineno) + ": wrong field count");
    try {
      if (f[2] == "void") {
        l.voided.push_back({f[0], std::stoi(f[1]), f[16]});
        continue;
      }
      if (f[2] != "ok") throw Error(ErrorKind::ParseError, "bad status");
      SelfPlayRow r;
      r.spec_hash = f[0];
      r.game = std::stoi(f[1]);
      r.outcome = std::stod(f[3]);
      r.plies = std::stoi(f[4]);
      r.reason = f[5];
      r.variant = parse_variant(f[6]);
      r.opening_id = std::stoi(f[7]);
      r.white_elo = std::stoi(f[8]);
      r.black_elo = std::stoi(f[9]);
      if (f[10] != "-") {
        const Position base = r.variant == Variant::Chess960 ? Position::chess960(r.opening_id)
                                                             : Position::start(Variant::Standard);
        std::stringstream ss(f[10]);
        std::string tok;
        while (std::getline(ss, tok, ',')) r.removed.push_back(parse_removal(base, tok));
      }
      r.material.pawn = std::stoi(f[11]);
      r.material.knight = std::stoi(f[12]);
      r.material.bishop = std::stoi(f[13]);
      r.material.rook = std::stoi(f[14]);
      r.material.queen = std::stoi(f[15]);
      l.rows.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, "ledger line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "ledger line " + std::to_string(lineno) + ": bad number");
    }
  }
  return l;
}

inline Ledger read_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  return read_ledger(in);
}

struct RunOptions {
  std::string ledger_path;  // empty: nothing persisted, nothing resumed
  unsigned workers = 1;     // concurrent engine pairs
};

inline MatchRun run_matches(const std::vector<MatchSpec>& specs, const EngineFactory& factory,
                            const RunOptions& opt = {}) {
  struct Job {
    std::size_t spec;
    int game;
  };
  std::vector<std::string> hashes;
  for (const auto& s : specs) {
    s.validate();
    hashes.push_back(spec_hash(s));
  }

  MatchRun run;
  std::set<std::pair<std::string, int>> done;
  if (!opt.ledger_path.empty()) {
    Ledger prior = read_ledger(opt.ledger_path);
    for (auto& r : prior.rows) done.insert({r.spec_hash, r.game});
    for (auto& v : prior.voided) done.insert({v.spec_hash, v.game});
    std::set<std::string> wanted(hashes.begin(), hashes.end());
    for (auto& r : prior.rows)
      if (wanted.count(r.spec_hash)) run.rows.push_back(r);
    for (auto& v : prior.voided)
      if (wanted.count(v.spec_hash)) run.voided.push_back(v);
  }
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (int g = 0; g < specs[i].games; ++g) {
      if (done.count({hashes[i], g})) {
        ++run.resumed;
        continue;
      }
      jobs.push_back({i, g});
    }

  std::ofstream ledger;
  if (!opt.ledger_path.empty()) {
    const bool fresh = !std::ifstream(opt.ledger_path).good();
    ledger.open(opt.ledger_path, std::ios::app);
    if (!ledger) throw Error(ErrorKind::IoError, "cannot open ledger " + opt.ledger_path);
    if (fresh) ledger << kLedgerHeader << '\n' << std::flush;
  }
  std::mutex mu;
  std::vector<std::optional<SelfPlayRow>> rows(jobs.size());
  std::vector<std::optional<VoidedGame>> voids(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    std::unique_ptr<Engine> white, black;
    int white_setting = 0, black_setting = 0;
    Variant engine_variant = Variant::Standard;
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const MatchSpec& s = specs[jobs[k].spec];
      std::string line;
      try {
        if (!white || white_setting != s.white_elo || engine_variant != s.variant) {
          white = factory(s.white_elo, s.variant);
          white_setting = s.white_elo;
        }
        if (!black || black_setting != s.black_elo || engine_variant != s.variant) {
          black = factory(s.black_elo, s.variant);
          black_setting = s.black_elo;
        }
        engine_variant = s.variant;
        const Position start = s.start_position();
        const GameResult g = play_game(*white, *black, start, {s.movetime, s.depth}, s.max_plies);
        SelfPlayRow r;
        r.spec_hash = hashes[jobs[k].spec];
        r.game = jobs[k].game;
        r.variant = s.variant;
        r.opening_id = s.variant == Variant::Chess960 ? s.opening_id : 518;
        r.white_elo = s.white_elo;
        r.black_elo = s.black_elo;
        r.removed = s.ablation;
        r.material = delta(material_counts(start));
        r.material.passed = {};
        r.outcome = g.outcome;
        r.plies = g.plies;
        r.reason = g.reason;
        line = ledger_line(r);
        rows[k] = std::move(r);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EngineTimeout && e.kind() != ErrorKind::ProtocolViolation &&
            e.kind() != ErrorKind::IllegalEngineMove && e.kind() != ErrorKind::IoError)
          throw;
        VoidedGame v{hashes[jobs[k].spec], jobs[k].game, std::string(to_string(e.kind())) + ": " + e.what()};
        line = ledger_line(v, s);
        voids[k] = std::move(v);
        // the engines may be in any state now
        white.reset();
        black.reset();
      }
      if (ledger.is_open()) {
        std::lock_guard lock(mu);
        ledger << line << '\n' << std::flush;
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1))));
  parallel_for(n, [&](std::size_t) { worker(); }, n);

  for (auto& r : rows)
    if (r) run.rows.push_back(std::move(*r));
  for (auto& v : voids)
    if (v) run.voided.push_back(std::move(*v));
  auto order = [&](const std::string& h) {
    return static_cast<std::size_t>(std::find(hashes.begin(), hashes.end(), h) - hashes.begin());
  };
  std::stable_sort(run.rows.begin(), run.rows.end(), [&](const SelfPlayRow& a, const SelfPlayRow& b) {
    return std::pair(order(a.spec_hash), a.game) < std::pair(order(b.spec_hash), b.game);
  });
  std::stable_sort(run.voided.begin(), run.voided.end(), [&](const VoidedGame& a, const VoidedGame& b) {
    return std::pair(order(a.spec_hash), a.game) < std::pair(order(b.spec_hash), b.game);
  });
  return run;
}

// ---------------------------------------------------------------------------
// Regression shapes

enum class SelfPlayShape { EngineOnly, EqualEnginesPieces, Full, PerSquare };

inline std::string_view to_string(SelfPlayShape s) {
  switch (s) {
    case SelfPlayShape::EngineOnly: return "engine_only";
    case SelfPlayShape::EqualEnginesPieces: return "equal_engines_pieces";
    case SelfPlayShape::Full: return "full";
    case SelfPlayShape::PerSquare: return "per_square";
  }
  return "?";
}

inline SelfPlayShape parse_shape(std::string_view s) {
  for (auto v : {SelfPlayShape::EngineOnly, SelfPlayShape::EqualEnginesPieces, SelfPlayShape::Full,
                 SelfPlayShape::PerSquare})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::Usage, "unknown self-play shape '" + std::string(s) + "'");
}

struct SelfPlayFit {
  SelfPlayShape shape = SelfPlayShape::Full;
  RegressionFit fit;
  std::size_t rows_used = 0;
  std::vector<std::string> constant_squares;  // per-square indicators never varied, left out
};

// Per-square indicator: -1 when a white piece on the square was removed, +1
// for a black piece, so black squares read as value to black.
inline int square_indicator(const SelfPlayRow& r, Square s) {
  for (const auto& x : r.removed)
    if (x.square == s) return x.piece.color == Color::White ? -1 : 1;
  return 0;
}

inline std::string square_term(const Piece& p, Square s) {
  return std::string(1, p.color == Color::White ? piece_letter(p.kind)
                                                : static_cast<char>(std::tolower(piece_letter(p.kind)))) +
         square_name(s);
}

inline SelfPlayFit fit_selfplay(const std::vector<SelfPlayRow>& all, SelfPlayShape shape, const FitOptions& opt = {}) {
  SelfPlayFit out;
  out.shape = shape;
  std::vector<const SelfPlayRow*> rows;
  for (const auto& r : all) {
    const bool unablated = r.removed.empty();
    if (shape == SelfPlayShape::EngineOnly && !unablated) continue;
    if (shape == SelfPlayShape::EqualEnginesPieces && r.white_elo != r.black_elo) continue;
    if (shape == SelfPlayShape::PerSquare && r.variant != Variant::Standard) continue;
    rows.push_back(&r);
  }
  if (rows.empty()) throw Error(ErrorKind::InsufficientVariation, "no rows match the regression shape");

  using Column = std::function<double(const SelfPlayRow&)>;
  std::vector<std::pair<std::string, Column>> cols;
  cols.push_back({"white_adv", [](const SelfPlayRow&) { return 1.0; }});
  const bool engines = shape != SelfPlayShape::EqualEnginesPieces;
  const bool pieces = shape == SelfPlayShape::EqualEnginesPieces || shape == SelfPlayShape::Full;
  if (engines)
    for (int s : {2000, 2400, 2800})
      cols.push_back({"elo" + std::to_string(s), [s](const SelfPlayRow& r) { return double(r.strength(s)); }});
  if (pieces) {
    cols.push_back({"pawn", [](const SelfPlayRow& r) { return double(r.material.pawn); }});
    cols.push_back({"knight", [](const SelfPlayRow& r) { return double(r.material.knight); }});
    cols.push_back({"bishop", [](const SelfPlayRow& r) { return double(r.material.bishop); }});
    cols.push_back({"rook", [](const SelfPlayRow& r) { return double(r.material.rook); }});
    cols.push_back({"queen", [](const SelfPlayRow& r) { return double(r.material.queen); }});
  }
  for (std::size_t j = 1; j < cols.size(); ++j) {
    const double first = cols[j].second(*rows.front());
    bool varies = false;
    for (auto* r : rows) varies = varies || cols[j].second(*r) != first;
    if (!varies) throw Error(ErrorKind::InsufficientVariation, "term '" + cols[j].first + "' is constant in the data");
  }
  if (shape == SelfPlayShape::PerSquare) {
    const Position base = Position::start(Variant::Standard);
    for (Square s = 0; s < 64; ++s) {
      const Piece p = base.at(s);
      if (p.empty() || p.kind == PieceKind::King) continue;
      bool varies = false;
      for (auto* r : rows) varies = varies || square_indicator(*r, s) != 0;
      if (!varies) {
        out.constant_squares.push_back(square_term(p, s));
        continue;
      }
      cols.push_back({square_term(p, s), [s](const SelfPlayRow& r) { return double(square_indicator(r, s)); }});
    }
  }

  Design d;
  d.n = rows.size();
  d.p = cols.size();
  d.x.resize(d.n * d.p);
  d.successes.resize(d.n);
  for (const auto& c : cols) d.terms.push_back(c.first);
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = 0; j < d.p; ++j) d.at(i, j) = cols[j].second(*rows[i]);
    d.successes[i] = 2 * rows[i]->outcome;
  }
  out.fit = fit_design(d, opt);
  out.rows_used = d.n;
  return out;
}

// Rows with outcomes drawn from known effects (Elo units), for checking fits.
struct SelfPlayTruth {
  double white_adv = 15;
  std::array<double, 3> strength{200, 450, 650};  // 2000, 2400, 2800 relative to 1600
  std::array<double, 5> pieces{90, 250, 270, 330, 460};
};

inline std::vector<SelfPlayRow> generate_selfplay_rows(std::size_t n, const SelfPlayTruth& truth, std::uint64_t seed,
                                                       bool ablate = true) {
  Rng rng = make_rng({seed, 0x5e1f});
  const Position base = Position::start(Variant::Standard);
  std::vector<Square> removable;
  for (Square s = 0; s < 64; ++s)
    if (!base.at(s).empty() && base.at(s).kind != PieceKind::King) removable.push_back(s);
  std::vector<SelfPlayRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    SelfPlayRow r;
    r.spec_hash = "synthetic";
    r.game = static_cast<int>(i);
    r.white_elo = kEngineSettings[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
    r.black_elo = kEngineSettings[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
    if (ablate && uniform01(rng) < 0.7) {
      const Square s = removable[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(removable.size()) - 1))];
      r.removed.push_back({s, base.at(s)});
    }
    Position start = base;
    for (const auto& x : r.removed) start.set(x.square, kNoPiece);
    r.material = delta(material_counts(start));
    r.material.passed = {};
    double elo = truth.white_adv;
    for (int k = 0; k < 3; ++k) elo += truth.strength[static_cast<std::size_t>(k)] * r.strength(kEngineSettings[static_cast<std::size_t>(k + 1)]);
    const std::array<int, 5> m{r.material.pawn, r.material.knight, r.material.bishop, r.material.rook, r.material.queen};
    for (std::size_t k = 0; k < 5; ++k) elo += truth.pieces[k] * m[k];
    // two coin flips per game, the same law the regression assumes
    const double g = expected_score(elo);
    r.outcome = 0.5 * ((uniform01(rng) < g) + (uniform01(rng) < g));
    r.reason = "synthetic";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace pieceval
