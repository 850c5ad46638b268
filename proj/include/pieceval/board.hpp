#pragma once

// Board representation and move application for standard chess, Chess 960,
// Atomic, Antichess and Horde.
//
// The board is a plain 64-entry mailbox (a1 = 0, h8 = 63). Position is a value
// type: copying it is the way to branch, and nothing in it is shared.
//
// Two levels of move checking exist. Replay legality only asks whether a move
// is geometrically possible for the piece on the origin square, which is all a
// trusted archive needs. Strict legality additionally rejects moves that leave
// the mover's king capturable (variant-aware) and enforces the Antichess
// obligation to capture; self-play uses it.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pieceval/error.hpp"

namespace pieceval {

enum class Variant : std::uint8_t { Standard, Chess960, Atomic, Antichess, Horde };

constexpr std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Standard: return "standard";
    case Variant::Chess960: return "chess960";
    case Variant::Atomic: return "atomic";
    case Variant::Antichess: return "antichess";
    case Variant::Horde: return "horde";
  }
  return "standard";
}

// Accepts our own lowercase names and the Lichess "Variant" header spellings.
inline Variant parse_variant(std::string_view text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "standard" || s == "chess" || s.empty()) return Variant::Standard;
  if (s == "chess960" || s == "960" || s == "fischerandom" || s == "fischerrandom")
    return Variant::Chess960;
  if (s == "atomic") return Variant::Atomic;
  if (s == "antichess" || s == "losing" || s == "giveaway") return Variant::Antichess;
  if (s == "horde") return Variant::Horde;
  throw Error(ErrorKind::Usage, "unknown variant '" + std::string(text) + "'");
}

enum class Color : std::uint8_t { White, Black };

constexpr Color operator~(Color c) { return c == Color::White ? Color::Black : Color::White; }
constexpr int index(Color c) { return c == Color::White ? 0 : 1; }

enum class PieceKind : std::uint8_t { None, Pawn, Knight, Bishop, Rook, Queen, King };

struct Piece {
  PieceKind kind = PieceKind::None;
  Color color = Color::White;

  constexpr bool empty() const { return kind == PieceKind::None; }
  constexpr bool is(Color c, PieceKind k) const { return kind == k && color == c; }
  friend constexpr bool operator==(const Piece&, const Piece&) = default;
};

inline constexpr Piece kNoPiece{};

using Square = int;

constexpr int file_of(Square s) { return s & 7; }
constexpr int rank_of(Square s) { return s >> 3; }
constexpr Square make_square(int file, int rank) { return rank * 8 + file; }
constexpr bool on_board(int file, int rank) { return file >= 0 && file < 8 && rank >= 0 && rank < 8; }
// Rank counted from the owner's side, 1-based: a white pawn on e2 and a black
// pawn on e7 are both on relative rank 2.
constexpr int relative_rank(Color c, Square s) {
  return c == Color::White ? rank_of(s) + 1 : 8 - rank_of(s);
}

inline std::string square_name(Square s) {
  return {static_cast<char>('a' + file_of(s)), static_cast<char>('1' + rank_of(s))};
}

inline std::optional<Square> parse_square(std::string_view s) {
  if (s.size() != 2 || s[0] < 'a' || s[0] > 'h' || s[1] < '1' || s[1] > '8') return std::nullopt;
  return make_square(s[0] - 'a', s[1] - '1');
}

inline char piece_letter(PieceKind k) {
  switch (k) {
    case PieceKind::Pawn: return 'P';
    case PieceKind::Knight: return 'N';
    case PieceKind::Bishop: return 'B';
    case PieceKind::Rook: return 'R';
    case PieceKind::Queen: return 'Q';
    case PieceKind::King: return 'K';
    default: return '?';
  }
}

inline PieceKind kind_from_letter(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'P': return PieceKind::Pawn;
    case 'N': return PieceKind::Knight;
    case 'B': return PieceKind::Bishop;
    case 'R': return PieceKind::Rook;
    case 'Q': return PieceKind::Queen;
    case 'K': return PieceKind::King;
    default: return PieceKind::None;
  }
}

// Castling is always stored king-takes-rook: `to` names the rook's square and
// `castle` is set. UCI/SAN conversion translates to and from the usual forms.
struct Move {
  Square from = 0;
  Square to = 0;
  PieceKind promotion = PieceKind::None;
  bool castle = false;

  friend constexpr bool operator==(const Move&, const Move&) = default;
};

enum class CastleSide : std::uint8_t { King = 0, Queen = 1 };

struct CastlingRights {
  // Rook file for [color][side]; -1 when the right is gone.
  std::array<std::array<std::int8_t, 2>, 2> rook_file{{{-1, -1}, {-1, -1}}};

  int file(Color c, CastleSide s) const { return rook_file[index(c)][static_cast<int>(s)]; }
  void set(Color c, CastleSide s, int f) { rook_file[index(c)][static_cast<int>(s)] = static_cast<std::int8_t>(f); }
  void clear(Color c) { rook_file[index(c)] = {-1, -1}; }
  bool none() const {
    return rook_file[0][0] < 0 && rook_file[0][1] < 0 && rook_file[1][0] < 0 && rook_file[1][1] < 0;
  }
  friend bool operator==(const CastlingRights&, const CastlingRights&) = default;
};

enum class Legality { Replay, Strict };

enum class GameStatus { Ongoing, WhiteWins, BlackWins, Draw };

inline constexpr std::string_view kStandardStartFen =
    "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";
inline constexpr std::string_view kHordeStartFen =
    "rnbqkbnr/pppppppp/8/1PP2PP1/PPPPPPPP/PPPPPPPP/PPPPPPPP/PPPPPPPP w kq - 0 1";

namespace detail {
inline constexpr std::array<std::array<int, 2>, 8> kKnightSteps{
    {{1, 2}, {2, 1}, {2, -1}, {1, -2}, {-1, -2}, {-2, -1}, {-2, 1}, {-1, 2}}};
inline constexpr std::array<std::array<int, 2>, 8> kKingSteps{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
inline constexpr std::array<std::array<int, 2>, 4> kRookDirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
inline constexpr std::array<std::array<int, 2>, 4> kBishopDirs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
}  // namespace detail

class Position {
 public:
  Position() = default;

  static Position start(Variant v = Variant::Standard) {
    if (v == Variant::Horde) return from_fen(kHordeStartFen, v);
    Position p = from_fen(kStandardStartFen, v);
    if (v == Variant::Antichess) p.castling_ = {};
    return p;
  }

  // Scharnagl numbering; id 518 is the standard array.
  static Position chess960(int id) {
    if (id < 0 || id > 959) throw Error(ErrorKind::BadFen, "Chess 960 id out of range");
    std::array<char, 8> row{};
    std::array<bool, 8> used{};
    int n = id;
    const int light = n % 4;
    n /= 4;
    const int dark = n % 4;
    n /= 4;
    row[2 * light + 1] = 'b';
    row[2 * dark] = 'b';
    used[2 * light + 1] = used[2 * dark] = true;
    auto place_nth_free = [&](int k, char piece) {
      for (int f = 0; f < 8; ++f) {
        if (used[f]) continue;
        if (k-- == 0) {
          row[f] = piece;
          used[f] = true;
          return;
        }
      }
    };
    place_nth_free(n % 6, 'q');
    n /= 6;
    static constexpr std::array<std::array<int, 2>, 10> kKnightPairs{
        {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}};
    // Place the second knight first so the first index is still valid.
    place_nth_free(kKnightPairs[n][1], 'n');
    place_nth_free(kKnightPairs[n][0], 'n');
    place_nth_free(0, 'r');
    place_nth_free(0, 'k');
    place_nth_free(0, 'r');
    std::string back(row.begin(), row.end());
    std::string upper = back;
    for (char& c : upper) c = static_cast<char>(std::toupper(c));
    return from_fen(back + "/pppppppp/8/8/8/8/PPPPPPPP/" + upper + " w KQkq - 0 1", Variant::Chess960);
  }

  // Accepts FENs with trailing fields missing; castling may use KQkq or file
  // letters (Shredder/X-FEN).
  static Position from_fen(std::string_view fen, Variant v = Variant::Standard) {
    Position p;
    p.variant_ = v;
    std::istringstream in{std::string(fen)};
    std::string placement, side = "w", castling = "-", ep = "-";
    int halfmove = 0, fullmove = 1;
    if (!(in >> placement)) throw Error(ErrorKind::BadFen, "empty FEN");
    in >> side >> castling >> ep;
    if (!(in >> halfmove)) halfmove = 0;
    if (!(in >> fullmove)) fullmove = 1;

    int rank = 7, file = 0;
    for (char c : placement) {
      if (c == '/') {
        if (file != 8) throw Error(ErrorKind::BadFen, "short rank in '" + std::string(fen) + "'");
        --rank;
        file = 0;
        if (rank < 0) throw Error(ErrorKind::BadFen, "too many ranks");
      } else if (c >= '1' && c <= '8') {
        file += c - '0';
      } else {
        PieceKind k = kind_from_letter(c);
        if (k == PieceKind::None || file > 7) throw Error(ErrorKind::BadFen, "bad placement character");
        p.board_[make_square(file, rank)] = {k, std::isupper(static_cast<unsigned char>(c)) ? Color::White : Color::Black};
        ++file;
      }
      if (file > 8) throw Error(ErrorKind::BadFen, "rank overflow");
    }
    if (rank != 0 || file != 8) throw Error(ErrorKind::BadFen, "incomplete placement");

    if (side == "w") p.side_ = Color::White;
    else if (side == "b") p.side_ = Color::Black;
    else throw Error(ErrorKind::BadFen, "bad side to move");

    if (castling != "-" && v != Variant::Antichess) {
      for (char c : castling) {
        const Color color = std::isupper(static_cast<unsigned char>(c)) ? Color::White : Color::Black;
        const int back = color == Color::White ? 0 : 7;
        auto king = p.back_rank_king(color);
        if (!king) continue;
        const int kf = file_of(*king);
        const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        auto is_rook = [&](int f) { return p.board_[make_square(f, back)].is(color, PieceKind::Rook); };
        if (u == 'K') {
          for (int f = 7; f > kf; --f)
            if (is_rook(f)) { p.castling_.set(color, CastleSide::King, f); break; }
        } else if (u == 'Q') {
          for (int f = 0; f < kf; ++f)
            if (is_rook(f)) { p.castling_.set(color, CastleSide::Queen, f); break; }
        } else if (u >= 'A' && u <= 'H') {
          const int f = u - 'A';
          if (is_rook(f)) p.castling_.set(color, f > kf ? CastleSide::King : CastleSide::Queen, f);
        } else {
          throw Error(ErrorKind::BadFen, "bad castling field");
        }
      }
    }
    if (ep != "-") {
      auto s = parse_square(ep);
      if (!s) throw Error(ErrorKind::BadFen, "bad en passant square");
      p.ep_ = *s;
    }
    p.halfmove_clock_ = halfmove;
    p.fullmove_ = std::max(1, fullmove);
    p.ply_ = 2 * (p.fullmove_ - 1) + (p.side_ == Color::Black ? 1 : 0);
    p.check_kings();
    return p;
  }

  std::string fen() const {
    std::string out;
    for (int rank = 7; rank >= 0; --rank) {
      int gap = 0;
      for (int file = 0; file < 8; ++file) {
        const Piece pc = board_[make_square(file, rank)];
        if (pc.empty()) { ++gap; continue; }
        if (gap) out.push_back(static_cast<char>('0' + gap));
        gap = 0;
        const char l = piece_letter(pc.kind);
        out.push_back(pc.color == Color::White ? l : static_cast<char>(std::tolower(l)));
      }
      if (gap) out.push_back(static_cast<char>('0' + gap));
      if (rank) out.push_back('/');
    }
    out += side_ == Color::White ? " w " : " b ";
    std::string rights;
    for (Color c : {Color::White, Color::Black}) {
      for (CastleSide s : {CastleSide::King, CastleSide::Queen}) {
        const int f = castling_.file(c, s);
        if (f < 0) continue;
        char letter = static_cast<char>('A' + f);
        if (f == outermost_rook_file(c, s)) letter = s == CastleSide::King ? 'K' : 'Q';
        rights.push_back(c == Color::White ? letter : static_cast<char>(std::tolower(letter)));
      }
    }
    out += rights.empty() ? "-" : rights;
    out += ' ';
    out += ep_ ? square_name(*ep_) : "-";
    out += ' ' + std::to_string(halfmove_clock_) + ' ' + std::to_string(fullmove_);
    return out;
  }

  Piece at(Square s) const { return board_[s]; }
  void set(Square s, Piece p) { board_[s] = p; }
  Color side_to_move() const { return side_; }
  Variant variant() const { return variant_; }
  int ply() const { return ply_; }
  int halfmove_clock() const { return halfmove_clock_; }
  int fullmove_number() const { return fullmove_; }
  std::optional<Square> en_passant() const { return ep_; }
  const CastlingRights& castling() const { return castling_; }

  std::optional<Square> king_square(Color c) const {
    for (Square s = 0; s < 64; ++s)
      if (board_[s].is(c, PieceKind::King)) return s;
    return std::nullopt;
  }

  int count(Color c, PieceKind k) const {
    return static_cast<int>(std::count(board_.begin(), board_.end(), Piece{k, c}));
  }

  // Whether a piece of color `by` could capture on `target`. In Atomic a king
  // never captures, so kings do not attack.
  bool is_attacked(Square target, Color by) const {
    const int tf = file_of(target), tr = rank_of(target);
    const int pawn_from_rank = tr - (by == Color::White ? 1 : -1);
    for (int df : {-1, 1}) {
      const int f = tf + df;
      if (on_board(f, pawn_from_rank) && board_[make_square(f, pawn_from_rank)].is(by, PieceKind::Pawn))
        return true;
    }
    for (auto [df, dr] : detail::kKnightSteps) {
      const int f = tf + df, r = tr + dr;
      if (on_board(f, r) && board_[make_square(f, r)].is(by, PieceKind::Knight)) return true;
    }
    if (variant_ != Variant::Atomic) {
      for (auto [df, dr] : detail::kKingSteps) {
        const int f = tf + df, r = tr + dr;
        if (on_board(f, r) && board_[make_square(f, r)].is(by, PieceKind::King)) return true;
      }
    }
    auto slide = [&](const auto& dirs, PieceKind k) {
      for (auto [df, dr] : dirs) {
        int f = tf + df, r = tr + dr;
        while (on_board(f, r)) {
          const Piece pc = board_[make_square(f, r)];
          if (!pc.empty()) {
            if (pc.color == by && (pc.kind == k || pc.kind == PieceKind::Queen)) return true;
            break;
          }
          f += df;
          r += dr;
        }
      }
      return false;
    };
    return slide(detail::kRookDirs, PieceKind::Rook) || slide(detail::kBishopDirs, PieceKind::Bishop);
  }

  // Check in the variant's sense. Antichess has no check; Atomic kings that
  // touch cannot be checked.
  bool in_check(Color c) const {
    if (variant_ == Variant::Antichess) return false;
    auto k = king_square(c);
    if (!k) return false;
    if (variant_ == Variant::Atomic) {
      auto other = king_square(~c);
      if (other && kings_adjacent(*k, *other)) return false;
    }
    return is_attacked(*k, ~c);
  }

  // Removes at least one opposing piece: plain captures, en passant, and any
  // Atomic capture.
  bool is_capture(const Move& m) const {
    if (m.castle) return false;
    const Piece target = board_[m.to];
    if (!target.empty() && target.color != side_) return true;
    return is_en_passant(m);
  }

  bool is_en_passant(const Move& m) const {
    return !m.castle && board_[m.from].kind == PieceKind::Pawn && ep_ && m.to == *ep_ &&
           file_of(m.from) != file_of(m.to) && board_[m.to].empty();
  }

  std::vector<Move> pseudo_legal_moves() const {
    std::vector<Move> out;
    out.reserve(64);
    const Color us = side_;
    for (Square s = 0; s < 64; ++s) {
      const Piece pc = board_[s];
      if (pc.empty() || pc.color != us) continue;
      switch (pc.kind) {
        case PieceKind::Pawn: pawn_moves(s, out); break;
        case PieceKind::Knight: step_moves(s, detail::kKnightSteps, out); break;
        case PieceKind::King: step_moves(s, detail::kKingSteps, out); break;
        case PieceKind::Bishop: slide_moves(s, detail::kBishopDirs, out); break;
        case PieceKind::Rook: slide_moves(s, detail::kRookDirs, out); break;
        case PieceKind::Queen:
          slide_moves(s, detail::kBishopDirs, out);
          slide_moves(s, detail::kRookDirs, out);
          break;
        default: break;
      }
    }
    castle_moves(out);
    return out;
  }

  std::vector<Move> legal_moves() const {
    std::vector<Move> moves = pseudo_legal_moves();
    if (variant_ == Variant::Antichess) {
      const bool any_capture = std::any_of(moves.begin(), moves.end(), [&](const Move& m) { return is_capture(m); });
      if (any_capture) std::erase_if(moves, [&](const Move& m) { return !is_capture(m); });
      return moves;
    }
    std::erase_if(moves, [&](const Move& m) { return !leaves_king_safe(m); });
    return moves;
  }

  bool is_pseudo_legal(const Move& m) const {
    auto moves = pseudo_legal_moves();
    return std::find(moves.begin(), moves.end(), m) != moves.end();
  }

  bool is_legal(const Move& m) const {
    auto moves = legal_moves();
    return std::find(moves.begin(), moves.end(), m) != moves.end();
  }

  // Applies a move without any validation. Callers go through apply_move or
  // have already matched the move against a generated list.
  void play(const Move& m) {
    const Color us = side_;
    const Piece mover = board_[m.from];
    const bool capture = is_capture(m);
    const bool pawn_move = mover.kind == PieceKind::Pawn;
    const int back = us == Color::White ? 0 : 7;

    std::optional<Square> next_ep;
    if (m.castle) {
      const bool king_side = file_of(m.to) > file_of(m.from);
      const Piece rook = board_[m.to];
      board_[m.from] = kNoPiece;
      board_[m.to] = kNoPiece;
      board_[make_square(king_side ? 6 : 2, back)] = mover;
      board_[make_square(king_side ? 5 : 3, back)] = rook;
      castling_.clear(us);
    } else {
      Square captured_at = m.to;
      if (is_en_passant(m)) captured_at = make_square(file_of(m.to), rank_of(m.from));
      if (capture) board_[captured_at] = kNoPiece;
      board_[m.from] = kNoPiece;
      Piece placed = mover;
      if (m.promotion != PieceKind::None) placed.kind = m.promotion;
      if (capture && variant_ == Variant::Atomic) {
        // The capturer goes too, along with every non-pawn neighbour.
        for (auto [df, dr] : detail::kKingSteps) {
          const int f = file_of(m.to) + df, r = rank_of(m.to) + dr;
          if (!on_board(f, r)) continue;
          Piece& n = board_[make_square(f, r)];
          if (!n.empty() && n.kind != PieceKind::Pawn) n = kNoPiece;
        }
      } else {
        board_[m.to] = placed;
      }
      if (mover.kind == PieceKind::King) castling_.clear(us);
      if (pawn_move && std::abs(rank_of(m.to) - rank_of(m.from)) == 2)
        next_ep = make_square(file_of(m.from), (rank_of(m.from) + rank_of(m.to)) / 2);
    }
    sanitize_castling();
    ep_ = next_ep;
    halfmove_clock_ = (capture || pawn_move) ? 0 : halfmove_clock_ + 1;
    if (us == Color::Black) ++fullmove_;
    side_ = ~us;
    ++ply_;
  }

  GameStatus status() const {
    if (variant_ == Variant::Atomic) {
      if (!king_square(Color::White)) return GameStatus::BlackWins;
      if (!king_square(Color::Black)) return GameStatus::WhiteWins;
    }
    if (variant_ == Variant::Horde && no_pieces(Color::White)) return GameStatus::BlackWins;
    const auto moves = legal_moves();
    if (moves.empty()) {
      if (variant_ == Variant::Antichess)
        return side_ == Color::White ? GameStatus::WhiteWins : GameStatus::BlackWins;
      if (in_check(side_)) return side_ == Color::White ? GameStatus::BlackWins : GameStatus::WhiteWins;
      return GameStatus::Draw;
    }
    if (halfmove_clock_ >= 100) return GameStatus::Draw;
    if ((variant_ == Variant::Standard || variant_ == Variant::Chess960) && insufficient_material())
      return GameStatus::Draw;
    return GameStatus::Ongoing;
  }

  friend bool operator==(const Position&, const Position&) = default;

 private:
  static bool kings_adjacent(Square a, Square b) {
    return std::abs(file_of(a) - file_of(b)) <= 1 && std::abs(rank_of(a) - rank_of(b)) <= 1;
  }

  bool no_pieces(Color c) const {
    return std::none_of(board_.begin(), board_.end(), [c](Piece p) { return !p.empty() && p.color == c; });
  }

  bool insufficient_material() const {
    int minors = 0;
    for (Piece p : board_) {
      if (p.empty() || p.kind == PieceKind::King) continue;
      if (p.kind == PieceKind::Knight || p.kind == PieceKind::Bishop) ++minors;
      else return false;
    }
    return minors <= 1;
  }

  std::optional<Square> back_rank_king(Color c) const {
    const int back = c == Color::White ? 0 : 7;
    for (int f = 0; f < 8; ++f)
      if (board_[make_square(f, back)].is(c, PieceKind::King)) return make_square(f, back);
    return std::nullopt;
  }

  int outermost_rook_file(Color c, CastleSide s) const {
    auto king = back_rank_king(c);
    if (!king) return -1;
    const int back = c == Color::White ? 0 : 7;
    const int kf = file_of(*king);
    if (s == CastleSide::King) {
      for (int f = 7; f > kf; --f)
        if (board_[make_square(f, back)].is(c, PieceKind::Rook)) return f;
    } else {
      for (int f = 0; f < kf; ++f)
        if (board_[make_square(f, back)].is(c, PieceKind::Rook)) return f;
    }
    return -1;
  }

  void check_kings() const {
    const int wk = count(Color::White, PieceKind::King), bk = count(Color::Black, PieceKind::King);
    switch (variant_) {
      case Variant::Standard:
      case Variant::Chess960:
        if (wk != 1 || bk != 1) throw Error(ErrorKind::BadFen, "each side needs exactly one king");
        break;
      case Variant::Atomic:
        if (wk > 1 || bk > 1) throw Error(ErrorKind::BadFen, "at most one king per side in Atomic");
        break;
      case Variant::Horde:
        if (bk != 1 || wk != 0) throw Error(ErrorKind::BadFen, "Horde needs a black king and no white king");
        break;
      case Variant::Antichess:
        break;
    }
  }

  // Drops any right whose king or rook is no longer in place.
  void sanitize_castling() {
    for (Color c : {Color::White, Color::Black}) {
      const int back = c == Color::White ? 0 : 7;
      const bool king_home = back_rank_king(c).has_value();
      for (CastleSide s : {CastleSide::King, CastleSide::Queen}) {
        const int f = castling_.file(c, s);
        if (f < 0) continue;
        if (!king_home || !board_[make_square(f, back)].is(c, PieceKind::Rook)) castling_.set(c, s, -1);
      }
    }
  }

  void add_pawn_move(Square from, Square to, std::vector<Move>& out) const {
    const int last = side_ == Color::White ? 7 : 0;
    if (rank_of(to) != last) {
      out.push_back({from, to});
      return;
    }
    for (PieceKind k : {PieceKind::Queen, PieceKind::Rook, PieceKind::Bishop, PieceKind::Knight})
      out.push_back({from, to, k});
    if (variant_ == Variant::Antichess) out.push_back({from, to, PieceKind::King});
  }

  void pawn_moves(Square s, std::vector<Move>& out) const {
    const Color us = side_;
    const int dir = us == Color::White ? 1 : -1;
    const int f = file_of(s), r = rank_of(s);
    const int r1 = r + dir;
    if (!on_board(f, r1)) return;
    if (board_[make_square(f, r1)].empty()) {
      add_pawn_move(s, make_square(f, r1), out);
      const bool can_double = us == Color::White ? (r == 1 || (r == 0 && variant_ == Variant::Horde)) : r == 6;
      const int r2 = r + 2 * dir;
      if (can_double && on_board(f, r2) && board_[make_square(f, r2)].empty()) out.push_back({s, make_square(f, r2)});
    }
    for (int df : {-1, 1}) {
      if (!on_board(f + df, r1)) continue;
      const Square t = make_square(f + df, r1);
      const Piece target = board_[t];
      if (!target.empty() && target.color != us) {
        add_pawn_move(s, t, out);
      } else if (target.empty() && ep_ && *ep_ == t) {
        const Piece victim = board_[make_square(f + df, r)];
        if (victim.is(~us, PieceKind::Pawn)) out.push_back({s, t});
      }
    }
  }

  template <typename Steps>
  void step_moves(Square s, const Steps& steps, std::vector<Move>& out) const {
    const bool is_king = board_[s].kind == PieceKind::King;
    for (auto [df, dr] : steps) {
      const int f = file_of(s) + df, r = rank_of(s) + dr;
      if (!on_board(f, r)) continue;
      const Square t = make_square(f, r);
      const Piece target = board_[t];
      if (!target.empty() && target.color == side_) continue;
      if (!target.empty() && is_king && variant_ == Variant::Atomic) continue;
      out.push_back({s, t});
    }
  }

  template <typename Dirs>
  void slide_moves(Square s, const Dirs& dirs, std::vector<Move>& out) const {
    for (auto [df, dr] : dirs) {
      int f = file_of(s) + df, r = rank_of(s) + dr;
      while (on_board(f, r)) {
        const Square t = make_square(f, r);
        const Piece target = board_[t];
        if (!target.empty()) {
          if (target.color != side_) out.push_back({s, t});
          break;
        }
        out.push_back({s, t});
        f += df;
        r += dr;
      }
    }
  }

  void castle_moves(std::vector<Move>& out) const {
    if (variant_ == Variant::Antichess) return;
    const Color us = side_;
    auto king = back_rank_king(us);
    if (!king) return;
    const int back = rank_of(*king);
    const int kf = file_of(*king);
    for (CastleSide side : {CastleSide::King, CastleSide::Queen}) {
      const int rf = castling_.file(us, side);
      if (rf < 0) continue;
      const Square rook_sq = make_square(rf, back);
      if (!board_[rook_sq].is(us, PieceKind::Rook)) continue;
      const int king_to = side == CastleSide::King ? 6 : 2;
      const int rook_to = side == CastleSide::King ? 5 : 3;
      const int lo = std::min({kf, rf, king_to, rook_to});
      const int hi = std::max({kf, rf, king_to, rook_to});
      bool clear = true;
      for (int f = lo; f <= hi && clear; ++f) {
        const Square sq = make_square(f, back);
        if (sq != *king && sq != rook_sq && !board_[sq].empty()) clear = false;
      }
      if (clear) out.push_back({*king, rook_sq, PieceKind::None, true});
    }
  }

  bool leaves_king_safe(const Move& m) const {
    const Color us = side_;
    if (m.castle) {
      if (in_check(us)) return false;
      const int back = rank_of(m.from);
      const int king_to = file_of(m.to) > file_of(m.from) ? 6 : 2;
      const int step = king_to >= file_of(m.from) ? 1 : -1;
      // Squares the king crosses must not be attacked; look with the king and
      // castling rook lifted so they do not mask an attack along the rank.
      Position lifted = *this;
      lifted.board_[m.from] = kNoPiece;
      lifted.board_[m.to] = kNoPiece;
      for (int f = file_of(m.from);; f += step) {
        if (lifted.is_attacked(make_square(f, back), ~us)) return false;
        if (f == king_to) break;
      }
    }
    Position next = *this;
    next.play(m);
    auto own_king = next.king_square(us);
    if (variant_ == Variant::Atomic) {
      if (!own_king) return false;
      auto their_king = next.king_square(~us);
      if (!their_king) return true;
      if (kings_adjacent(*own_king, *their_king)) return true;
      return !next.is_attacked(*own_king, ~us);
    }
    if (!own_king) return true;  // Horde white
    return !next.is_attacked(*own_king, ~us);
  }

  std::array<Piece, 64> board_{};
  Color side_ = Color::White;
  CastlingRights castling_{};
  std::optional<Square> ep_{};
  int halfmove_clock_ = 0;
  int fullmove_ = 1;
  int ply_ = 0;
  Variant variant_ = Variant::Standard;
};

// ---------------------------------------------------------------------------
// Free-function move API

inline Position apply_move(const Position& pos, const Move& m, Legality legality = Legality::Replay) {
  const Piece mover = pos.at(m.from);
  if (m.from == m.to && !m.castle) throw Error(ErrorKind::IllegalMove, "origin equals destination");
  if (mover.empty() || mover.color != pos.side_to_move())
    throw Error(ErrorKind::IllegalMove, "no piece of the side to move on " + square_name(m.from));
  const bool ok = legality == Legality::Strict ? pos.is_legal(m) : pos.is_pseudo_legal(m);
  if (!ok) throw Error(ErrorKind::IllegalMove, square_name(m.from) + square_name(m.to) + " in " + pos.fen());
  Position next = pos;
  next.play(m);
  return next;
}

inline bool is_capture(const Position& pos, const Move& m) {
  if (!pos.is_pseudo_legal(m)) throw Error(ErrorKind::IllegalMove, square_name(m.from) + square_name(m.to));
  return pos.is_capture(m);
}

inline Move parse_san(const Position& pos, std::string_view text) {
  std::string s(text);
  while (!s.empty() && (s.back() == '+' || s.back() == '#' || s.back() == '!' || s.back() == '?')) s.pop_back();
  if (s.empty()) throw Error(ErrorKind::UnparseableSan, "empty move");

  const auto moves = pos.pseudo_legal_moves();
  auto resolve = [&](std::vector<Move> candidates) -> Move {
    if (candidates.size() > 1) std::erase_if(candidates, [&](const Move& m) { return !pos.is_legal(m); });
    if (candidates.empty()) throw Error(ErrorKind::NoMatchingMove, std::string(text) + " in " + pos.fen());
    if (candidates.size() > 1) throw Error(ErrorKind::AmbiguousSan, std::string(text) + " in " + pos.fen());
    return candidates.front();
  };

  if (s == "O-O" || s == "0-0" || s == "O-O-O" || s == "0-0-0") {
    const bool king_side = s.size() == 3;
    std::vector<Move> c;
    for (const Move& m : moves)
      if (m.castle && (file_of(m.to) > file_of(m.from)) == king_side) c.push_back(m);
    return resolve(std::move(c));
  }

  PieceKind kind = PieceKind::Pawn;
  std::size_t i = 0;
  if (std::string_view("NBRQK").find(s[0]) != std::string_view::npos) {
    kind = kind_from_letter(s[0]);
    i = 1;
  }
  PieceKind promo = PieceKind::None;
  if (auto eq = s.find('='); eq != std::string::npos) {
    if (eq + 2 != s.size()) throw Error(ErrorKind::UnparseableSan, std::string(text));
    promo = kind_from_letter(s[eq + 1]);
    if (promo == PieceKind::None || promo == PieceKind::Pawn) throw Error(ErrorKind::UnparseableSan, std::string(text));
    s.resize(eq);
  } else if (kind == PieceKind::Pawn && s.size() >= 3 && std::string_view("NBRQK").find(s.back()) != std::string_view::npos) {
    promo = kind_from_letter(s.back());
    s.pop_back();
  }
  std::string body;
  for (std::size_t j = i; j < s.size(); ++j)
    if (s[j] != 'x' && s[j] != ':' && s[j] != '-') body.push_back(s[j]);
  if (body.size() < 2) throw Error(ErrorKind::UnparseableSan, std::string(text));
  auto dest = parse_square(std::string_view(body).substr(body.size() - 2));
  if (!dest) throw Error(ErrorKind::UnparseableSan, std::string(text));
  const std::string disamb = body.substr(0, body.size() - 2);
  int want_file = -1, want_rank = -1;
  for (char c : disamb) {
    if (c >= 'a' && c <= 'h' && want_file < 0) want_file = c - 'a';
    else if (c >= '1' && c <= '8' && want_rank < 0) want_rank = c - '1';
    else throw Error(ErrorKind::UnparseableSan, std::string(text));
  }
  if (kind == PieceKind::Pawn && want_file < 0) want_file = file_of(*dest);

  std::vector<Move> c;
  for (const Move& m : moves) {
    if (m.castle || m.to != *dest || m.promotion != promo) continue;
    if (pos.at(m.from).kind != kind) continue;
    if (want_file >= 0 && file_of(m.from) != want_file) continue;
    if (want_rank >= 0 && rank_of(m.from) != want_rank) continue;
    c.push_back(m);
  }
  return resolve(std::move(c));
}

inline std::string to_san(const Position& pos, const Move& m) {
  std::string out;
  if (m.castle) {
    out = file_of(m.to) > file_of(m.from) ? "O-O" : "O-O-O";
  } else {
    const Piece mover = pos.at(m.from);
    const bool capture = pos.is_capture(m);
    if (mover.kind == PieceKind::Pawn) {
      if (capture) {
        out.push_back(static_cast<char>('a' + file_of(m.from)));
        out.push_back('x');
      }
      out += square_name(m.to);
      if (m.promotion != PieceKind::None) {
        out.push_back('=');
        out.push_back(piece_letter(m.promotion));
      }
    } else {
      out.push_back(piece_letter(mover.kind));
      bool clash = false, same_file = false, same_rank = false;
      for (const Move& o : pos.legal_moves()) {
        if (o.castle || o.to != m.to || o.from == m.from || pos.at(o.from).kind != mover.kind) continue;
        clash = true;
        same_file |= file_of(o.from) == file_of(m.from);
        same_rank |= rank_of(o.from) == rank_of(m.from);
      }
      if (clash) {
        if (!same_file) out.push_back(static_cast<char>('a' + file_of(m.from)));
        else if (!same_rank) out.push_back(static_cast<char>('1' + rank_of(m.from)));
        else out += square_name(m.from);
      }
      if (capture) out.push_back('x');
      out += square_name(m.to);
    }
  }
  if (pos.variant() == Variant::Standard || pos.variant() == Variant::Chess960) {
    Position next = pos;
    next.play(m);
    if (next.in_check(next.side_to_move())) out.push_back(next.legal_moves().empty() ? '#' : '+');
  }
  return out;
}

// Castling is written king-to-destination unless `chess960` asks for the
// king-takes-rook form.
inline std::string to_uci(const Position& pos, const Move& m, bool chess960 = false) {
  (void)pos;
  Square to = m.to;
  if (m.castle && !chess960) to = make_square(file_of(m.to) > file_of(m.from) ? 6 : 2, rank_of(m.from));
  std::string out = square_name(m.from) + square_name(to);
  if (m.promotion != PieceKind::None)
    out.push_back(static_cast<char>(std::tolower(piece_letter(m.promotion))));
  return out;
}

inline Move parse_uci(const Position& pos, std::string_view text) {
  if (text.size() < 4 || text.size() > 5) throw Error(ErrorKind::IllegalMove, "bad UCI move '" + std::string(text) + "'");
  auto from = parse_square(text.substr(0, 2));
  auto to = parse_square(text.substr(2, 2));
  if (!from || !to) throw Error(ErrorKind::IllegalMove, "bad UCI move '" + std::string(text) + "'");
  PieceKind promo = text.size() == 5 ? kind_from_letter(text[4]) : PieceKind::None;
  for (const Move& m : pos.pseudo_legal_moves()) {
    if (m.from != *from) continue;
    if (m.castle) {
      const Square king_to = make_square(file_of(m.to) > file_of(m.from) ? 6 : 2, rank_of(m.from));
      const bool king_takes_rook = m.to == *to;
      const bool king_to_target = *to == king_to && pos.variant() != Variant::Chess960 && *to != m.from;
      if (king_takes_rook || king_to_target) return m;
      continue;
    }
    if (m.to == *to && m.promotion == promo) return m;
  }
  throw Error(ErrorKind::IllegalMove, "UCI move '" + std::string(text) + "' not playable in " + pos.fen());
}

// ---------------------------------------------------------------------------
// Material and passed pawns

enum class PassedBucket : int { Ranks2to4 = 0, Rank5 = 1, Rank6 = 2, Rank7 = 3 };

struct SideMaterial {
  int pawns = 0, knights = 0, bishops = 0, rooks = 0, queens = 0, kings = 0;
  std::array<int, 4> passed{};  // indexed by PassedBucket

  int passed_total() const { return passed[0] + passed[1] + passed[2] + passed[3]; }
  friend bool operator==(const SideMaterial&, const SideMaterial&) = default;
};

struct MaterialCounts {
  SideMaterial white, black;

  const SideMaterial& side(Color c) const { return c == Color::White ? white : black; }
  friend bool operator==(const MaterialCounts&, const MaterialCounts&) = default;
};

// White minus black.
struct MaterialDelta {
  int pawn = 0, knight = 0, bishop = 0, rook = 0, queen = 0, king = 0;
  std::array<int, 4> passed{};
  friend bool operator==(const MaterialDelta&, const MaterialDelta&) = default;
};

// A pawn is passed when no enemy pawn stands on its file or a neighbouring
// file anywhere ahead of it. Used unchanged for every variant.
inline bool is_passed_pawn(const Position& pos, Square s) {
  const Piece p = pos.at(s);
  if (p.kind != PieceKind::Pawn) return false;
  const int dir = p.color == Color::White ? 1 : -1;
  for (int r = rank_of(s) + dir; r >= 0 && r < 8; r += dir)
    for (int f = file_of(s) - 1; f <= file_of(s) + 1; ++f)
      if (on_board(f, r) && pos.at(make_square(f, r)).is(~p.color, PieceKind::Pawn)) return false;
  return true;
}

// Relative ranks 1-4 share the lowest bucket (rank 1 only occurs in Horde).
constexpr PassedBucket passed_bucket(int relative_rank_1based) {
  if (relative_rank_1based <= 4) return PassedBucket::Ranks2to4;
  if (relative_rank_1based == 5) return PassedBucket::Rank5;
  if (relative_rank_1based == 6) return PassedBucket::Rank6;
  return PassedBucket::Rank7;
}

inline MaterialCounts material_counts(const Position& pos) {
  MaterialCounts mc;
  for (Square s = 0; s < 64; ++s) {
    const Piece p = pos.at(s);
    if (p.empty()) continue;
    SideMaterial& side = p.color == Color::White ? mc.white : mc.black;
    switch (p.kind) {
      case PieceKind::Pawn:
        ++side.pawns;
        if (is_passed_pawn(pos, s)) ++side.passed[static_cast<int>(passed_bucket(relative_rank(p.color, s)))];
        break;
      case PieceKind::Knight: ++side.knights; break;
      case PieceKind::Bishop: ++side.bishops; break;
      case PieceKind::Rook: ++side.rooks; break;
      case PieceKind::Queen: ++side.queens; break;
      case PieceKind::King: ++side.kings; break;
      default: break;
    }
  }
  return mc;
}

inline MaterialDelta delta(const MaterialCounts& mc) {
  MaterialDelta d;
  d.pawn = mc.white.pawns - mc.black.pawns;
  d.knight = mc.white.knights - mc.black.knights;
  d.bishop = mc.white.bishops - mc.black.bishops;
  d.rook = mc.white.rooks - mc.black.rooks;
  d.queen = mc.white.queens - mc.black.queens;
  d.king = mc.white.kings - mc.black.kings;
  for (int i = 0; i < 4; ++i) d.passed[i] = mc.white.passed[i] - mc.black.passed[i];
  return d;
}

}  // namespace pieceval
