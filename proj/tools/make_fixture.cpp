// Writes the bundled PGN fixture: a small, deterministic archive in Lichess
// export format. Games are random playouts with a capture bias, so material
// imbalances occur; results follow the Elo law on true strength plus a
// material term at the final position.
//
//   pieceval_make_fixture OUT.pgn [--games N] [--seed S]

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "pieceval.hpp"

using namespace pieceval;

namespace {

int piece_points(PieceKind k) {
  switch (k) {
    case PieceKind::Pawn: return 1;
    case PieceKind::Knight: return 3;
    case PieceKind::Bishop: return 3;
    case PieceKind::Rook: return 5;
    case PieceKind::Queen: return 9;
    default: return 0;
  }
}

struct Player {
  std::string name;
  double strength;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: pieceval_make_fixture OUT.pgn [--games N] [--seed S]\n";
    return 1;
  }
  const std::string path = argv[1];
  std::size_t n_games = 2000;
  std::uint64_t seed = 2024;
  for (int i = 2; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--games") n_games = std::stoul(argv[i + 1]);
    else if (flag == "--seed") seed = std::stoull(argv[i + 1]);
    else {
      std::cerr << "unknown flag " << flag << "\n";
      return 1;
    }
  }

  Rng rng = make_rng({seed, 0xf1});
  std::normal_distribution<double> z(0, 1);
  std::vector<Player> players;
  for (int i = 0; i < 24; ++i) {
    const double s = i == 0 ? 1100 : std::clamp(1650 + 220 * z(rng), 1250.0, 2400.0);
    players.push_back({"player" + std::to_string(i + 1), s});
  }

  const std::size_t months = 8;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return 2;
  }
  for (std::size_t g = 0; g < n_games; ++g) {
    Rng grng = make_rng({seed, 0x9a, g});
    const auto a = static_cast<std::size_t>(uniform_int(grng, 0, 23));
    auto b = static_cast<std::size_t>(uniform_int(grng, 0, 22));
    if (b >= a) ++b;
    const Player& w = players[a];
    const Player& bl = players[b];

    GameRecord rec;
    rec.white = w.name;
    rec.black = bl.name;
    rec.month = {2015, static_cast<int>(1 + g * months / n_games)};
    rec.white_rating = static_cast<int>(std::lround(w.strength + 40 * z(grng)));
    rec.black_rating = static_cast<int>(std::lround(bl.strength + 40 * z(grng)));
    const double tc = uniform01(grng);
    rec.time_control = tc < 0.05 ? TimeControl{180, 0} : tc < 0.10 ? TimeControl{300, 3} : TimeControl{600, 0};
    const double term = uniform01(grng);
    rec.termination = term < 0.07 ? Termination::TimeForfeit : term < 0.10 ? Termination::Abandoned : Termination::Normal;

    const int target = static_cast<int>(uniform_int(grng, 6, 170));
    Position pos = Position::start();
    GameStatus status = GameStatus::Ongoing;
    while (pos.ply() < target && (status = pos.status()) == GameStatus::Ongoing) {
      const auto moves = pos.legal_moves();
      const Move* pick = &moves[static_cast<std::size_t>(uniform_int(grng, 0, std::int64_t(moves.size()) - 1))];
      if (uniform01(grng) < 0.6) {
        int best = 0;
        for (const auto& m : moves) {
          if (!pos.is_capture(m)) continue;
          const Piece victim = pos.at(m.to);
          const int v = victim.kind == PieceKind::None ? 1 : piece_points(victim.kind);
          if (v > best) {
            best = v;
            pick = &m;
          }
        }
      }
      rec.moves.push_back(to_san(pos, *pick));
      pos.play(*pick);
    }
    if (status == GameStatus::Ongoing) status = pos.status();

    if (status == GameStatus::WhiteWins) rec.result = Result::WhiteWin;
    else if (status == GameStatus::BlackWins) rec.result = Result::BlackWin;
    else if (status == GameStatus::Draw) rec.result = Result::Draw;
    else {
      const MaterialDelta d = delta(material_counts(pos));
      const double elo = w.strength - bl.strength + 20 + 80 * d.pawn + 250 * d.knight + 270 * d.bishop +
                         400 * d.rook + 800 * d.queen;
      const int s = [&] {
        const double g0 = expected_score(elo);
        const double u = uniform01(grng);
        if (u < g0 - 0.05) return 2;
        if (u < g0 + 0.05) return 1;
        return 0;
      }();
      rec.result = s == 2 ? Result::WhiteWin : s == 1 ? Result::Draw : Result::BlackWin;
    }
    const double y = rec.outcome();
    const double e = expected_score(rec.white_rating - rec.black_rating);
    rec.white_rating_diff = static_cast<int>(std::lround(20 * (y - e)));
    rec.black_rating_diff = -*rec.white_rating_diff;

    // A handful of corrupt games for the parser's error path.
    if (g % 500 == 250 && rec.moves.size() > 4) rec.moves[3] = "Ke9";
    write_pgn(out, rec);
  }
  return 0;
}
