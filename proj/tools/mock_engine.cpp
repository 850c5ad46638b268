// Minimal UCI engine for tests: always plays the legal move whose UCI text
// sorts first. A few flags make it misbehave on purpose.
//
//   --hang-after N      stop answering "go" after N searches
//   --illegal-after N   answer with an illegal move after N searches
//   --exit-after N      exit without answering after N searches

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pieceval/selfplay.hpp"

using namespace pieceval;

int main(int argc, char** argv) {
  long hang_after = -1, illegal_after = -1, exit_after = -1;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    const long v = std::strtol(argv[i + 1], nullptr, 10);
    if (flag == "--hang-after") hang_after = v;
    else if (flag == "--illegal-after") illegal_after = v;
    else if (flag == "--exit-after") exit_after = v;
    else {
      std::cerr << "unknown flag " << flag << "\n";
      return 1;
    }
  }

  Variant variant = Variant::Standard;
  Position pos = Position::start();
  long searches = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::string cmd;
    in >> cmd;
    if (cmd == "uci") {
      std::cout << "id name pieceval-mock\nid author pieceval\n"
                << "option name UCI_Elo type spin default 1600 min 1320 max 3190\n"
                << "option name UCI_LimitStrength type check default false\n"
                << "option name UCI_Chess960 type check default false\nuciok" << std::endl;
    } else if (cmd == "isready") {
      std::cout << "readyok" << std::endl;
    } else if (cmd == "setoption") {
      if (line.find("UCI_Chess960 value true") != std::string::npos) variant = Variant::Chess960;
    } else if (cmd == "position") {
      std::vector<std::string> tok;
      for (std::string t; in >> t;) tok.push_back(t);
      std::string fen = std::string(kStandardStartFen);
      std::vector<std::string> moves;
      std::size_t i = 0;
      if (i < tok.size() && tok[i] == "fen") {
        fen.clear();
        for (++i; i < tok.size() && tok[i] != "moves"; ++i) fen += (fen.empty() ? "" : " ") + tok[i];
      } else if (i < tok.size() && tok[i] == "startpos") {
        ++i;
      }
      if (i < tok.size() && tok[i] == "moves") moves.assign(tok.begin() + static_cast<std::ptrdiff_t>(i) + 1, tok.end());
      try {
        pos = replay_uci(fen, variant, moves);
      } catch (const Error& e) {
        std::cerr << "bad position: " << e.what() << "\n";
      }
    } else if (cmd == "go") {
      ++searches;
      if (exit_after >= 0 && searches > exit_after) return 0;
      if (hang_after >= 0 && searches > hang_after) continue;
      if (illegal_after >= 0 && searches > illegal_after) {
        std::cout << "bestmove a1a1" << std::endl;
        continue;
      }
      std::cout << "info depth 1\nbestmove " << first_legal_move(pos) << std::endl;
    } else if (cmd == "quit") {
      return 0;
    }
  }
  return 0;
}
