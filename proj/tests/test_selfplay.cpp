#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pieceval/selfplay.hpp"

using namespace pieceval;

namespace {

std::string temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pieceval_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  return p.string();
}

MatchSpec spec(std::vector<std::string> removals, int games, int white = 1600, int black = 1600) {
  MatchSpec s;
  const Position base = s.base_position();
  for (const auto& r : removals) s.ablation.push_back(parse_removal(base, r));
  s.games = games;
  s.white_elo = white;
  s.black_elo = black;
  s.movetime = 0.05;
  s.max_plies = 200;
  return s;
}

EngineFactory mock_process(std::vector<std::string> extra = {}, double grace = 2) {
  std::vector<std::string> argv{PIECEVAL_MOCK_ENGINE};
  argv.insert(argv.end(), extra.begin(), extra.end());
  return uci_engine_factory(argv, grace);
}

}  // namespace

TEST(MatchSpec, Validation) {
  const Position base = Position::start();
  EXPECT_EQ(parse_removal(base, "b1").piece, (Piece{PieceKind::Knight, Color::White}));
  EXPECT_EQ(parse_removal(base, "nb8").piece, (Piece{PieceKind::Knight, Color::Black}));
  EXPECT_THROW(parse_removal(base, "Nb8"), Error);
  EXPECT_THROW(parse_removal(base, "e4"), Error);
  MatchSpec s;
  s.ablation.push_back({parse_square("e1").value(), {PieceKind::King, Color::White}});
  EXPECT_THROW(s.validate(), Error);
  s.ablation.clear();
  s.white_elo = 1700;
  EXPECT_THROW(s.validate(), Error);
  std::istringstream bad(R"({"variant":"standard","colour":"white"})");
  EXPECT_THROW(read_match_specs(bad), Error);
  std::istringstream atomic(R"({"variant":"atomic"})");
  EXPECT_THROW(read_match_specs(atomic), Error);
}

TEST(MatchSpec, JsonAndHash) {
  std::istringstream in(R"({"matches":[{"remove":["Nb1"],"games":3,"white_elo":2000},
                                       {"variant":"chess960","opening":0,"remove":["a2"]}]})");
  const auto specs = read_match_specs(in);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].games, 3);
  EXPECT_EQ(specs[0].white_elo, 2000);
  EXPECT_EQ(specs[1].variant, Variant::Chess960);
  auto more = specs[0];
  more.games = 50;
  EXPECT_EQ(spec_hash(more), spec_hash(specs[0]));
  more.black_elo = 2800;
  EXPECT_NE(spec_hash(more), spec_hash(specs[0]));
  std::istringstream round(to_json(specs[1]).dump());
  EXPECT_EQ(spec_hash(read_match_specs(round)[0]), spec_hash(specs[1]));
}

TEST(MatchSpec, AblatedStart) {
  const auto s = spec({"b1"}, 1);
  const Position p = s.start_position();
  EXPECT_TRUE(p.at(parse_square("b1").value()).empty());
  EXPECT_EQ(delta(material_counts(p)).knight, -1);
  const auto r = spec({"a1", "h8"}, 1).start_position();
  EXPECT_EQ(r.fen(), "rnbqkbn1/pppppppp/8/8/8/8/PPPPPPPP/1NBQKBNR w Kq - 0 1");
}

TEST(Strength, IndicatorsSumToZero) {
  for (int w : kEngineSettings)
    for (int b : kEngineSettings) {
      SelfPlayRow r;
      r.white_elo = w;
      r.black_elo = b;
      int sum = 0;
      for (int s : kEngineSettings) sum += r.strength(s);
      EXPECT_EQ(sum, 0);
      EXPECT_EQ(r.strength(2000), (w == 2000) - (b == 2000));
    }
}

TEST(RunMatches, MockGamesAreDeterministic) {
  const auto specs = std::vector{spec({}, 10), spec({"b1"}, 3, 2000, 2400)};
  const auto a = run_matches(specs, mock_engine_factory());
  ASSERT_EQ(a.rows.size(), 13u);
  EXPECT_TRUE(a.voided.empty());
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a.rows[static_cast<std::size_t>(i)].material, MaterialDelta{});
    EXPECT_EQ(a.rows[static_cast<std::size_t>(i)].game, i);
  }
  EXPECT_EQ(a.rows[10].material.knight, -1);
  EXPECT_EQ(a.rows[10].strength(2000), 1);
  EXPECT_EQ(a.rows[10].strength(2400), -1);
  const auto b = run_matches(specs, mock_engine_factory(), {"", 3});
  EXPECT_EQ(a.rows, b.rows);
}

TEST(RunMatches, UciProcessMatchesInProcessMock) {
  const auto specs = std::vector{spec({"g8"}, 2)};
  const auto local = run_matches(specs, mock_engine_factory());
  const auto remote = run_matches(specs, mock_process());
  ASSERT_EQ(remote.rows.size(), 2u) << (remote.voided.empty() ? "" : remote.voided[0].error);
  EXPECT_EQ(local.rows, remote.rows);
}

TEST(RunMatches, Chess960Opening) {
  MatchSpec s;
  s.variant = Variant::Chess960;
  s.opening_id = 0;
  s.games = 1;
  s.max_plies = 120;
  const Position base = s.base_position();
  s.ablation.push_back(parse_removal(base, "b2"));
  const auto run = run_matches({s}, mock_engine_factory());
  ASSERT_EQ(run.rows.size(), 1u);
  EXPECT_EQ(run.rows[0].material.pawn, -1);
  EXPECT_EQ(run.rows[0].opening_id, 0);
}

TEST(RunMatches, LedgerResume) {
  const std::string path = temp_path("ledger");
  auto s = spec({"d8"}, 4);
  const auto first = run_matches({s}, mock_engine_factory(), {path, 1});
  EXPECT_EQ(first.rows.size(), 4u);
  s.games = 9;
  const auto second = run_matches({s}, mock_engine_factory(), {path, 1});
  EXPECT_EQ(second.resumed, 4u);
  ASSERT_EQ(second.rows.size(), 9u);
  const auto fresh = run_matches({s}, mock_engine_factory());
  EXPECT_EQ(second.rows, fresh.rows);
  const Ledger l = read_ledger(path);
  EXPECT_EQ(l.rows.size(), 9u);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kLedgerHeader);
  std::filesystem::remove(path);
}

TEST(RunMatches, FaultyEnginesVoidGames) {
  const std::string path = temp_path("voids");
  const auto specs = std::vector{spec({}, 3)};
  for (const auto& [flag, kind] : std::vector<std::pair<std::string, std::string>>{
           {"--hang-after", "EngineTimeout"}, {"--illegal-after", "IllegalEngineMove"},
           {"--exit-after", "ProtocolViolation"}}) {
    const auto run = run_matches(specs, mock_process({flag, "4"}, 0.3), {path, 1});
    EXPECT_EQ(run.rows.size() + run.voided.size(), 3u) << flag;
    ASSERT_FALSE(run.voided.empty()) << flag;
    EXPECT_EQ(run.voided[0].error.rfind(kind, 0), 0u) << run.voided[0].error;
    std::filesystem::remove(path);
  }
}

TEST(FitSelfPlay, AllDrawsGiveZero) {
  auto rows = generate_selfplay_rows(400, {}, 3);
  for (auto& r : rows) r.outcome = 0.5;
  const auto f = fit_selfplay(rows, SelfPlayShape::Full);
  for (double c : f.fit.coefficients) EXPECT_NEAR(c, 0, 1e-9);
}

TEST(FitSelfPlay, EngineOnlyRecoversStrength) {
  SelfPlayTruth truth;
  const auto rows = generate_selfplay_rows(20000, truth, 17, false);
  const auto f = fit_selfplay(rows, SelfPlayShape::EngineOnly);
  ASSERT_TRUE(f.fit.converged());
  EXPECT_EQ(f.rows_used, 20000u);
  EXPECT_NEAR(f.fit.coefficient("white_adv"), truth.white_adv, 2 * f.fit.standard_errors[0]);
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(f.fit.coefficients[k + 1], truth.strength[k], 2 * f.fit.standard_errors[k + 1]) << f.fit.terms[k + 1];
}

TEST(FitSelfPlay, ShapesSelectRows) {
  SelfPlayTruth truth;
  const auto rows = generate_selfplay_rows(6000, truth, 5);
  std::size_t equal = 0, plain = 0;
  for (const auto& r : rows) {
    equal += r.white_elo == r.black_elo;
    plain += r.removed.empty();
  }
  EXPECT_EQ(fit_selfplay(rows, SelfPlayShape::EqualEnginesPieces).rows_used, equal);
  EXPECT_EQ(fit_selfplay(rows, SelfPlayShape::EngineOnly).rows_used, plain);
  const auto full = fit_selfplay(rows, SelfPlayShape::Full);
  EXPECT_EQ(full.fit.terms.size(), 9u);
  EXPECT_NEAR(full.fit.coefficient("queen"), 460, 6 * full.fit.standard_errors[8]);

  std::vector<SelfPlayRow> same;
  for (const auto& r : rows)
    if (r.white_elo == 1600 && r.black_elo == 1600) same.push_back(r);
  try {
    fit_selfplay(same, SelfPlayShape::Full);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientVariation);
  }
}

TEST(FitSelfPlay, PerSquareMatchesFullOnOneSquarePerKind) {
  // Only white's e2 pawn, b1 knight, c1 bishop, a1 rook and d1 queen are ever
  // removed: per-square columns coincide with the material columns.
  SelfPlayTruth truth;
  auto rows = generate_selfplay_rows(5000, truth, 23, false);
  const Position base = Position::start();
  const std::vector<std::string> squares{"e2", "b1", "c1", "a1", "d1"};
  Rng rng = make_rng({99});
  for (auto& r : rows) {
    const auto k = uniform_int(rng, 0, 5);
    if (k == 5) continue;
    r.removed = {parse_removal(base, squares[static_cast<std::size_t>(k)])};
    Position p = base;
    p.set(r.removed[0].square, kNoPiece);
    r.material = delta(material_counts(p));
    r.material.passed = {};
    const double g = expected_score(15 + 300 * (r.material.pawn + r.material.knight + r.material.bishop +
                                                r.material.rook + r.material.queen));
    r.outcome = 0.5 * ((uniform01(rng) < g) + (uniform01(rng) < g));
  }
  const auto full = fit_selfplay(rows, SelfPlayShape::Full);
  const auto per = fit_selfplay(rows, SelfPlayShape::PerSquare);
  EXPECT_EQ(per.constant_squares.size(), 25u);
  const std::vector<std::pair<std::string, std::string>> pairs{
      {"pawn", "Pe2"}, {"knight", "Nb1"}, {"bishop", "Bc1"}, {"rook", "Ra1"}, {"queen", "Qd1"}};
  for (const auto& [kind, sq] : pairs)
    EXPECT_NEAR(per.fit.coefficient(sq), full.fit.coefficient(kind), 1e-6) << kind;
  EXPECT_NEAR(per.fit.coefficient("white_adv"), full.fit.coefficient("white_adv"), 1e-6);
}

TEST(FitSelfPlay, PerSquareBlackSignFlip) {
  SelfPlayTruth truth;
  const auto rows = generate_selfplay_rows(30000, truth, 41);
  const auto per = fit_selfplay(rows, SelfPlayShape::PerSquare);
  // both queens read as positive value to their own side
  EXPECT_NEAR(per.fit.coefficient("qd8"), 460, 6 * per.fit.standard_errors[*per.fit.index_of("qd8")]);
  EXPECT_NEAR(per.fit.coefficient("Qd1"), 460, 6 * per.fit.standard_errors[*per.fit.index_of("Qd1")]);
}
