#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "pieceval/pgn.hpp"
#include "test_support.hpp"

using namespace pieceval;

namespace {

const char* kThreeGames = R"([Event "Rated Blitz game"]
[White "alice"]
[Black "bob"]
[Result "1-0"]
[UTCDate "2013.01.02"]
[WhiteElo "1500"]
[BlackElo "1450"]
[WhiteRatingDiff "+9"]
[BlackRatingDiff "-9"]
[TimeControl "300+0"]
[Termination "Normal"]

1. e4 e5 2. Bc4 Nc6 3. Qh5 Nf6?? 4. Qxf7# 1-0

[Event "Rated Blitz game"]
[White "bob"]
[Black "carol"]
[Result "1/2-1/2"]
[UTCDate "2013.01.03"]
[WhiteElo "1460"]
[BlackElo "1700"]
[TimeControl "600+5"]
[Termination "Normal"]

1. d4 { [%clk 0:10:00] } d5 2. c4 (2. Nf3 Nf6) 2... e6 $1 3. Nc3 ; a line comment
Nf6 1/2-1/2

[Event "Rated Blitz game"]
[White "carol"]
[Black "alice"]
[Result "0-1"]
[UTCDate "2013.02.11"]
[WhiteElo "1710"]
[BlackElo "1490"]
[TimeControl "180+0"]
[Termination "Time forfeit"]

1.f3 e5 2.g4 Qh4# 0-1

)";

std::string game_text(const std::string& white, const std::string& moves, const std::string& result = "1-0",
                      const std::string& extra = "") {
  return "[White \"" + white + "\"]\n[Black \"x\"]\n[Result \"" + result +
         "\"]\n[UTCDate \"2014.05.06\"]\n[WhiteElo \"1500\"]\n[BlackElo \"1500\"]\n"
         "[TimeControl \"300+0\"]\n[Termination \"Normal\"]\n" +
         extra + "\n" + moves + " " + result + "\n\n";
}

GameRecord make_game(std::string white, std::string black, YearMonth m) {
  GameRecord g;
  g.white = std::move(white);
  g.black = std::move(black);
  g.white_rating = g.black_rating = 1500;
  g.time_control = {300, 0};
  g.month = m;
  g.moves.assign(40, "e4");  // placeholder; only the count matters to filters
  return g;
}

}  // namespace

TEST(StreamGames, ThreeWellFormedGames) {
  std::istringstream in(kThreeGames);
  StreamStats stats;
  auto games = read_pgn(in, Variant::Standard, &stats);
  ASSERT_EQ(games.size(), 3u);
  EXPECT_EQ(stats.parse_errors, 0u);
  EXPECT_EQ(stats.games_seen, 3u);

  EXPECT_EQ(games[0].white, "alice");
  EXPECT_EQ(games[0].result, Result::WhiteWin);
  EXPECT_EQ(games[0].total_ply(), 7);
  EXPECT_EQ(games[0].moves.back(), "Qxf7#");
  EXPECT_EQ(games[0].white_rating_diff, 9);
  EXPECT_EQ(games[0].black_rating_diff, -9);
  EXPECT_EQ(games[0].month, (YearMonth{2013, 1}));

  // comments, variations, NAGs and line comments are skipped
  EXPECT_EQ(games[1].moves, (std::vector<std::string>{"d4", "d5", "c4", "e6", "Nc3", "Nf6"}));
  EXPECT_EQ(games[1].time_control, (TimeControl{600, 5}));
  EXPECT_EQ(games[1].result, Result::Draw);
  EXPECT_FALSE(games[1].white_rating_diff.has_value());

  EXPECT_EQ(games[2].termination, Termination::TimeForfeit);
  EXPECT_EQ(games[2].moves.size(), 4u);
  EXPECT_EQ(games[2].ordinal, 2u);
}

TEST(StreamGames, CorruptMovetextSkippedAndCounted) {
  std::string text;
  text += game_text("g0", "1. e4 e5 2. Nf3 Nc6");
  text += game_text("g1", "1. d4 d5");
  text += game_text("g2", "1. e4 e5 2. Ke3 Nc6");  // illegal king move
  text += game_text("g3", "1. c4 e5");
  text += game_text("g4", "1. Nf3 d5 2. g3");
  std::istringstream in(text);
  StreamStats stats;
  auto games = read_pgn(in, Variant::Standard, &stats);
  ASSERT_EQ(games.size(), 4u);
  EXPECT_EQ(stats.parse_errors, 1u);
  EXPECT_EQ(stats.games_seen, 5u);
  EXPECT_EQ(games[2].white, "g3");
  EXPECT_EQ(games[2].ordinal, 3u);  // ordinals count every game in the archive
  ASSERT_EQ(stats.error_samples.size(), 1u);
  EXPECT_NE(stats.error_samples[0].find("Ke3"), std::string::npos);
}

TEST(StreamGames, MalformedHeadersAndResultsAreSkipped) {
  std::string text;
  text += "[White \"a\"]\n[Black \"b\"]\n[Result \"1-0\"]\n[UTCDate \"2014.05.06\"]\n[WhiteElo \"?\"]\n"
          "[BlackElo \"1500\"]\n[TimeControl \"300+0\"]\n\n1. e4 1-0\n\n";
  text += game_text("ok", "1. e4 e5");
  text += game_text("mismatch", "1. e4 e5 0-1");  // movetext terminator disagrees
  text += game_text("unfinished", "1. e4 e5", "*");
  std::istringstream in(text);
  StreamStats stats;
  auto games = read_pgn(in, Variant::Standard, &stats);
  ASSERT_EQ(games.size(), 1u);
  EXPECT_EQ(games[0].white, "ok");
  EXPECT_EQ(stats.parse_errors, 3u);
}

TEST(StreamGames, VariantMismatchCountedNotError) {
  std::string text = game_text("std", "1. e4 e5");
  text += game_text("atomic", "1. e4 e5", "1-0", "[Variant \"Atomic\"]\n");
  std::istringstream in(text);
  StreamStats stats;
  auto games = read_pgn(in, Variant::Atomic, &stats);
  ASSERT_EQ(games.size(), 1u);
  EXPECT_EQ(games[0].white, "atomic");
  EXPECT_EQ(games[0].variant, Variant::Atomic);
  EXPECT_EQ(stats.variant_mismatch, 1u);
  EXPECT_EQ(stats.parse_errors, 0u);
}

TEST(StreamGames, Chess960StartFromHeader) {
  const std::string fen = "bbrnqknr/pppppppp/8/8/8/8/PPPPPPPP/BBRNQKNR w KQkq - 0 1";
  std::string text = game_text("p", "1. e4 e5 2. Nf3", "1-0",
                               "[Variant \"Chess960\"]\n[FEN \"" + fen + "\"]\n[SetUp \"1\"]\n");
  std::istringstream in(text);
  auto games = read_pgn(in, Variant::Chess960);
  ASSERT_EQ(games.size(), 1u);
  ASSERT_TRUE(games[0].start_fen.has_value());
  const Position start = games[0].start_position();
  const Position expected = Position::chess960(512);
  for (Square s = 0; s < 64; ++s) EXPECT_EQ(start.at(s), expected.at(s)) << square_name(s);
  EXPECT_EQ(start.castling(), expected.castling());
}

TEST(StreamGames, HordeGameReplays) {
  std::string text = game_text("h", "1. e5 d6 2. exd6 cxd6", "0-1", "[Variant \"Horde\"]\n");
  std::istringstream in(text);
  auto games = read_pgn(in, Variant::Horde);
  ASSERT_EQ(games.size(), 1u);
  EXPECT_EQ(games[0].start_position().count(Color::White, PieceKind::Pawn), 36);
}

TEST(StreamGames, WriterRoundTripsRandomGames) {
  std::mt19937_64 rng(7);
  std::vector<GameRecord> originals;
  for (int i = 0; i < 25; ++i) {
    const Variant v = static_cast<Variant>(i % 5);
    Position start = v == Variant::Chess960 ? Position::chess960(static_cast<int>(rng() % 960)) : Position::start(v);
    auto rg = test_support::random_game(start, 60, rng);
    GameRecord g;
    g.ordinal = static_cast<std::uint64_t>(i);
    g.variant = v;
    g.white = "w" + std::to_string(i);
    g.black = "b" + std::to_string(i);
    g.white_rating = 1200 + i;
    g.black_rating = 1300 - i;
    g.white_rating_diff = i - 12;
    g.time_control = {180 + 60 * (i % 3), i % 2};
    g.termination = i % 4 == 0 ? Termination::TimeForfeit : Termination::Normal;
    g.result = static_cast<Result>(i % 3);
    if (v == Variant::Chess960) g.start_fen = start.fen();
    g.moves = rg.san;
    g.month = {2015, 1 + i % 12};
    originals.push_back(g);
  }
  for (Variant v : {Variant::Standard, Variant::Chess960, Variant::Atomic, Variant::Antichess, Variant::Horde}) {
    std::ostringstream out;
    for (const auto& g : originals) write_pgn(out, g);
    std::istringstream in(out.str());
    StreamStats stats;
    auto back = read_pgn(in, v, &stats);
    EXPECT_EQ(stats.parse_errors, 0u) << (stats.error_samples.empty() ? "" : stats.error_samples[0]);
    std::vector<GameRecord> expected;
    for (const auto& g : originals)
      if (g.variant == v) expected.push_back(g);
    EXPECT_EQ(back, expected) << to_string(v);
  }
}

TEST(Records, NdjsonRoundTrip) {
  std::istringstream in(kThreeGames);
  auto games = read_pgn(in, Variant::Standard);
  games[1].start_fen = std::string(kStandardStartFen);
  std::ostringstream out;
  write_records(out, games);
  std::istringstream back(out.str());
  EXPECT_EQ(read_records(back), games);
  // one line per record, keys in schema order
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.rfind("{\"ordinal\":0,\"variant\":\"standard\"", 0), 0u);
}

TEST(Records, BadJsonIsParseError) {
  std::istringstream in("{\"ordinal\": 1}\n");
  try {
    read_records(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(History, TenGamesInEachOfSixMonthsIsEligible) {
  PlayerHistoryIndex idx;
  for (int m = 1; m <= 6; ++m) idx.add("p", {2016, m}, 10);
  EXPECT_EQ(idx.window_count("p", {2016, 7}, 6), 60u);
  EXPECT_EQ(idx.total("p"), 60u);
  FilterPolicy pol;
  GameRecord g = make_game("p", "p", {2016, 7});
  EXPECT_TRUE(passes(FilterPredicate::History, g, idx, pol));
}

TEST(History, FortyNineIsIneligible) {
  PlayerHistoryIndex idx;
  idx.add("p", {2016, 2}, 40);
  idx.add("p", {2016, 6}, 9);
  idx.add("p", {2016, 7}, 100);  // the game's own month does not count
  idx.add("p", {2015, 12}, 100);  // seven months back does not count
  EXPECT_EQ(idx.window_count("p", {2016, 7}, 6), 49u);
  GameRecord g = make_game("p", "p", {2016, 7});
  EXPECT_FALSE(passes(FilterPredicate::History, g, idx, FilterPolicy{}));
}

TEST(History, WindowCrossesYearBoundary) {
  PlayerHistoryIndex idx;
  idx.add("p", {2015, 9}, 25);
  idx.add("p", {2015, 8}, 25);
  idx.add("p", {2015, 12}, 25);
  EXPECT_EQ(idx.window_count("p", {2016, 2}, 6), 75u);  // Aug..Jan
  EXPECT_EQ(idx.window_count("p", {2016, 3}, 6), 50u);  // Sep..Feb
  EXPECT_EQ(idx.window_count("p", {2016, 4}, 6), 25u);
}

TEST(History, MatchesBruteForceRecount) {
  std::mt19937_64 rng(11);
  std::vector<GameRecord> games;
  for (int i = 0; i < 1000; ++i) {
    const int w = static_cast<int>(rng() % 20);
    int b = static_cast<int>(rng() % 19);
    if (b >= w) ++b;
    games.push_back(make_game("p" + std::to_string(w), "p" + std::to_string(b), {2017 + static_cast<int>(rng() % 2),
                                                                                  1 + static_cast<int>(rng() % 12)}));
  }
  auto idx = build_history_index(games);
  EXPECT_EQ(idx.players(), 20u);
  for (int p = 0; p < 20; ++p) {
    const std::string name = "p" + std::to_string(p);
    std::uint64_t total = 0;
    for (int y = 2017; y <= 2018; ++y) {
      for (int m = 1; m <= 12; ++m) {
        std::uint32_t brute = 0;
        for (const auto& g : games)
          if (g.month == YearMonth{y, m} && (g.white == name || g.black == name)) ++brute;
        EXPECT_EQ(idx.count(name, {y, m}), brute);
        total += brute;
      }
    }
    EXPECT_EQ(idx.total(name), total);
  }
  // brute-force window for every game
  for (const auto& g : games) {
    std::uint64_t brute = 0;
    for (const auto& h : games) {
      const int d = g.month.index() - h.month.index();
      if (d >= 1 && d <= 6 && (h.white == g.white || h.black == g.white)) ++brute;
    }
    EXPECT_EQ(idx.window_count(g.white, g.month, 6), brute);
  }
}

TEST(History, MergeEqualsSinglePass) {
  std::vector<GameRecord> a, b, all;
  for (int i = 0; i < 60; ++i) {
    auto g = make_game("p" + std::to_string(i % 7), "q" + std::to_string(i % 5), {2019, 1 + i % 12});
    (i % 2 ? a : b).push_back(g);
    all.push_back(g);
  }
  auto merged = build_history_index(a);
  merged.merge(build_history_index(b));
  EXPECT_EQ(merged, build_history_index(all));
}

TEST(History, BinaryRoundTrip) {
  PlayerHistoryIndex idx;
  idx.add("alice", {2013, 1}, 3);
  idx.add("alice", {2013, 4}, 1);
  idx.add("bob with spaces", {2020, 12}, 70000);
  std::stringstream buf;
  idx.save(buf);
  EXPECT_EQ(PlayerHistoryIndex::load(buf), idx);

  std::stringstream junk("not an index");
  EXPECT_THROW(PlayerHistoryIndex::load(junk), Error);
}

class FilterTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int m = 1; m <= 6; ++m) {
      idx.add("a", {2016, m}, 10);
      idx.add("b", {2016, m}, 10);
    }
  }
  GameRecord good() const { return make_game("a", "b", {2016, 7}); }
  PlayerHistoryIndex idx;
  FilterPolicy pol;
};

TEST_F(FilterTest, ClockBoundaryIsInclusive) {
  GameRecord g = good();
  g.time_control = {300, 0};
  EXPECT_FALSE(first_failure(g, idx, pol).has_value());
  g.time_control = {299, 30};
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::Clock);
  g.time_control = {};
  EXPECT_FALSE(first_failure(g, idx, pol).has_value());
}

TEST_F(FilterTest, TimeForfeitRejected) {
  GameRecord g = good();
  g.termination = Termination::TimeForfeit;
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::Termination);
}

TEST_F(FilterTest, RatingAndPlyBounds) {
  GameRecord g = good();
  g.black_rating = 1199;
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::Rating);
  g = good();
  g.moves.resize(9);
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::PlyRange);
  g.moves.resize(10);
  EXPECT_FALSE(first_failure(g, idx, pol).has_value());
  g.moves.resize(150);
  EXPECT_FALSE(first_failure(g, idx, pol).has_value());
  g.moves.resize(151);
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::PlyRange);
}

TEST_F(FilterTest, FirstFailingPredicateAttributed) {
  GameRecord g = good();
  g.termination = Termination::Abandoned;
  g.time_control = {60, 0};
  g.white_rating = 800;
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::Termination);
  g.termination = Termination::Normal;
  EXPECT_EQ(first_failure(g, idx, pol), FilterPredicate::Clock);
}

TEST_F(FilterTest, ReportSumsIdempotentOrderPreserving) {
  std::mt19937_64 rng(5);
  std::vector<GameRecord> games;
  for (int i = 0; i < 500; ++i) {
    GameRecord g = good();
    g.ordinal = static_cast<std::uint64_t>(i);
    if (rng() % 5 == 0) g.termination = Termination::TimeForfeit;
    if (rng() % 5 == 0) g.time_control = {static_cast<int>(rng() % 600), 0};
    if (rng() % 5 == 0) g.white_rating = 1000 + static_cast<int>(rng() % 400);
    if (rng() % 7 == 0) g.black = "newcomer";
    if (rng() % 5 == 0) g.moves.resize(rng() % 200);
    games.push_back(g);
  }
  FilterReport rep;
  auto out = filter_games(games, idx, pol, rep);
  EXPECT_EQ(rep.input, 500u);
  EXPECT_EQ(rep.output, out.size());
  EXPECT_EQ(rep.input, rep.output + rep.total_rejected());
  for (auto p : kFilterOrder) EXPECT_GT(rep.rejected_by(p), 0u) << to_string(p);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LT(out[i - 1].ordinal, out[i].ordinal);

  FilterReport again;
  EXPECT_EQ(filter_games(out, idx, pol, again), out);
  EXPECT_EQ(again.total_rejected(), 0u);

  auto j = rep.to_json(pol);
  EXPECT_NE(j["history_window"].get<std::string>().find("excluded"), std::string::npos);
}

TEST(FilterPolicyJson, RoundTripAndValidation) {
  FilterPolicy p;
  p.min_rating = 1500;
  p.terminations = {Termination::Normal, Termination::TimeForfeit};
  auto back = FilterPolicy::from_json(nlohmann::json::parse(p.to_json().dump()));
  EXPECT_EQ(back.min_rating, 1500);
  EXPECT_EQ(back.terminations.size(), 2u);
  EXPECT_THROW(FilterPolicy::from_json(nlohmann::json::parse(R"({"ply_range":[20,10]})")), Error);
  EXPECT_THROW(FilterPolicy::from_json(nlohmann::json::parse(R"({"bogus":1})")), Error);
}

TEST(Imbalance, QueenImbalanceOfThreeRejected) {
  FilterPolicy pol;
  MaterialDelta d;
  d.queen = 3;
  EXPECT_FALSE(imbalance_ok(d, pol));
  d.queen = -2;
  EXPECT_TRUE(imbalance_ok(d, pol));
  d.knight = 4;
  EXPECT_FALSE(imbalance_ok(d, pol));
  d.knight = -3;
  d.rook = 3;
  d.bishop = 3;
  EXPECT_TRUE(imbalance_ok(d, pol));
}
