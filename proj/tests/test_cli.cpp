#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pieceval/report.hpp"

namespace fs = std::filesystem;
using namespace pieceval;

namespace {

const std::string kCli = PIECEVAL_CLI;
const std::string kFixture = std::string(PIECEVAL_TEST_DATA) + "/fixture_2000.pgn";

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>/dev/null >/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("pieceval_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string at(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

// ingest -> snapshot -> simex -> report into `out`.
void pipeline(const fs::path& out, const std::string& threads) {
  const std::string d = out.string();
  ASSERT_EQ(run(threads + " ingest -i " + kFixture + " -o " + d + "/games.ndjson --report " + d + "/ingest.json"), 0);
  ASSERT_EQ(run(threads + " snapshot -i " + d + "/games.ndjson --seed 11 --depth 1 -o " + d + "/features.tsv --report " +
                d + "/snapshot.json"),
            0);
  ASSERT_EQ(run(threads + " simex -i " + d + "/features.tsv --sigma0 58 --replicates 7 --seed 11 -o " + d +
                "/simex.tsv --curve " + d + "/curve.tsv"),
            0);
  ASSERT_EQ(run(threads + " report --fit all=" + d + "/simex.tsv --out-dir " + d + "/report"), 0);
}

}  // namespace

TEST_F(CliTest, FixturePipelineIsFiniteAndByteIdentical) {
  pipeline(dir / "a", "");
  pipeline(dir / "b", "--threads 1");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 11u);

  std::ifstream in(dir / "a" / "simex.tsv");
  const auto fit = read_coefficients(in);
  ASSERT_EQ(fit.terms.size(), 8u);
  for (double v : fit.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(fit.rows, 300u);

  const std::string feats = slurp(dir / "a" / "features.tsv");
  EXPECT_NE(feats.find("# seed: 11\n"), std::string::npos);
  EXPECT_NE(feats.find("# config_hash: "), std::string::npos);
  const std::string summary = slurp(dir / "a" / "report" / "summary.json");
  EXPECT_NE(summary.find("\"config_hash\""), std::string::npos);
  EXPECT_NE(slurp(dir / "a" / "report" / "historical.tsv").find("Fine\t1942\t3\t3\t5\t9"), std::string::npos);
}

TEST_F(CliTest, IngestReportsFilterCounts) {
  ASSERT_EQ(run("ingest -i " + kFixture + " -o " + at("g.ndjson") + " --report " + at("r.json") + " --history-out " +
                at("h.bin")),
            0);
  const auto r = nlohmann::json::parse(slurp(at("r.json")));
  EXPECT_EQ(r["stream"]["games_seen"], 2000);
  EXPECT_EQ(r["stream"]["parse_errors"], 4);
  const auto& f = r["filter"];
  std::uint64_t rejected = 0;
  for (const auto& [k, v] : f["rejected"].items()) rejected += v.get<std::uint64_t>();
  EXPECT_EQ(f["input"].get<std::uint64_t>(), rejected + f["output"].get<std::uint64_t>());
  EXPECT_GT(f["output"].get<int>(), 0);
  EXPECT_GT(f["rejected"]["history"].get<int>(), 0);
  EXPECT_TRUE(fs::exists(at("h.bin")));

  // A merged copy of the same index doubles every count, so more games pass.
  ASSERT_EQ(run("ingest -i " + kFixture + " -o " + at("g2.ndjson") + " --report " + at("r2.json") + " --history " +
                at("h.bin")),
            0);
  const auto r2 = nlohmann::json::parse(slurp(at("r2.json")));
  EXPECT_GT(r2["filter"]["output"].get<int>(), f["output"].get<int>());

  ASSERT_EQ(run("ingest --no-filter -i " + kFixture + " -o " + at("all.ndjson")), 0);
  ASSERT_EQ(run("implied-k -i " + at("all.ndjson") + " -o " + at("k.tsv")), 0);
  const std::string k = slurp(at("k.tsv"));
  const auto pos = k.find("# median: ");
  ASSERT_NE(pos, std::string::npos);
  // The fixture's rating changes use k = 20 on rounded deltas.
  EXPECT_NEAR(std::stod(k.substr(pos + 10)), 20.0, 1.5);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("fit -i " + at("missing.tsv")), 1);
  EXPECT_EQ(run("simex -i " + kFixture + " --sigma0 abc"), 2);  // not a feature table
  {
    std::ofstream(at("bad.tsv")) << "game\tsnapshot_ply\n1\t2\n";
  }
  EXPECT_EQ(run("fit -i " + at("bad.tsv")), 2);
  EXPECT_EQ(run("elo-noise --k 200"), 3);
  EXPECT_EQ(run("elo-noise --k 22.83 -o " + at("n.tsv")), 0);
  EXPECT_NE(slurp(at("n.tsv")).find("\nse\t64.0"), std::string::npos);
  EXPECT_EQ(run("snapshot -i " + kFixture + " --scheme sideways -o " + at("x.tsv")), 1);
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  {
    std::ofstream(at("run.toml")) << "threads = 1\n[elo-noise]\nk = 22.83\np = 0.18\n";
    std::ofstream(at("bad.toml")) << "[elo-noise]\nk = 300\n";
  }
  ASSERT_EQ(run("--config " + at("run.toml") + " elo-noise -o " + at("n.tsv")), 0);
  EXPECT_NE(slurp(at("n.tsv")).find("\nse\t57.98"), std::string::npos);
  EXPECT_EQ(run("--config " + at("bad.toml") + " elo-noise"), 3);
}

TEST_F(CliTest, SyntheticCommands) {
  ASSERT_EQ(run("mc calibration --games 20000 --bin-width 100 --max-gap 400 --seed 3 -o " + at("u.tsv")), 0);
  const std::string u = slurp(at("u.tsv"));
  EXPECT_NE(u.find("lo\thi\tgames"), std::string::npos);
  ASSERT_EQ(run("mc knight --games 20000 --replicates 3 --seed 2 -o " + at("k.tsv")), 0);
  const std::string k = slurp(at("k.tsv"));
  EXPECT_NE(k.find("# calibrated: rating="), std::string::npos);
  EXPECT_NE(k.find("ClampWarning"), std::string::npos);
}

TEST_F(CliTest, SelfplayRunAndFit) {
  {
    std::ofstream(at("spec.json")) << R"({"matches": [
      {"variant": "standard", "remove": ["b1"], "white_elo": 1600, "black_elo": 2000, "games": 3, "max_plies": 40},
      {"variant": "standard", "remove": ["g8"], "white_elo": 2400, "black_elo": 1600, "games": 2, "max_plies": 40}]})";
  }
  ASSERT_EQ(run("selfplay run --spec " + at("spec.json") + " --ledger " + at("ledger.tsv")), 0);
  const auto first = slurp(at("ledger.tsv"));
  std::size_t lines = std::count(first.begin(), first.end(), '\n');
  EXPECT_EQ(lines, 6u);  // header plus five games
  ASSERT_EQ(run("selfplay run --spec " + at("spec.json") + " --ledger " + at("ledger.tsv")), 0);
  EXPECT_EQ(slurp(at("ledger.tsv")), first);  // resumed, nothing replayed

  ASSERT_EQ(run("selfplay run --spec " + at("spec.json") + " --ledger " + at("uci.tsv") + " --engine '" +
                std::string(PIECEVAL_MOCK_ENGINE) + "'"),
            0);
  EXPECT_EQ(slurp(at("uci.tsv")), first);

  // Only knights are ever removed, so the full shape has constant piece terms.
  EXPECT_EQ(run("selfplay fit --ledger " + at("ledger.tsv") + " --shape full -o " + at("fit.tsv")), 3);
  EXPECT_EQ(run("selfplay fit --ledger " + at("ledger.tsv") + " --shape sideways"), 1);
}

TEST_F(CliTest, ReportWithRanges) {
  ArtifactHeader h{"test", "0", 0, {}};
  auto write = [&](const std::string& name, std::vector<double> v, double ply) {
    CoefficientSet c{"", {"pawn", "knight", "bishop", "rook", "queen"}, std::move(v), ply, 100};
    std::ofstream out(at(name));
    write_coefficients(out, h, c);
  };
  write("late.tsv", {91.9, 300, 320, 480, 900}, 94.1);
  write("early.tsv", {22.9, 97, 112, 174, 379}, 14.3);
  ASSERT_EQ(run("report --fit late=" + at("late.tsv") + " --fit early=" + at("early.tsv") + " --out-dir " + at("rep")),
            0);
  const std::string eq = slurp(at("rep/equalizers.tsv"));
  EXPECT_NE(eq.find("queen\t379\t375"), std::string::npos);  // taken from the earliest range
  const std::string curves = slurp(at("rep/ply_curves.tsv"));
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 5 + 1 + 10);

  write("tiny.tsv", {0.5, 100, 110, 160, 300}, 20);
  ASSERT_EQ(run("report --fit " + at("tiny.tsv") + " --out-dir " + at("rep2")), 0);
  EXPECT_NE(slurp(at("rep2/relative.tsv")).find("knight\t100\tNA"), std::string::npos);
}
