// pieceval command line: ingest -> snapshot -> fit/simex -> report, plus the
// synthetic experiments and the self-play harness.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pieceval.hpp"

using namespace pieceval;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

unsigned g_threads = 0;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  return in;
}

// Written to a temporary name and renamed, so a failed run leaves no partial file.
void write_out(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
    out << text;
    if (!out.flush()) throw Error(ErrorKind::IoError, "write failed for '" + path + "'");
  }
  fs::rename(tmp, p);
}

// Streams a large body to disk; the header, which needs the final counts,
// is prepended on commit.
class BodyFile {
 public:
  explicit BodyFile(std::string path) : path_(std::move(path)), body_(path_ + ".body.tmp") {
    if (path_ == "-") throw Error(ErrorKind::Usage, "this command needs an output file");
    const fs::path p(path_);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    out_.open(body_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorKind::IoError, "cannot write '" + body_ + "'");
  }
  ~BodyFile() {
    std::error_code ec;
    fs::remove(body_, ec);
  }
  std::ostream& stream() { return out_; }

  void commit(const std::string& header) {
    out_.close();
    const std::string tmp = path_ + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      std::ifstream in(body_, std::ios::binary);
      out << header;
      if (in.peek() != std::ifstream::traits_type::eof()) out << in.rdbuf();
      if (!out.flush()) throw Error(ErrorKind::IoError, "write failed for '" + path_ + "'");
    }
    fs::rename(tmp, path_);
  }

 private:
  std::string path_, body_;
  std::ofstream out_;
};

std::string file_digest(const std::string& path) {
  std::ifstream in = open_in(path);
  std::uint64_t h = kFnvOffset;
  std::vector<char> buf(1 << 16);
  while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0)
    h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  return hex64(h);
}

ArtifactHeader make_header(const std::string& command, json cfg, std::uint64_t seed) {
  cfg["command"] = command;
  cfg["seed"] = seed;
  return {"pieceval " + command, config_hash(cfg), seed, {}};
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream s(text);
  for (std::string tok; std::getline(s, tok, ',');) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Usage, "bad number '" + tok + "' in list");
    }
  }
  return out;
}

// "default", "default:N" or a comma separated list of sigma values.
std::vector<double> parse_grid(const std::string& text, double sigma0) {
  if (text == "default") return default_sigma_grid(sigma0);
  if (text.rfind("default:", 0) == 0) return default_sigma_grid(sigma0, std::stoi(text.substr(8)));
  return parse_list(text);
}

// "lo:hi:step" or a comma separated list.
std::vector<double> parse_candidates(const std::string& text) {
  if (std::count(text.begin(), text.end(), ':') == 2) {
    const auto v = parse_list(std::string(text).replace(text.find(':'), 1, ",").replace(text.rfind(':'), 1, ","));
    if (v.size() != 3 || v[2] <= 0 || v[1] < v[0]) throw Error(ErrorKind::Usage, "candidate range needs lo:hi:step");
    std::vector<double> out;
    for (int i = 0; v[0] + i * v[2] <= v[1] + 1e-9; ++i) out.push_back(v[0] + i * v[2]);
    return out;
  }
  return parse_list(text);
}

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

FilterPolicy load_policy(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in = open_in(path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Usage, "policy file '" + path + "' is not JSON");
  return FilterPolicy::from_json(j);
}

std::vector<FeatureRow> load_features(const std::string& path) {
  std::ifstream in = open_in(path);
  auto rows = read_feature_table(in);
  if (rows.empty()) throw Error(ErrorKind::ParseError, "feature table '" + path + "' has no rows");
  return rows;
}

std::vector<GameRecord> load_records(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_records(in);
}

double mean_snapshot_ply(const std::vector<FeatureRow>& rows) {
  double s = 0;
  for (const auto& r : rows) s += r.snapshot_ply;
  return rows.empty() ? 0 : s / double(rows.size());
}

std::string curve_table(const SimexCurve& c) {
  std::ostringstream out;
  out << "sigma_z\tsigma_total\tterm\tvalue\tsucceeded\tfailed\n";
  for (const auto& p : c.points)
    for (std::size_t j = 0; j < c.terms.size(); ++j)
      out << format_double(p.sigma_z) << '\t' << format_double(p.sigma_total) << '\t' << c.terms[j] << '\t'
          << format_double(p.median.coefficients[j]) << '\t' << p.succeeded << '\t' << p.failed << '\n';
  for (double d : c.dropped) out << "# dropped: " << format_double(d) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

struct IngestOpts {
  std::string input, variant = "standard", policy, out, report, history_out;
  std::vector<std::string> history;
  bool no_filter = false;
};

int run_ingest(const IngestOpts& o) {
  const Variant variant = parse_variant(o.variant);
  const FilterPolicy policy = load_policy(o.policy);
  json cfg;
  cfg["variant"] = o.variant;
  cfg["policy"] = policy.to_json();
  cfg["no_filter"] = o.no_filter;
  cfg["input"] = file_digest(o.input);
  for (const auto& h : o.history) cfg["history"].push_back(file_digest(h));
  ArtifactHeader hdr = make_header("ingest", cfg, 0);

  // Pass 1: activity index over every parsed game.
  PlayerHistoryIndex idx;
  {
    std::ifstream in = open_in(o.input);
    stream_games(in, variant, [&](GameRecord&& g) { idx.add(g); }, false);
  }
  for (const auto& h : o.history) idx.merge(PlayerHistoryIndex::load(fs::path(h)));
  if (!o.history_out.empty()) idx.save(fs::path(o.history_out));

  // Pass 2: validated replay, filter, write.
  FilterReport rep;
  BodyFile file(o.out);
  std::ostream& body = file.stream();
  std::ifstream in = open_in(o.input);
  const StreamStats stats = stream_games(in, variant, [&](GameRecord&& g) {
    ++rep.input;
    if (!o.no_filter)
      if (auto f = first_failure(g, idx, policy)) {
        ++rep.rejected[static_cast<std::size_t>(*f)];
        return;
      }
    ++rep.output;
    body << to_json(g).dump() << '\n';
  });
  hdr.add("games_seen", stats.games_seen);
  hdr.add("records", stats.records);
  hdr.add("games_written", rep.output);

  json head;
  head["artifact"] = header_json(hdr);
  file.commit(head.dump() + "\n");

  json r;
  r["artifact"] = header_json(hdr);
  r["stream"] = {{"games_seen", stats.games_seen},
                 {"records", stats.records},
                 {"parse_errors", stats.parse_errors},
                 {"variant_mismatch", stats.variant_mismatch},
                 {"error_samples", stats.error_samples}};
  r["history"] = {{"players", idx.players()}};
  r["filter"] = rep.to_json(policy);
  if (!o.report.empty()) write_out(o.report, r.dump(2) + "\n");
  std::cerr << "ingest: " << stats.records << " records, " << rep.output << " kept\n";
  return 0;
}

struct SnapshotOpts {
  std::string input, scheme = "uniform", policy, out, report;
  int depth = 0;
  std::uint64_t seed = 0;
};

int run_snapshot(const SnapshotOpts& o) {
  const auto scheme = SnapshotScheme::parse(o.scheme, o.depth, o.seed);
  const FilterPolicy policy = load_policy(o.policy);
  json cfg;
  cfg["scheme"] = scheme.name();
  cfg["depth"] = o.depth;
  cfg["policy"] = policy.to_json();
  cfg["input"] = file_digest(o.input);
  ArtifactHeader hdr = make_header("snapshot", cfg, o.seed);

  SnapshotReport rep;
  BodyFile file(o.out);
  std::ostream& body = file.stream();
  std::ifstream in = open_in(o.input);
  std::vector<GameRecord> chunk;
  bool first = true;
  auto flush = [&] {
    const auto rows = snapshot_games(chunk, scheme, policy, rep, g_threads);
    write_feature_table(body, rows, first);
    first = false;
    chunk.clear();
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::ParseError, "record line " + std::to_string(lineno) + " is not JSON");
    if (j.contains("artifact")) continue;
    chunk.push_back(game_from_json(j));
    if (chunk.size() == 50000) flush();
  }
  flush();
  hdr.add("games", rep.games);
  hdr.add("rows", rep.rows);
  std::ostringstream out;
  write_header(out, hdr);
  file.commit(out.str());
  if (!o.report.empty()) {
    json r;
    r["artifact"] = header_json(hdr);
    r["snapshot"] = rep.to_json();
    write_out(o.report, r.dump(2) + "\n");
  }
  std::cerr << "snapshot: " << rep.rows << " rows from " << rep.games << " games\n";
  return 0;
}

struct FitOpts {
  std::string input, terms = "compact", out = "-", label;
};

int run_fit(const FitOpts& o) {
  const auto terms = parse_terms(o.terms);
  const auto rows = load_features(o.input);
  json cfg;
  std::string tnames;
  for (auto t : terms) tnames += std::string(tnames.empty() ? "" : ",") + std::string(to_string(t));
  cfg["terms"] = tnames;
  cfg["input"] = file_digest(o.input);
  ArtifactHeader hdr = make_header("fit", cfg, 0);
  const RegressionFit fit = fit_logistic(rows, terms);
  hdr.add("status", std::string(to_string(fit.status)));
  hdr.add("iterations", std::to_string(fit.iterations));
  hdr.add("log_likelihood", format_double(fit.log_likelihood));
  hdr.add("games", fit.n_games);
  auto c = coefficient_set(fit, o.label);
  c.mean_ply = mean_snapshot_ply(rows);
  std::ostringstream out;
  write_coefficients(out, hdr, c, fit.standard_errors);
  write_out(o.out, out.str());
  require_converged(fit);
  return 0;
}

struct SimexOpts {
  std::string input, terms = "compact", sigma0 = "58", grid = "default", candidates = "10:100:5", out = "-", curve,
                     sigma0_out, label;
  int replicates = 21;
  std::uint64_t seed = 0;
};

int run_simex(const SimexOpts& o) {
  const auto terms = parse_terms(o.terms);
  const auto rows = load_features(o.input);
  json cfg;
  std::string tnames;
  for (auto t : terms) tnames += std::string(tnames.empty() ? "" : ",") + std::string(to_string(t));
  cfg["terms"] = tnames;
  cfg["sigma0"] = o.sigma0;
  cfg["grid"] = o.grid;
  cfg["replicates"] = o.replicates;
  if (o.sigma0 == "auto") cfg["candidates"] = o.candidates;
  cfg["input"] = file_digest(o.input);
  ArtifactHeader hdr = make_header("simex", cfg, o.seed);

  double sigma0 = 0;
  if (o.sigma0 == "auto") {
    Sigma0Config sc;
    sc.candidates = parse_candidates(o.candidates);
    sc.seed = derive_seed({o.seed, 0x5160});
    sc.threads = g_threads;
    const auto est = estimate_sigma0(rows, sc);
    sigma0 = est.sigma0;
    if (!o.sigma0_out.empty()) {
      std::ostringstream s;
      write_header(s, hdr);
      s << "# sigma0: " << format_double(est.sigma0) << '\n' << "candidate\tobjective\n";
      for (std::size_t i = 0; i < est.candidates.size(); ++i)
        s << format_double(est.candidates[i]) << '\t' << format_double(est.objective[i]) << '\n';
      write_out(o.sigma0_out, s.str());
    }
    std::cerr << "simex: estimated sigma0 = " << format_double(sigma0) << '\n';
  } else {
    sigma0 = parse_list(o.sigma0).at(0);
  }

  SimexConfig sc;
  sc.sigma0 = sigma0;
  sc.sigma_z = parse_grid(o.grid, sigma0);
  sc.replicates = o.replicates;
  sc.seed = o.seed;
  sc.threads = g_threads;
  const SimexCurve curve = simex_sweep(rows, terms, sc);
  hdr.add("sigma0", format_double(sigma0));
  hdr.add("grid", list_text(sc.sigma_z));
  hdr.add("games", curve.n_games);
  if (!o.curve.empty()) {
    std::ostringstream s;
    write_header(s, hdr);
    s << curve_table(curve);
    write_out(o.curve, s.str());
  }
  const CalibratedFit cal = calibrate(curve);
  hdr.add("sigma_used", list_text(cal.sigma_used));
  hdr.add("condition_number", format_double(cal.condition_number));
  auto c = coefficient_set(cal, o.label, curve.n_games);
  c.mean_ply = mean_snapshot_ply(rows);
  std::ostringstream out;
  write_coefficients(out, hdr, c);
  write_out(o.out, out.str());
  return 0;
}

struct BootstrapOpts {
  std::string input, terms = "compact", grid = "default", out = "-", replicates_out;
  double sigma0 = 58, level = 0.95;
  int B = 100, simex_replicates = 21;
  std::uint64_t seed = 0;
};

int run_bootstrap(const BootstrapOpts& o) {
  const auto rows = load_features(o.input);
  BootstrapConfig bc;
  bc.replicates = o.B;
  bc.terms = parse_terms(o.terms);
  bc.simex.sigma0 = o.sigma0;
  bc.simex.sigma_z = parse_grid(o.grid, o.sigma0);
  bc.simex.replicates = o.simex_replicates;
  bc.level = o.level;
  bc.seed = o.seed;
  bc.threads = g_threads;
  json cfg;
  cfg["terms"] = o.terms;
  cfg["B"] = o.B;
  cfg["sigma0"] = o.sigma0;
  cfg["grid"] = list_text(bc.simex.sigma_z);
  cfg["simex_replicates"] = o.simex_replicates;
  cfg["level"] = o.level;
  cfg["input"] = file_digest(o.input);
  ArtifactHeader hdr = make_header("bootstrap", cfg, o.seed);
  const auto res = bootstrap(rows, bc);
  hdr.add("games", rows.size());
  hdr.add("succeeded", std::to_string(res.succeeded));
  hdr.add("failed", std::to_string(res.failed));
  std::ostringstream out;
  write_header(out, hdr);
  out << "term\tlower\tupper\n";
  for (std::size_t j = 0; j < res.terms.size(); ++j)
    out << res.terms[j] << '\t' << format_double(res.lower[j]) << '\t' << format_double(res.upper[j]) << '\n';
  for (const auto& f : res.failures) out << "# failure: " << f << '\n';
  write_out(o.out, out.str());
  if (!o.replicates_out.empty()) {
    std::ostringstream s;
    write_header(s, hdr);
    s << "replicate";
    for (const auto& t : res.terms) s << '\t' << t;
    s << '\n';
    for (std::size_t b = 0; b < res.replicates.size(); ++b) {
      s << res.replicate_ids[b];
      for (double v : res.replicates[b]) s << '\t' << format_double(v);
      s << '\n';
    }
    write_out(o.replicates_out, s.str());
  }
  if (res.succeeded == 0) throw Error(ErrorKind::NotConverged, "every bootstrap replicate failed");
  return 0;
}

struct KnightOpts {
  std::size_t games = 500000;
  double sigma0 = 58, observed_sd = 175;
  std::string grid = "default", out = "-";
  int replicates = 21;
  std::uint64_t seed = 1;
};

int run_mc_knight(const KnightOpts& o) {
  KnightExperimentConfig kc;
  kc.n_games = o.games;
  kc.sigma0 = o.sigma0;
  kc.sigma_z = parse_grid(o.grid, o.sigma0);
  kc.replicates = o.replicates;
  kc.observed_sd = o.observed_sd;
  kc.seed = o.seed;
  kc.threads = g_threads;
  json cfg;
  cfg["games"] = o.games;
  cfg["sigma0"] = o.sigma0;
  cfg["observed_sd"] = o.observed_sd;
  cfg["grid"] = list_text(kc.sigma_z);
  cfg["replicates"] = o.replicates;
  ArtifactHeader hdr = make_header("mc knight", cfg, o.seed);
  const auto res = run_knight_experiment(kc);
  hdr.add("games", o.games);
  hdr.add("clamp_fraction", format_double(res.clamp_fraction));
  std::ostringstream out;
  write_header(out, hdr);
  if (res.clamp_warning)
    out << "# warning: ClampWarning, " << res.clamped << " binomial probabilities clamped to [0, 1]\n";
  out << "# truth_fit:";
  for (std::size_t j = 0; j < res.truth_fit.terms.size(); ++j)
    out << ' ' << res.truth_fit.terms[j] << '=' << format_double(res.truth_fit.coefficients[j]);
  out << '\n';
  if (res.calibrated) {
    out << "# calibrated:";
    for (std::size_t j = 0; j < res.calibrated->terms.size(); ++j)
      out << ' ' << res.calibrated->terms[j] << '=' << format_double(res.calibrated->coefficients[j]);
    out << '\n';
  } else {
    out << "# calibration_error: " << res.calibration_error << '\n';
  }
  out << curve_table(res.curve);
  write_out(o.out, out.str());
  if (res.clamp_warning) std::cerr << "warning: ClampWarning (" << format_double(100 * res.clamp_fraction) << "% clamped)\n";
  if (!res.calibrated) throw Error(ErrorKind::IllConditioned, res.calibration_error);
  return 0;
}

struct CalibrationOpts {
  std::string input, out = "-";
  std::size_t games = 100000;
  double ability_sd = 150, noise_sd = 0, draw = 0, white_adv = 0, bin_width = 25, max_gap = 800;
  std::uint64_t seed = 1;
};

int run_mc_calibration(const CalibrationOpts& o) {
  json cfg;
  std::vector<GameRecord> games;
  if (!o.input.empty()) {
    cfg["input"] = file_digest(o.input);
    games = load_records(o.input);
  } else {
    SyntheticArchiveConfig sc;
    sc.n_games = o.games;
    sc.ability_sd = o.ability_sd;
    sc.noise_sd = o.noise_sd;
    sc.draw_prob = o.draw;
    sc.white_advantage = o.white_adv;
    sc.seed = o.seed;
    cfg["games"] = o.games;
    cfg["ability_sd"] = o.ability_sd;
    cfg["noise_sd"] = o.noise_sd;
    cfg["draw"] = o.draw;
    cfg["white_adv"] = o.white_adv;
    games = generate_elo_games(sc);
  }
  cfg["bin_width"] = o.bin_width;
  cfg["max_gap"] = o.max_gap;
  ArtifactHeader hdr = make_header("mc calibration", cfg, o.input.empty() ? o.seed : 0);
  const auto t = underdog_calibration(games, o.bin_width, o.max_gap);
  hdr.add("games", games.size());
  std::ostringstream out;
  write_header(out, hdr);
  out << "lo\thi\tgames\tmedian_gap\tempirical\ttheoretical\tstd_error\twhite_underdog_games\t"
         "empirical_white_underdog\tempirical_black_underdog\n";
  for (const auto& b : t.bins)
    out << format_double(b.lo) << '\t' << format_double(b.hi) << '\t' << b.games << '\t' << format_double(b.median_gap)
        << '\t' << format_double(b.empirical) << '\t' << format_double(b.theoretical) << '\t'
        << format_double(b.std_error) << '\t' << b.white_underdog_games << '\t'
        << format_double(b.empirical_white_underdog) << '\t' << format_double(b.empirical_black_underdog) << '\n';
  for (const auto& n : t.notes) out << "# note: " << n << '\n';
  write_out(o.out, out.str());
  return 0;
}

struct EloNoiseOpts {
  double k = 22.83, da = 0, p = 0;
  std::size_t simulate = 0;
  std::uint64_t seed = 1;
  std::string out = "-";
};

int run_elo_noise(const EloNoiseOpts& o) {
  const EloNoiseParams p{o.k, o.da, o.p};
  json cfg;
  cfg["k"] = o.k;
  cfg["delta_a"] = o.da;
  cfg["p_draw"] = o.p;
  cfg["simulate"] = o.simulate;
  ArtifactHeader hdr = make_header("elo-noise", cfg, o.seed);
  const auto r = elo_noise_se(p);
  std::ostringstream out;
  write_header(out, hdr);
  out << "quantity\tvalue\n";
  out << "g\t" << format_double(r.g) << "\ng_prime\t" << format_double(r.g_prime) << "\nvar_y\t"
      << format_double(r.var_y) << "\nvariance\t" << format_double(r.variance) << "\nse\t" << format_double(r.se)
      << '\n';
  if (o.simulate > 0) {
    const auto s = simulate_rating_updates(p, o.simulate, o.seed);
    out << "simulated_mean_error\t" << format_double(s.mean_error) << "\nsimulated_se\t" << format_double(s.sd_error)
        << '\n';
  }
  write_out(o.out, out.str());
  return 0;
}

struct ImpliedKOpts {
  std::string input, out = "-";
  double bin_width = 2.5;
};

int run_implied_k(const ImpliedKOpts& o) {
  json cfg;
  cfg["bin_width"] = o.bin_width;
  cfg["input"] = file_digest(o.input);
  ArtifactHeader hdr = make_header("implied-k", cfg, 0);
  const auto games = load_records(o.input);
  const auto r = implied_k(games, o.bin_width);
  hdr.add("games", games.size());
  hdr.add("values", r.values.size());
  hdr.add("near_zero", r.near_zero);
  hdr.add("missing_diffs", r.missing_diffs);
  hdr.add("median", format_double(r.median));
  std::ostringstream out;
  write_header(out, hdr);
  out << "bin_lo\tcount\n";
  for (const auto& [lo, n] : r.histogram) out << format_double(lo) << '\t' << n << '\n';
  write_out(o.out, out.str());
  return 0;
}

struct SelfplayRunOpts {
  std::string spec, ledger, engine;
  unsigned workers = 1;
  double grace = 5;
};

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

int run_selfplay(const SelfplayRunOpts& o) {
  std::ifstream in = open_in(o.spec);
  const auto specs = read_match_specs(in);
  const EngineFactory factory =
      o.engine.empty() ? mock_engine_factory() : uci_engine_factory(split_words(o.engine), o.grace);
  RunOptions ro;
  ro.ledger_path = o.ledger;
  ro.workers = o.workers;
  const auto run = run_matches(specs, factory, ro);
  std::cerr << "selfplay: " << run.rows.size() << " games (" << run.resumed << " resumed), " << run.voided.size()
            << " voided\n";
  for (const auto& v : run.voided)
    std::cerr << "  void " << v.spec_hash << " #" << v.game << ": " << v.error << '\n';
  return 0;
}

struct SelfplayFitOpts {
  std::string ledger, shape = "full", out = "-";
};

int run_selfplay_fit(const SelfplayFitOpts& o) {
  const auto shape = parse_shape(o.shape);
  json cfg;
  cfg["shape"] = std::string(to_string(shape));
  cfg["ledger"] = file_digest(o.ledger);
  ArtifactHeader hdr = make_header("selfplay fit", cfg, 0);
  const auto ledger = read_ledger(o.ledger);
  const auto f = fit_selfplay(ledger.rows, shape);
  hdr.add("rows", f.rows_used);
  hdr.add("status", std::string(to_string(f.fit.status)));
  for (const auto& s : f.constant_squares) hdr.add("constant_square", s);
  std::ostringstream out;
  write_coefficients(out, hdr, coefficient_set(f.fit, o.shape), f.fit.standard_errors);
  write_out(o.out, out.str());
  require_converged(f.fit);
  return 0;
}

struct ReportOpts {
  std::vector<std::string> fits;
  std::string variant = "standard", out_dir;
};

int run_report(const ReportOpts& o) {
  const Variant variant = parse_variant(o.variant);
  json cfg;
  cfg["variant"] = o.variant;
  std::vector<CoefficientSet> sets;
  for (const auto& spec : o.fits) {
    std::string label, path = spec;
    if (auto eq = spec.find('='); eq != std::string::npos) {
      label = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      label = fs::path(spec).stem().string();
    }
    std::ifstream in = open_in(path);
    sets.push_back(read_coefficients(in, label));
    cfg["fits"].push_back({label, file_digest(path)});
  }
  ArtifactHeader hdr = make_header("report", cfg, 0);
  hdr.add("fits", sets.size());
  const fs::path dir(o.out_dir);

  auto emit = [&](const std::string& name, auto&& writer) {
    std::ostringstream s;
    write_header(s, hdr);
    writer(s);
    write_out((dir / name).string(), s.str());
  };

  // Relative values and the historical comparison use the first fit; the
  // equalizers use the one with the smallest mean ply.
  const auto& main = sets.front();
  const auto rel = report_relative_values(main);
  std::size_t early = 0;
  for (std::size_t i = 1; i < sets.size(); ++i)
    if (sets[i].mean_ply && (!sets[early].mean_ply || *sets[i].mean_ply < *sets[early].mean_ply)) early = i;
  const auto eq = report_equalizers(sets[early]);
  const auto curves = report_ply_curves(sets);
  const auto hist = compare_historical(rel, main.label);

  emit("relative.tsv", [&](std::ostream& s) { write_relative(s, rel); });
  emit("equalizers.tsv", [&](std::ostream& s) { write_equalizers(s, eq); });
  emit("ply_curves.tsv", [&](std::ostream& s) { write_ply_curves(s, curves); });
  emit("historical.tsv", [&](std::ostream& s) { write_historical(s, hist); });

  json sum;
  sum["artifact"] = header_json(hdr);
  sum["variant"] = o.variant;
  for (const auto& c : sets) {
    json f;
    f["label"] = c.label;
    f["rows"] = c.rows;
    if (c.mean_ply) f["mean_ply"] = *c.mean_ply;
    for (std::size_t j = 0; j < c.terms.size(); ++j) f["coefficients"][c.terms[j]] = c.values[j];
    sum["fits"].push_back(f);
  }
  sum["relative"]["pawn"] = rel.pawn;
  sum["relative"]["ratios_available"] = rel.ratios_available;
  for (const auto& r : rel.rows)
    sum["relative"]["ratios"][r.term] = r.ratio ? json(*r.ratio) : json(nullptr);
  sum["relative"]["notes"] = rel.notes;
  sum["equalizers"]["fit"] = sets[early].label;
  for (const auto& r : eq.rows) sum["equalizers"]["rounded"][r.term] = r.rounded;
  if (variant == Variant::Horde) sum["horde_opening_effect"] = opening_effect(main, variant);
  write_out((dir / "summary.json").string(), sum.dump(2) + "\n");
  for (const auto& n : rel.notes) std::cerr << "note: " << n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Material value estimation from game archives and self-play"};
  app.set_version_flag("--version", PIECEVAL_VERSION);
  app.set_config("--config", "", "TOML run configuration; sections are subcommand names");
  app.add_option("--threads", g_threads, "Worker threads, 0 for all cores");
  app.require_subcommand(1);
  std::function<int()> run;

  IngestOpts ing;
  auto* c_ing = app.add_subcommand("ingest", "Parse a PGN archive, filter it and write NDJSON records");
  c_ing->add_option("--input,-i", ing.input, "PGN file")->required()->check(CLI::ExistingFile);
  c_ing->add_option("--variant", ing.variant, "standard, chess960, atomic, antichess or horde");
  c_ing->add_option("--policy", ing.policy, "Filter policy JSON")->check(CLI::ExistingFile);
  c_ing->add_option("--history", ing.history, "Extra player-history index files to merge")->check(CLI::ExistingFile);
  c_ing->add_option("--history-out", ing.history_out, "Write the player-history index here");
  c_ing->add_option("--out,-o", ing.out, "NDJSON output")->required();
  c_ing->add_option("--report", ing.report, "Filter report JSON");
  c_ing->add_flag("--no-filter", ing.no_filter, "Keep every parsed game");
  c_ing->callback([&] { run = [&] { return run_ingest(ing); }; });

  SnapshotOpts snap;
  auto* c_snap = app.add_subcommand("snapshot", "Draw one snapshot per game and write a feature table");
  c_snap->add_option("--input,-i", snap.input, "NDJSON records")->required()->check(CLI::ExistingFile);
  c_snap->add_option("--scheme", snap.scheme, "uniform, first-third, middle-third, last-third or range:LO:HI");
  c_snap->add_option("--depth", snap.depth, "No-capture lookahead in moves (0-2)");
  c_snap->add_option("--seed", snap.seed);
  c_snap->add_option("--policy", snap.policy, "Filter policy JSON (imbalance bounds)")->check(CLI::ExistingFile);
  c_snap->add_option("--out,-o", snap.out, "Feature table")->required();
  c_snap->add_option("--report", snap.report, "Snapshot report JSON");
  c_snap->callback([&] { run = [&] { return run_snapshot(snap); }; });

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit", "Plain logistic fit of a feature table");
  c_fit->add_option("--input,-i", fit.input)->required()->check(CLI::ExistingFile);
  c_fit->add_option("--terms", fit.terms, "Comma list or compact, passed, antichess, horde");
  c_fit->add_option("--label", fit.label);
  c_fit->add_option("--out,-o", fit.out);
  c_fit->callback([&] { run = [&] { return run_fit(fit); }; });

  SimexOpts sx;
  auto* c_sx = app.add_subcommand("simex", "SIMEX sweep and calibration to zero rating noise");
  c_sx->add_option("--input,-i", sx.input)->required()->check(CLI::ExistingFile);
  c_sx->add_option("--terms", sx.terms);
  c_sx->add_option("--sigma0", sx.sigma0, "Rating noise in rating points, or auto");
  c_sx->add_option("--candidates", sx.candidates, "sigma0 candidates for auto, lo:hi:step or a list");
  c_sx->add_option("--grid", sx.grid, "default, default:N or a comma list of added sigma");
  c_sx->add_option("--replicates", sx.replicates);
  c_sx->add_option("--seed", sx.seed);
  c_sx->add_option("--label", sx.label);
  c_sx->add_option("--curve", sx.curve, "Write the per-sigma medians here");
  c_sx->add_option("--sigma0-out", sx.sigma0_out, "Write the sigma0 objective here");
  c_sx->add_option("--out,-o", sx.out);
  c_sx->callback([&] { run = [&] { return run_simex(sx); }; });

  BootstrapOpts bs;
  auto* c_bs = app.add_subcommand("bootstrap", "Percentile intervals for the calibrated coefficients");
  c_bs->add_option("--input,-i", bs.input)->required()->check(CLI::ExistingFile);
  c_bs->add_option("--terms", bs.terms);
  c_bs->add_option("-B,--resamples", bs.B);
  c_bs->add_option("--sigma0", bs.sigma0);
  c_bs->add_option("--grid", bs.grid);
  c_bs->add_option("--replicates", bs.simex_replicates, "SIMEX replicates inside each resample");
  c_bs->add_option("--level", bs.level);
  c_bs->add_option("--seed", bs.seed);
  c_bs->add_option("--replicates-out", bs.replicates_out, "Write every resample's coefficients here");
  c_bs->add_option("--out,-o", bs.out);
  c_bs->callback([&] { run = [&] { return run_bootstrap(bs); }; });

  auto* c_mc = app.add_subcommand("mc", "Synthetic experiments");
  c_mc->require_subcommand(1);
  KnightOpts kn;
  auto* c_kn = c_mc->add_subcommand("knight", "Knight recovery experiment");
  c_kn->add_option("--games", kn.games);
  c_kn->add_option("--sigma0", kn.sigma0);
  c_kn->add_option("--observed-sd", kn.observed_sd);
  c_kn->add_option("--grid", kn.grid);
  c_kn->add_option("--replicates", kn.replicates);
  c_kn->add_option("--seed", kn.seed);
  c_kn->add_option("--out,-o", kn.out);
  c_kn->callback([&] { run = [&] { return run_mc_knight(kn); }; });
  CalibrationOpts cal;
  auto* c_cal = c_mc->add_subcommand("calibration", "Underdog calibration table");
  c_cal->add_option("--input,-i", cal.input, "NDJSON records; synthetic games when absent")->check(CLI::ExistingFile);
  c_cal->add_option("--games", cal.games);
  c_cal->add_option("--ability-sd", cal.ability_sd);
  c_cal->add_option("--noise-sd", cal.noise_sd);
  c_cal->add_option("--draw", cal.draw);
  c_cal->add_option("--white-adv", cal.white_adv);
  c_cal->add_option("--bin-width", cal.bin_width);
  c_cal->add_option("--max-gap", cal.max_gap);
  c_cal->add_option("--seed", cal.seed);
  c_cal->add_option("--out,-o", cal.out);
  c_cal->callback([&] { run = [&] { return run_mc_calibration(cal); }; });

  EloNoiseOpts en;
  auto* c_en = app.add_subcommand("elo-noise", "Stationary rating error of the Elo update");
  c_en->add_option("--k", en.k);
  c_en->add_option("--da", en.da, "True ability difference");
  c_en->add_option("--p", en.p, "Draw probability");
  c_en->add_option("--simulate", en.simulate, "Also simulate this many updates");
  c_en->add_option("--seed", en.seed);
  c_en->add_option("--out,-o", en.out);
  c_en->callback([&] { run = [&] { return run_elo_noise(en); }; });

  ImpliedKOpts ik;
  auto* c_ik = app.add_subcommand("implied-k", "Distribution of k implied by recorded rating changes");
  c_ik->add_option("--input,-i", ik.input)->required()->check(CLI::ExistingFile);
  c_ik->add_option("--bin-width", ik.bin_width);
  c_ik->add_option("--out,-o", ik.out);
  c_ik->callback([&] { run = [&] { return run_implied_k(ik); }; });

  auto* c_sp = app.add_subcommand("selfplay", "Engine self-play with piece ablations");
  c_sp->require_subcommand(1);
  SelfplayRunOpts spr;
  auto* c_spr = c_sp->add_subcommand("run", "Play scheduled games into a ledger (resumes)");
  c_spr->add_option("--spec", spr.spec, "Match spec JSON")->required()->check(CLI::ExistingFile);
  c_spr->add_option("--ledger", spr.ledger)->required();
  c_spr->add_option("--engine", spr.engine, "UCI engine command line; the built-in mock when absent");
  c_spr->add_option("--workers", spr.workers);
  c_spr->add_option("--grace", spr.grace, "Seconds beyond the move time before a move times out");
  c_spr->callback([&] { run = [&] { return run_selfplay(spr); }; });
  SelfplayFitOpts spf;
  auto* c_spf = c_sp->add_subcommand("fit", "Regression on a ledger");
  c_spf->add_option("--ledger", spf.ledger)->required()->check(CLI::ExistingFile);
  c_spf->add_option("--shape", spf.shape, "engine_only, equal_engines_pieces, full or per_square");
  c_spf->add_option("--out,-o", spf.out);
  c_spf->callback([&] { run = [&] { return run_selfplay_fit(spf); }; });

  ReportOpts rp;
  auto* c_rp = app.add_subcommand("report", "Relative values, equalizers, ply curves and historical tables");
  c_rp->add_option("--fit", rp.fits, "Coefficient table, optionally LABEL=PATH; repeat for ply ranges")->required();
  c_rp->add_option("--variant", rp.variant);
  c_rp->add_option("--out-dir", rp.out_dir)->required();
  c_rp->callback([&] { run = [&] { return run_report(rp); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(exit_code_for(e.kind()));
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return static_cast<int>(ExitCode::DataError);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::DataError);
  }
}
