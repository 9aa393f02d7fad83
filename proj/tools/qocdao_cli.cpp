// qocdao: run votes from files, replay historical decisions, compute
// agreement statistics, verify ledgers, and serve the HTTP API.
//
// Exit codes: 0 success, 1 domain or validation error, 2 usage error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qocdao/qocdao.hpp"

namespace fs = std::filesystem;
using namespace qocdao;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot write '" + path + "'");
  out << text;
}

std::vector<Ballot> load_ballots(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::ranges::sort(files);
  std::vector<Ballot> out;
  for (const auto& f : files) {
    try {
      out.push_back(ballot_from_json(read_json_file(f.string())));
    } catch (const ValidationError& e) {
      throw ValidationError(f.string() + ": " + e.what());
    }
  }
  return out;
}

struct Overrides {
  std::string mode;
  std::string backend;
  double k_threshold = 0.0;
};

GovernanceConfig load_config(const std::string& path, const Overrides& o) {
  auto config = config_from_json(read_json_file(path));
  if (!o.mode.empty()) config.mode = parse_mode(o.mode);
  if (!o.backend.empty()) config.backend.kind = o.backend;
  if (o.k_threshold > 0.0) config.safeguard.threshold_k = o.k_threshold;
  config.backend.base_url = env_or("QOCDAO_BACKEND_URL", config.backend.base_url);
  return config;
}

struct Outputs {
  std::string report;
  std::string markdown;
  std::string ledger;
};

void emit_decided(VoteCycle& vote, const Outputs& out) {
  const auto report = generate_report(vote);
  const auto canonical = canonical_report(report);
  vote.note_report(sha256_hex(canonical));
  write_text(out.report, canonical);
  write_text(out.markdown, render_markdown(report));
  write_text(out.ledger, vote.ledger().to_ndjson());
  const auto& f = *vote.final_decision();
  std::cout << "vote " << vote.id() << ": " << (f.outcome.winner == kYes ? "YES" : "NO")
            << (f.outcome.tie_broken ? " (tie broken)" : "") << ", decided by " << to_string(f.decided_by)
            << (f.overridden ? ", recommendation overridden" : "") << "\n";
  for (const auto& [id, s] : vote.aggregate_result()->option_scores) std::cout << "  S(" << id << ") = " << s << "\n";
  if (!out.report.empty()) std::cout << "report written to " << out.report << "\n";
}

// Everything needed to rebuild a human-in-the-loop vote for `decide`.
json session_json(const VoteCycle& vote, const GovernanceConfig& config) {
  json transcripts = json::array();
  for (const auto& e : vote.agent_evaluations())
    for (const auto& t : e.transcripts) transcripts.push_back(json::parse(to_ordered_json(t).dump()));
  return {{"vote_id", vote.id().str()},
          {"proposal", to_json(vote.proposal())},
          {"config", to_json(config)},
          {"transcripts", transcripts},
          {"recommendation", recommendation_payload(vote)}};
}

int run_vote(const std::string& config_path, const std::string& proposal_path, const std::string& ballots_dir,
             const Overrides& overrides, const std::string& decision, const std::string& actor,
             const std::string& session_path, const Outputs& out) {
  auto config = load_config(config_path, overrides);
  auto proposal = proposal_from_json(read_json_file(proposal_path));
  auto backend = make_backend(config.backend, config.agent.model);
  auto vote = VoteCycle::open(VoteId{"vote-" + proposal.id.str()}, proposal, config);
  if (!ballots_dir.empty())
    for (auto& b : load_ballots(ballots_dir)) vote.submit_ballot(std::move(b));
  vote.close_and_aggregate(backend.get());

  if (vote.state() == VoteState::AwaitingHumanDecision) {
    const auto session = session_json(vote, config);
    const auto session_file = session_path.empty() ? (out.report.empty() ? std::string("session.json")
                                                                         : out.report + ".session.json")
                                                   : session_path;
    if (decision.empty()) {
      write_text(session_file, session.dump(2) + "\n");
      write_text(out.ledger, vote.ledger().to_ndjson());
      const auto& rec = *vote.recommendation();
      std::cout << "vote " << vote.id() << ": recommendation " << (rec.winner == kYes ? "YES" : "NO")
                << (rec.tie_broken ? " (tie broken)" : "") << ", awaiting human decision\n"
                << "recommendation written to " << session_file << "\n"
                << "record the decision with: qocdao decide --session " << session_file
                << " --decision yes|no --actor <id> --out <report.json>\n";
      return kExitOk;
    }
    vote.record_human_decision(OptionId{detail::lowercase(decision)}, actor);
  } else if (!decision.empty()) {
    throw StateError("--decision is only accepted in mode human_in_the_loop");
  }
  emit_decided(vote, out);
  return kExitOk;
}

int decide(const std::string& session_path, const std::string& decision, const std::string& actor,
           const Outputs& out) {
  const auto session = read_json_file(session_path);
  auto config = config_from_json(session.at("config"));
  auto proposal = proposal_from_json(session.at("proposal"));
  std::vector<Transcript> transcripts;
  for (const auto& t : session.at("transcripts")) transcripts.push_back(transcript_from_json(t));
  RecordedBackend recorded(transcripts);
  auto vote = VoteCycle::open(VoteId{session.at("vote_id").get<std::string>()}, proposal, config);
  vote.close_and_aggregate(&recorded);
  vote.record_human_decision(OptionId{detail::lowercase(decision)}, actor);
  emit_decided(vote, out);
  return kExitOk;
}

std::vector<double> parse_sweep(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (detail::trim(item).empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("--sweep expects comma-separated numbers, got '" + item + "'");
    }
  }
  return out;
}

void write_stats(const StatsReport& stats, const std::string& out_path, const std::string& text_path) {
  std::cout << stats.text;
  write_text(out_path, stats.structured.dump(2) + "\n");
  write_text(text_path, stats.text);
}

int replay_corpus(const std::string& corpus_path, const std::string& config_path, const Overrides& overrides,
                  const std::string& checkpoint, const std::string& reports_dir, const std::string& pairs_out,
                  std::size_t limit, const std::string& name, double fn_weight, double fp_weight,
                  const std::string& sweep, const std::string& out_path, const std::string& text_path) {
  auto config = load_config(config_path, overrides);
  config.mode = GovernanceMode::Autonomous;
  const auto corpus = load_corpus(corpus_path);
  auto backend = make_backend(config.backend, config.agent.model);

  ReplayOptions options;
  if (!checkpoint.empty()) options.checkpoint = checkpoint;
  if (!reports_dir.empty()) options.report_dir = reports_dir;
  if (limit > 0) options.limit = limit;
  const auto result = replay(corpus, config, *backend, options);

  for (const auto& s : result.skipped) std::cerr << "skipped " << s.id << ": " << s.reason << "\n";
  if (!result.complete) {
    std::cout << "replay stopped after " << limit << " new proposals (" << result.pairs.size() << " of "
              << corpus.size() << " done); rerun with the same --checkpoint to resume\n";
    return kExitOk;
  }
  write_text(pairs_out, pairs_to_ndjson(result.pairs));
  if (result.pairs.empty()) throw DomainError("every proposal was skipped; no statistics to report");
  const auto table = contingency(result.pairs);
  auto stats = emit_stats_report({model_stats(name.empty() ? config.agent.model : name, table, fn_weight, fp_weight,
                                              result.skipped.size())},
                                 parse_sweep(sweep));
  write_stats(stats, out_path, text_path);
  return kExitOk;
}

int stats_from_pairs(const std::vector<std::string>& pair_files, const std::vector<std::string>& names,
                     double fn_weight, double fp_weight, const std::string& sweep, const std::string& out_path,
                     const std::string& text_path) {
  if (!names.empty() && names.size() != pair_files.size())
    throw ValidationError("--name must be given once per --pairs file");
  std::vector<ModelStats> models;
  for (std::size_t i = 0; i < pair_files.size(); ++i) {
    const auto pairs = load_pairs(pair_files[i]);
    const auto name = names.empty() ? fs::path(pair_files[i]).stem().string() : names[i];
    models.push_back(model_stats(name, contingency(pairs), fn_weight, fp_weight));
  }
  write_stats(emit_stats_report(std::move(models), parse_sweep(sweep)), out_path, text_path);
  return kExitOk;
}

int verify(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open '" + path + "'");
  const auto records = read_ledger(in, path);
  const auto result = verify_ledger(records);
  if (result.valid) {
    std::cout << "ledger valid (" << records.size() << " records)\n";
    return kExitOk;
  }
  std::cout << "ledger broken at record " << *result.first_broken_seq << ": " << result.reason << "\n";
  return kExitDomain;
}

int render(const std::string& report_path, const std::string& out) {
  const auto report = report_from_json(read_json_file(report_path));
  const auto text = render_markdown(report);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return kExitOk;
}

int serve(const std::string& config_path, const Overrides& overrides, const std::string& host, int port) {
  ServiceOptions options;
  options.default_config = load_config(config_path, overrides);
  if (auto problems = options.default_config.violations(); !problems.empty()) throw ValidationError(problems);
  options.tokens = parse_token_list(env_or("QOCDAO_API_TOKENS", ""));
  if (options.tokens.empty()) std::cerr << "warning: QOCDAO_API_TOKENS is empty; every POST will be rejected\n";
  options.backend = make_backend(options.default_config.backend, options.default_config.agent.model);
  Service service(std::move(options));
  std::cout << "listening on http://" << host << ":" << port << "/v1" << std::endl;
  if (!service.listen(host, port)) throw NotFoundError("cannot listen on " + host + ":" + std::to_string(port));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QOC governance engine for DAO proposals"};
  app.require_subcommand(1);

  Overrides overrides;
  Outputs outputs;
  std::string config_path, proposal_path, ballots_dir, decision, actor = "operator", session_path;
  std::string corpus_path, checkpoint, reports_dir, pairs_out, name, sweep, out_path, text_path;
  std::vector<std::string> pair_files, names;
  std::size_t limit = 0;
  double fn_weight = 1.0, fp_weight = 10.0;
  std::string ledger_path, report_path, host = env_or("QOCDAO_HOST", "127.0.0.1");
  int port = std::atoi(env_or("QOCDAO_PORT", "8080").c_str());

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--mode", overrides.mode, "human_only | human_in_the_loop | autonomous (or 1, 2, 3)");
    cmd->add_option("--backend", overrides.backend, "Agent backend")->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--k-threshold", overrides.k_threshold, "Outlier threshold in standard deviations")
        ->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run-vote", "Run one vote cycle offline and write its decision report");
  run->add_option("--config", config_path, "Governance config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--proposal", proposal_path, "Proposal (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--ballots", ballots_dir, "Directory of ballot files (*.json), mode 1")->check(CLI::ExistingDirectory);
  add_overrides(run);
  run->add_option("--decision", decision, "Human decision for mode 2 (yes|no)");
  run->add_option("--actor", actor, "Actor recording the human decision");
  run->add_option("--session", session_path, "Where mode 2 writes its recommendation session");
  run->add_option("--out", outputs.report, "Canonical report (JSON)");
  run->add_option("--markdown", outputs.markdown, "Rendered report (markdown)");
  run->add_option("--ledger", outputs.ledger, "Ledger output (NDJSON)");

  auto* dec = app.add_subcommand("decide", "Record the human decision for a mode 2 session");
  dec->add_option("--session", session_path, "Session file written by run-vote")->required()->check(CLI::ExistingFile);
  dec->add_option("--decision", decision, "yes | no")->required();
  dec->add_option("--actor", actor, "Actor id");
  dec->add_option("--out", outputs.report, "Canonical report (JSON)");
  dec->add_option("--markdown", outputs.markdown, "Rendered report (markdown)");
  dec->add_option("--ledger", outputs.ledger, "Ledger output (NDJSON)");

  auto* rep = app.add_subcommand("replay", "Replay a historical corpus through autonomous votes");
  rep->add_option("--corpus", corpus_path, "Corpus file (NDJSON) or http(s) URL")->required();
  rep->add_option("--config", config_path, "Governance config (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(rep);
  rep->add_option("--checkpoint", checkpoint, "Checkpoint file; resumes when it exists");
  rep->add_option("--reports", reports_dir, "Directory for per-proposal reports");
  rep->add_option("--pairs-out", pairs_out, "Write (id, ai, dao) pairs (NDJSON)");
  rep->add_option("--limit", limit, "Stop after this many new proposals");
  rep->add_option("--name", name, "Model label for the tables");
  rep->add_option("--fn-weight", fn_weight, "False-negative cost weight")->check(CLI::NonNegativeNumber);
  rep->add_option("--fp-weight", fp_weight, "False-positive cost weight")->check(CLI::NonNegativeNumber);
  rep->add_option("--sweep", sweep, "Comma-separated false-positive weights for a cost sweep");
  rep->add_option("--out", out_path, "Statistics (JSON)");
  rep->add_option("--text", text_path, "Rendered tables (text)");

  auto* st = app.add_subcommand("stats", "Agreement, McNemar and cost tables from pair files");
  st->add_option("--pairs", pair_files, "Pair file (NDJSON), repeatable")->required()->check(CLI::ExistingFile);
  st->add_option("--name", names, "Model label, one per --pairs");
  st->add_option("--fn-weight", fn_weight, "False-negative cost weight")->check(CLI::NonNegativeNumber);
  st->add_option("--fp-weight", fp_weight, "False-positive cost weight")->check(CLI::NonNegativeNumber);
  st->add_option("--sweep", sweep, "Comma-separated false-positive weights for a cost sweep");
  st->add_option("--out", out_path, "Statistics (JSON)");
  st->add_option("--text", text_path, "Rendered tables (text)");

  auto* ver = app.add_subcommand("verify-ledger", "Verify a ledger's hash chain");
  ver->add_option("--ledger", ledger_path, "Ledger (NDJSON)")->required();

  auto* ren = app.add_subcommand("render", "Render a canonical report as markdown");
  ren->add_option("--report", report_path, "Canonical report (JSON)")->required()->check(CLI::ExistingFile);
  ren->add_option("--out", out_path, "Output file (default stdout)");

  auto* srv = app.add_subcommand("serve", "Serve the HTTP API (tokens from QOCDAO_API_TOKENS)");
  srv->add_option("--config", config_path, "Default governance config (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(srv);
  srv->add_option("--host", host, "Listen address");
  srv->add_option("--port", port, "Listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return run_vote(config_path, proposal_path, ballots_dir, overrides, decision, actor, session_path, outputs);
    if (*dec) return decide(session_path, decision, actor, outputs);
    if (*rep)
      return replay_corpus(corpus_path, config_path, overrides, checkpoint, reports_dir, pairs_out, limit, name,
                           fn_weight, fp_weight, sweep, out_path, text_path);
    if (*st) return stats_from_pairs(pair_files, names, fn_weight, fp_weight, sweep, out_path, text_path);
    if (*ver) return verify(ledger_path);
    if (*ren) return render(report_path, out_path);
    if (*srv) return serve(config_path, overrides, host, port);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
