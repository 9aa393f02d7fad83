// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "support.hpp"

using namespace qocdao;
using namespace qocdao::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kAgreementTolPp = 0.1;
constexpr double kChiSquareTol = 0.01;
constexpr double kEngineRelTol = 1e-9;
constexpr double kPValueRelTol = 1e-6;
constexpr double kTablesMaxSeconds = 1.0;
constexpr double kEngineMaxSeconds = 10.0;
constexpr int kEngineInstances = 1000;
constexpr int kSafeguardInstances = 500;
constexpr int kStateSequences = 10000;

using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "[" << what << "] ";
    }
  }
};

int failures = 0;

void report(const std::string& name, Check& c) {
  if (!c.ok) ++failures;
  std::cout << (c.ok ? "PASS " : "FAIL ") << name;
  const auto d = c.detail.str();
  if (!d.empty()) std::cout << " :: " << d;
  std::cout << std::endl;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void tables() {
  Check c;
  struct Expected {
    const char* file;
    ContingencyTable table;
    double agreement_pct, chi2, p, p_unit, cost;
  };
  // p tolerance: 2 in the last reported significant digit.
  const Expected expected[] = {
      {"pairs/gpt-4-mini.ndjson", {56, 20, 14, 12}, 66.7, 1.06, 0.303, 0.001, 214},
      {"pairs/gpt-5-mini.ndjson", {32, 8, 38, 24}, 54.9, 19.57, 9.72e-6, 0.01e-6, 118},
      {"pairs/gpt-5.ndjson", {24, 3, 46, 29}, 52.0, 37.73, 8.11e-10, 0.01e-10, 76},
  };
  const auto t0 = SteadyClock::now();
  std::vector<ModelStats> models;
  for (const auto& e : expected) models.push_back(model_stats(e.file, contingency(load_pairs(fixture_path(e.file)))));
  const auto stats = emit_stats_report(models, {1, 5, 10});
  const double elapsed = seconds_since(t0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    const auto& e = expected[i];
    const double pct = 100.0 * m.table.agreement_rate();
    c.require(m.table == e.table, std::string(e.file) + " table");
    c.require(std::fabs(pct - e.agreement_pct) <= kAgreementTolPp + 1e-12,
              std::string(e.file) + " agreement " + fmt("%.4f", pct));
    c.require(std::fabs(m.mcnemar.chi_square - e.chi2) <= kChiSquareTol,
              std::string(e.file) + " chi2 " + fmt("%.4f", m.mcnemar.chi_square));
    c.require(std::fabs(m.mcnemar.p_value - e.p) <= 2 * e.p_unit + 1e-18,
              std::string(e.file) + " p " + fmt("%.4e", m.mcnemar.p_value));
    c.require(m.cost.total_cost == e.cost, std::string(e.file) + " cost " + fmt("%g", m.cost.total_cost));
  }
  c.require(!stats.text.empty(), "rendered tables");
  c.require(elapsed < kTablesMaxSeconds, "runtime " + fmt("%.3f s", elapsed));
  if (c.ok) c.detail << "agreement 66.7/54.9/52.0, chi2 1.06/19.57/37.73, costs 214/118/76, " << fmt("%.3f s", elapsed);
  report("tables: agreement, McNemar and cost reproduce the published tables", c);
}

void mcnemar_oracle() {
  Check c;
  const auto r = mcnemar(ContingencyTable{56, 20, 14, 12});
  c.require(r.chi_square == 36.0 / 34.0, "(20,14) statistic " + fmt("%.17g", r.chi_square));
  double worst = 0.0;
  for (int i = 0; i <= 399; ++i) {
    const double x = 0.1 + (40.0 - 0.1) * i / 399.0;
    const double ref = chi2_1df_tail_by_quadrature(x);
    worst = std::max(worst, std::fabs(chi_square_sf_1df(x) - ref) / ref);
  }
  c.require(worst <= kPValueRelTol, "p-value max rel error " + fmt("%.3e", worst));
  if (c.ok) c.detail << "max rel error vs quadrature " << fmt("%.2e", worst) << " over 400 points";
  report("mcnemar: statistic exact, p-value matches 1-df density quadrature", c);
}

void engine_oracle() {
  Check c;
  std::mt19937_64 rng(1234567);
  std::uniform_real_distribution<double> factor(1e-3, 1e3);
  const auto t0 = SteadyClock::now();
  int mismatches = 0, argmax_changes = 0;
  for (int i = 0; i < kEngineInstances; ++i) {
    const auto inst = random_instance(rng, 5, 6, 10);
    const bool pw = i % 2 == 1;
    const auto r = aggregate(inst.ballots, inst.options, inst.criteria, inst.weights.weights(), pw);
    const auto ref = reference_scores(inst, pw);
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (!rel_close(r.option_scores[k].second, ref[k], kEngineRelTol)) ++mismatches;
    const double s = factor(rng);
    std::map<CriterionId, double> scaled;
    for (const auto& [id, w] : inst.weights.weights()) scaled.emplace(id, w * s);
    const auto rs = aggregate(inst.ballots, inst.options, inst.criteria, scaled, pw);
    if (decide(r.option_scores, QuestionMode::General).winner != decide(rs.option_scores, QuestionMode::General).winner)
      ++argmax_changes;
  }
  const double elapsed = seconds_since(t0);
  c.require(mismatches == 0, std::to_string(mismatches) + " score mismatches");
  c.require(argmax_changes == 0, std::to_string(argmax_changes) + " argmax changes under scaling");
  c.require(elapsed < kEngineMaxSeconds, "runtime " + fmt("%.3f s", elapsed));
  if (c.ok) c.detail << kEngineInstances << " instances, " << fmt("%.3f s", elapsed);
  report("engine: matches naive reference and argmax is scale invariant", c);
}

void safeguards() {
  Check c;
  {
    const std::vector<int> values{10, 12, 11, 13, 95};
    const auto flags = detect_outliers(single_cell_ballots(values), SafeguardConfig{});
    const auto s = population_stats(values);
    const bool only_95 = flags.size() == 1 && flags[0].value == 95;
    c.require(only_95, "(10,12,11,13,95) k=2 flagged " + std::to_string(flags.size()) + " values; mean " +
                           fmt("%.2f", s.mean) + ", population sd " + fmt("%.3f", s.stddev) + ", z(95) " +
                           fmt("%.4f", (95 - s.mean) / s.stddev) + " <= 2 (max z for n=5 is sqrt(4) = 2)");
  }
  c.require(detect_outliers(single_cell_ballots({50, 50, 50, 50, 50}), SafeguardConfig{0.01}).empty(),
            "zero-variance cell flagged");
  c.require(detect_outliers(single_cell_ballots({0, 100}), SafeguardConfig{0.01}).empty(), "two ballots flagged");

  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> score(0, 100);
  std::uniform_int_distribution<int> n_ballots(3, 12), n_crit(1, 4);
  std::uniform_real_distribution<double> k(0.5, 2.5);
  int violations = 0, checked = 0;
  for (int i = 0; i < kSafeguardInstances; ++i) {
    const auto nb = n_ballots(rng), nc = n_crit(rng);
    std::vector<Ballot> ballots;
    for (int b = 0; b < nb; ++b) {
      std::vector<int> yes(nc), no(nc);
      for (auto& v : yes) v = score(rng);
      for (auto& v : no) v = score(rng);
      ballots.push_back(binary_ballot("v" + std::to_string(b), 1.0, yes, no));
    }
    const SafeguardConfig cfg{k(rng), 3, i % 2 ? ExclusionGranularity::WholeBallot : ExclusionGranularity::PerCell};
    const auto ex = apply_exclusions(detect_outliers(ballots, cfg), cfg, ballots[0].evaluations.grid());
    CellMeans means;
    try {
      means = aggregate_evaluations(ballots, false, ex);
    } catch (const DomainError&) {
      continue;
    }
    ++checked;
    for (const auto& [cell, m] : means) {
      int lo = 101, hi = -1;
      for (const auto& b : ballots) {
        if (ex.contains(VoterCell{b.voter, cell.option, cell.criterion})) continue;
        lo = std::min(lo, b.evaluations.scores().at(cell));
        hi = std::max(hi, b.evaluations.scores().at(cell));
      }
      if (m < lo || m > hi) ++violations;
    }
  }
  c.require(violations == 0 && checked > 0,
            std::to_string(violations) + " post-exclusion bound violations over " + std::to_string(checked));
  if (c.ok) c.detail << checked << " random instances within bounds";
  report("safeguards: derived cell, zero variance, quorum, post-exclusion bounds", c);
}

void mode3_determinism() {
  Check c;
  const auto corpus = load_corpus(fixture_path("corpus5.ndjson"));
  const auto cfg = binary_config(GovernanceMode::Autonomous, 4);
  const auto root = fs::temp_directory_path() / ("qocdao-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);

  auto run = [&](const std::string& tag, bool resume) {
    MockBackend backend;
    ReplayOptions opts;
    opts.report_dir = root / tag;
    if (resume) {
      opts.checkpoint = root / (tag + ".ckpt");
      opts.limit = 2;
      replay(corpus, cfg, backend, opts);
      opts.limit.reset();
    }
    const auto result = replay(corpus, cfg, backend, opts);
    const auto stats = emit_stats_report({model_stats("mock", contingency(result.pairs))}, {1, 5, 10});
    std::string bytes = stats.text + stats.structured.dump() + pairs_to_ndjson(result.pairs);
    for (const auto& d : corpus) {
      const auto p = root / tag / (d.id + ".json");
      bytes += fs::exists(p) ? slurp(p) : result.report_digests.at(d.id);
      bytes += result.report_digests.at(d.id);
    }
    return std::pair{bytes, result};
  };
  const auto [a, ra] = run("a", false);
  const auto [b, rb] = run("b", false);
  const auto [r, rr] = run("r", true);
  c.require(ra.complete && ra.pairs.size() == corpus.size() && ra.skipped.empty(), "first run incomplete");
  c.require(a == b, "two runs differ");
  c.require(rr.resumed == 2, "resume reused " + std::to_string(rr.resumed) + " entries");
  c.require(ra.report_digests == rr.report_digests && ra.pairs == rr.pairs, "resumed run differs");
  // The resumed run wrote only the remaining reports; compare those bytes directly.
  for (const auto& d : corpus) {
    const auto p = root / "r" / (d.id + ".json");
    if (fs::exists(p)) c.require(slurp(p) == slurp(root / "a" / (d.id + ".json")), d.id + " report bytes differ");
  }
  fs::remove_all(root);
  if (c.ok) c.detail << corpus.size() << " proposals, identical reports, stats and checkpoint resume";
  report("mode 3: byte-identical reports and stats across runs and resume", c);
}

void state_machine() {
  Check c;
  std::mt19937_64 rng(4242);
  MockBackend backend;
  std::uniform_int_distribution<int> op(0, 5), len(1, 12), score(0, 100), mode_pick(0, 2);
  const GovernanceMode modes[] = {GovernanceMode::HumanOnly, GovernanceMode::HumanInTheLoop, GovernanceMode::Autonomous};
  std::size_t illegal_decided = 0, mutated_after_close = 0, human_decision_outside_mode2 = 0, ledger_invalid = 0,
              tamper_missed = 0;
  std::vector<GovernanceConfig> configs;
  for (auto m : modes) {
    auto cfg = binary_config(m, 2);
    cfg.agent.max_in_flight = 1;
    configs.push_back(cfg);
  }

  for (int seq = 0; seq < kStateSequences; ++seq) {
    const auto mode = modes[mode_pick(rng)];
    auto v = VoteCycle::open(VoteId{"s" + std::to_string(seq)}, sample_proposal(), configs[static_cast<int>(mode)],
                             counting_clock());
    bool closed_seen = false;
    const int steps = len(rng);
    for (int s = 0; s < steps; ++s) {
      const auto before_state = v.state();
      const auto before_ballots = v.ballots().size();
      const auto before_agents = v.agent_ballots().size();
      try {
        switch (op(rng)) {
          case 0:
          case 1:
            v.submit_ballot(binary_ballot("voter" + std::to_string(score(rng) % 6), 1 + score(rng) % 3,
                                          {score(rng), score(rng)}, {score(rng), score(rng)}));
            break;
          case 2:
            v.evaluate_agents(backend);
            break;
          case 3:
            v.close_and_aggregate(score(rng) % 2 ? &backend : nullptr);
            break;
          case 4:
            v.record_human_decision(score(rng) % 2 ? kYes : kNo, "actor");
            if (mode != GovernanceMode::HumanInTheLoop) ++human_decision_outside_mode2;
            break;
          case 5:
            if (v.state() == VoteState::Decided) v.note_report(generate_report(v).vote_id.str());
            break;
        }
      } catch (const Error&) {
        // Rejected operations must leave the vote untouched.
        if (v.state() != before_state) ++illegal_decided;
      }
      if (v.state() == VoteState::Closed || v.state() == VoteState::AwaitingHumanDecision ||
          v.state() == VoteState::Decided) {
        if (before_state != VoteState::Open && (v.ballots().size() != before_ballots ||
                                                 v.agent_ballots().size() != before_agents))
          ++mutated_after_close;
      }
      bool has_close = false;
      for (const auto& r : v.ledger().records()) has_close |= r.type == "vote_closed";
      closed_seen |= has_close;
      if (v.state() == VoteState::Decided && !closed_seen) ++illegal_decided;
    }

    if (!v.ledger().verify().valid) ++ledger_invalid;
    auto records = v.ledger().records();
    std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
    const auto victim = pick(rng);
    switch (seq % 4) {
      case 0: records[victim].payload["tampered"] = true; break;
      case 1: records[victim].timestamp += "x"; break;
      case 2: records[victim].type = "ballot_submitted_x"; break;
      case 3: records[victim].hash[0] = records[victim].hash[0] == 'a' ? 'b' : 'a'; break;
    }
    const auto check = verify_ledger(records);
    if (check.valid || !check.first_broken_seq || *check.first_broken_seq != victim + 1) ++tamper_missed;
  }
  c.require(illegal_decided == 0, std::to_string(illegal_decided) + " illegal transitions");
  c.require(mutated_after_close == 0, std::to_string(mutated_after_close) + " ballot mutations after close");
  c.require(human_decision_outside_mode2 == 0,
            std::to_string(human_decision_outside_mode2) + " human decisions outside mode 2");
  c.require(ledger_invalid == 0, std::to_string(ledger_invalid) + " invalid ledgers");
  c.require(tamper_missed == 0, std::to_string(tamper_missed) + " undetected tampers");
  if (c.ok) c.detail << kStateSequences << " random sequences, every single-record tamper located";
  report("state machine: legal transitions, frozen ballots, ledger integrity", c);
}

}  // namespace

int main() {
  tables();
  mcnemar_oracle();
  engine_oracle();
  safeguards();
  mode3_determinism();
  state_machine();
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}
