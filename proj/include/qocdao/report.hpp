#pragma once

// Criterion-level decision report for a decided vote.
//
// The structured form is canonical JSON (sorted keys, two-space indent,
// trailing newline); numbers are copied straight from the stored
// AggregateResult, so parsing the report back yields the same doubles.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "qocdao/pipeline.hpp"

namespace qocdao {

struct CriterionRow {
  CriterionId id;
  std::string label;
  double weight = 0.0;
  std::vector<std::pair<OptionId, double>> means;  // option-set order
};

struct DecisionReport {
  VoteId vote_id;
  Proposal proposal;
  GovernanceMode mode = GovernanceMode::HumanOnly;
  std::vector<Option> options;
  std::vector<CriterionRow> rows;
  std::vector<std::pair<OptionId, double>> option_scores;
  std::size_t ballot_count = 0;
  std::vector<OutlierFlag> flags;
  std::set<VoterCell> exclusions;
  Outcome outcome;
  std::optional<Outcome> recommendation;
  DecidedBy decided_by = DecidedBy::Aggregate;
  bool overridden = false;
  std::string actor;
  std::vector<AgentEvaluation> agent_evaluations;
  std::vector<CriterionId> strengths;
  std::vector<CriterionId> weaknesses;
  ReportBands bands;
  bool power_weighted = false;
};

inline DecisionReport generate_report(const VoteCycle& vote) {
  if (vote.state() != VoteState::Decided)
    throw StateError("cannot report on vote '" + vote.id().str() + "': it is " + to_string(vote.state()));
  const auto& agg = *vote.aggregate_result();
  const auto& fin = *vote.final_decision();

  DecisionReport r;
  r.vote_id = vote.id();
  r.proposal = vote.proposal();
  r.mode = vote.config().mode;
  r.options = vote.options().options();
  for (const auto& c : vote.config().criteria) {
    CriterionRow row{c.id, c.label, agg.mean_weights.at(c.id), {}};
    for (const auto& o : r.options) row.means.emplace_back(o.id, agg.mean_evaluations.at(Cell{o.id, c.id}));
    r.rows.push_back(std::move(row));
  }
  r.option_scores = agg.option_scores;
  r.ballot_count = agg.ballot_count;
  r.flags = vote.flags();
  r.exclusions = agg.excluded_evaluations;
  r.outcome = fin.outcome;
  r.recommendation = vote.recommendation();
  r.decided_by = fin.decided_by;
  r.overridden = fin.overridden;
  r.actor = fin.actor;
  r.agent_evaluations = vote.agent_evaluations();
  r.bands = vote.config().bands;
  r.power_weighted = vote.config().power_weighted;
  for (const auto& row : r.rows) {
    const double e = agg.mean_evaluations.at(Cell{fin.outcome.winner, row.id});
    if (e >= r.bands.strength) r.strengths.push_back(row.id);
    if (e < r.bands.weakness) r.weaknesses.push_back(row.id);
  }
  return r;
}

inline json to_json(const DecisionReport& r) {
  json options = json::array();
  for (const auto& o : r.options) options.push_back({{"id", o.id.str()}, {"label", o.label}});
  json criteria = json::array();
  for (const auto& row : r.rows) {
    json means = json::object();
    for (const auto& [o, v] : row.means) means[o.str()] = v;
    criteria.push_back({{"id", row.id.str()}, {"label", row.label}, {"weight", row.weight}, {"mean_evaluations", means}});
  }
  json scores = json::object();
  for (const auto& [o, s] : r.option_scores) scores[o.str()] = s;
  json flags = json::array();
  for (const auto& f : r.flags) flags.push_back(to_json(f));
  json excluded = json::array();
  for (const auto& e : r.exclusions) excluded.push_back(to_json(e));
  json agents = json::array();
  for (const auto& a : r.agent_evaluations) agents.push_back(to_json(a));
  json strengths = json::array();
  for (const auto& c : r.strengths) strengths.push_back(c.str());
  json weaknesses = json::array();
  for (const auto& c : r.weaknesses) weaknesses.push_back(c.str());

  return {{"vote_id", r.vote_id.str()},
          {"proposal", {{"id", r.proposal.id.str()}, {"title", r.proposal.title}}},
          {"mode", to_string(r.mode)},
          {"options", options},
          {"criteria", criteria},
          {"option_scores", scores},
          {"ballot_count", r.ballot_count},
          {"power_weighted", r.power_weighted},
          {"outliers", {{"flags", flags}, {"excluded", excluded}}},
          {"outcome", to_json(r.outcome)},
          {"recommendation", r.recommendation ? to_json(*r.recommendation) : json()},
          {"decided_by", to_string(r.decided_by)},
          {"overridden", r.overridden},
          {"actor", r.actor},
          {"agents", agents},
          {"strengths", strengths},
          {"weaknesses", weaknesses},
          {"bands", {{"strength", r.bands.strength}, {"weakness", r.bands.weakness}}}};
}

inline std::string canonical_report(const DecisionReport& r) { return to_json(r).dump(2) + "\n"; }

namespace detail {

inline GovernanceMode mode_from_string(const std::string& s) { return parse_mode(s); }

inline DecidedBy decided_by_from_string(const std::string& s) {
  if (s == "aggregate") return DecidedBy::Aggregate;
  if (s == "human") return DecidedBy::Human;
  if (s == "autonomous_agent_aggregate") return DecidedBy::AutonomousAgentAggregate;
  throw ValidationError("unknown decided_by '" + s + "'");
}

inline Outcome outcome_from_json(const json& j) {
  return {OptionId{j.at("winner").get<std::string>()}, j.at("tie_broken").get<bool>()};
}

}  // namespace detail

// Inverse of to_json(DecisionReport). Agent transcripts are not part of the
// report and come back empty.
inline DecisionReport report_from_json(const json& j) {
  try {
    DecisionReport r;
    r.vote_id = VoteId{j.at("vote_id").get<std::string>()};
    r.proposal.id = ProposalId{j.at("proposal").at("id").get<std::string>()};
    r.proposal.title = j.at("proposal").at("title").get<std::string>();
    r.mode = detail::mode_from_string(j.at("mode").get<std::string>());
    for (const auto& o : j.at("options")) r.options.push_back({OptionId{o.at("id").get<std::string>()}, o.at("label").get<std::string>()});
    for (const auto& c : j.at("criteria")) {
      CriterionRow row{CriterionId{c.at("id").get<std::string>()}, c.at("label").get<std::string>(),
                       c.at("weight").get<double>(), {}};
      for (const auto& o : r.options) row.means.emplace_back(o.id, c.at("mean_evaluations").at(o.id.str()).get<double>());
      r.rows.push_back(std::move(row));
    }
    for (const auto& o : r.options) r.option_scores.emplace_back(o.id, j.at("option_scores").at(o.id.str()).get<double>());
    r.ballot_count = j.at("ballot_count").get<std::size_t>();
    r.power_weighted = j.at("power_weighted").get<bool>();
    for (const auto& f : j.at("outliers").at("flags"))
      r.flags.push_back({VoterId{f.at("voter").get<std::string>()}, OptionId{f.at("option").get<std::string>()},
                         CriterionId{f.at("criterion").get<std::string>()}, f.at("value").get<int>(),
                         f.at("cell_mean").get<double>(), f.at("cell_stddev").get<double>(),
                         f.at("z_score").get<double>(), f.at("threshold_k").get<double>()});
    for (const auto& e : j.at("outliers").at("excluded"))
      r.exclusions.insert({VoterId{e.at("voter").get<std::string>()}, OptionId{e.at("option").get<std::string>()},
                           CriterionId{e.at("criterion").get<std::string>()}});
    r.outcome = detail::outcome_from_json(j.at("outcome"));
    if (!j.at("recommendation").is_null()) r.recommendation = detail::outcome_from_json(j.at("recommendation"));
    r.decided_by = detail::decided_by_from_string(j.at("decided_by").get<std::string>());
    r.overridden = j.at("overridden").get<bool>();
    r.actor = j.at("actor").get<std::string>();
    for (const auto& a : j.at("agents")) {
      AgentEvaluation e;
      e.agent = a.at("agent").get<std::string>();
      e.group = GroupId{a.at("group").get<std::string>()};
      e.matrix = matrix_from_json(a.at("matrix"));
      for (const auto& [o, row] : a.at("rationale").items())
        for (const auto& [c, text] : row.items()) e.rationale[Cell{OptionId{o}, CriterionId{c}}] = text.get<std::string>();
      for (const auto& c : a.at("clamped"))
        e.clamped.insert(Cell{OptionId{c.at("option").get<std::string>()}, CriterionId{c.at("criterion").get<std::string>()}});
      e.raw_response_digest = a.at("raw_response_digest").get<std::string>();
      r.agent_evaluations.push_back(std::move(e));
    }
    for (const auto& c : j.at("strengths")) r.strengths.emplace_back(c.get<std::string>());
    for (const auto& c : j.at("weaknesses")) r.weaknesses.emplace_back(c.get<std::string>());
    r.bands = {j.at("bands").at("strength").get<double>(), j.at("bands").at("weakness").get<double>()};
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed decision report: ") + e.what());
  }
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string option_label(const DecisionReport& r, const OptionId& id) {
  for (const auto& o : r.options)
    if (o.id == id) return o.label;
  return id.str();
}

}  // namespace detail

// Human-readable markdown rendering of the report.
inline std::string render_markdown(const DecisionReport& r) {
  std::ostringstream os;
  os << "# Decision report: " << (r.proposal.title.empty() ? r.proposal.id.str() : r.proposal.title) << "\n\n";
  os << "- Vote: `" << r.vote_id << "`\n";
  os << "- Mode: " << to_string(r.mode) << "\n";
  os << "- Outcome: **" << detail::option_label(r, r.outcome.winner) << "**"
     << (r.outcome.tie_broken ? " (tie broken conservatively)" : "") << "\n";
  os << "- Decided by: " << to_string(r.decided_by);
  if (!r.actor.empty()) os << " (" << r.actor << ")";
  if (r.overridden) os << ", overriding the recommendation";
  os << "\n";
  if (r.recommendation && r.decided_by == DecidedBy::Human)
    os << "- Recommendation: " << detail::option_label(r, r.recommendation->winner) << "\n";
  os << "- Evaluators: " << r.ballot_count << (r.power_weighted ? " (voting-power weighted)" : "") << "\n\n";

  os << "## Criterion breakdown\n\n| Criterion | Weight |";
  for (const auto& o : r.options) os << " " << o.label << " |";
  os << "\n|---|---:|";
  for (std::size_t i = 0; i < r.options.size(); ++i) os << "---:|";
  os << "\n";
  for (const auto& row : r.rows) {
    os << "| " << row.label << " | " << detail::fixed(row.weight) << " |";
    for (const auto& [_, v] : row.means) os << " " << detail::fixed(v) << " |";
    os << "\n";
  }
  os << "| **Total S** | |";
  for (const auto& [_, s] : r.option_scores) os << " **" << detail::fixed(s) << "** |";
  os << "\n\n";

  auto label_of = [&](const CriterionId& id) {
    for (const auto& row : r.rows)
      if (row.id == id) return row.label;
    return id.str();
  };
  os << "## Strengths (mean >= " << detail::fixed(r.bands.strength, 0) << ")\n\n";
  if (r.strengths.empty()) os << "- none\n";
  for (const auto& c : r.strengths) os << "- " << label_of(c) << "\n";
  os << "\n## Weaknesses (mean < " << detail::fixed(r.bands.weakness, 0) << ")\n\n";
  if (r.weaknesses.empty()) os << "- none\n";
  for (const auto& c : r.weaknesses) os << "- " << label_of(c) << "\n";

  os << "\n## Outliers\n\n";
  if (r.flags.empty()) {
    os << "No evaluations were flagged.\n";
  } else {
    os << "| Voter | Option | Criterion | Value | Mean | Std dev | z |\n|---|---|---|---:|---:|---:|---:|\n";
    for (const auto& f : r.flags)
      os << "| " << f.voter << " | " << f.option << " | " << f.criterion << " | " << f.value << " | "
         << detail::fixed(f.cell_mean) << " | " << detail::fixed(f.cell_stddev) << " | " << detail::fixed(f.z_score)
         << " |\n";
    os << "\n" << r.exclusions.size() << " evaluation(s) excluded from aggregation.\n";
  }

  if (!r.agent_evaluations.empty()) {
    os << "\n## Agent rationales\n";
    for (const auto& a : r.agent_evaluations) {
      os << "\n### " << a.agent << "\n\n";
      for (const auto& [cell, text] : a.rationale)
        os << "- " << detail::option_label(r, cell.option) << " / " << label_of(cell.criterion) << ": "
           << a.matrix.at(cell.option, cell.criterion) << (a.clamped.contains(cell) ? " (clamped)" : "") << " - "
           << (text.empty() ? "(no rationale)" : text) << "\n";
    }
  }
  return os.str();
}

// Aggregate, per-agent matrices and rationales offered to the human decider.
inline json recommendation_payload(const VoteCycle& vote) {
  if (!vote.recommendation()) throw StateError("vote '" + vote.id().str() + "' has no recommendation yet");
  json agents = json::array();
  for (const auto& a : vote.agent_evaluations()) agents.push_back(to_json(a));
  json flags = json::array();
  for (const auto& f : vote.flags()) flags.push_back(to_json(f));
  return {{"vote_id", vote.id().str()},
          {"state", to_string(vote.state())},
          {"recommendation", to_json(*vote.recommendation())},
          {"aggregate", to_json(*vote.aggregate_result())},
          {"outlier_flags", flags},
          {"agents", agents}};
}

}  // namespace qocdao
