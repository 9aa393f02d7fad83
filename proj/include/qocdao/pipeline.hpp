#pragma once

// Vote lifecycle for DAO proposals.
//
//   Open -> Closed -> Decided                          (HumanOnly, Autonomous)
//   Open -> Closed -> AwaitingHumanDecision -> Decided (HumanInTheLoop)
//
// Every transition is appended to the vote's hash-chained ledger. Humans
// submit ballots only in HumanOnly mode; in the agent modes the ballots
// come from stakeholder agents and the human input is the final verdict.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "qocdao/agents.hpp"
#include "qocdao/engine.hpp"
#include "qocdao/errors.hpp"
#include "qocdao/json_io.hpp"
#include "qocdao/ledger.hpp"
#include "qocdao/safeguards.hpp"

namespace qocdao {

enum class GovernanceMode { HumanOnly, HumanInTheLoop, Autonomous };

inline std::string to_string(GovernanceMode m) {
  switch (m) {
    case GovernanceMode::HumanOnly: return "human_only";
    case GovernanceMode::HumanInTheLoop: return "human_in_the_loop";
    case GovernanceMode::Autonomous: return "autonomous";
  }
  return "unknown";
}

inline GovernanceMode parse_mode(const std::string& s) {
  if (s == "human_only" || s == "1") return GovernanceMode::HumanOnly;
  if (s == "human_in_the_loop" || s == "2") return GovernanceMode::HumanInTheLoop;
  if (s == "autonomous" || s == "3") return GovernanceMode::Autonomous;
  throw ValidationError("mode must be human_only, human_in_the_loop or autonomous (or 1, 2, 3), got '" + s + "'");
}

struct BackendSettings {
  std::string kind = "mock";  // "mock" or "http"
  std::string base_url;
  std::string token_env = "QOCDAO_BACKEND_TOKEN";
};

inline std::unique_ptr<Backend> make_backend(const BackendSettings& s, const std::string& model) {
  if (s.kind == "mock") return std::make_unique<MockBackend>();
  if (s.kind == "http") return std::make_unique<HttpBackend>(HttpBackend::Settings{s.base_url, model, s.token_env});
  throw ValidationError("backend must be 'mock' or 'http', got '" + s.kind + "'");
}

struct ReportBands {
  double strength = 70.0;  // winner's mean >= strength: listed as a strength
  double weakness = 40.0;  // winner's mean < weakness: listed as a weakness
};

struct GovernanceConfig {
  std::vector<Criterion> criteria;
  WeightVector global_weights;
  SafeguardConfig safeguard;
  GovernanceMode mode = GovernanceMode::HumanOnly;
  std::vector<StakeholderGroup> stakeholder_groups;
  bool power_weighted = true;
  BackendSettings backend;
  AgentConfig agent;
  ReportBands bands;

  std::vector<std::string> violations() const {
    std::vector<std::string> problems;
    try {
      validate_criteria(criteria);
    } catch (const ValidationError& e) {
      problems.insert(problems.end(), e.violations().begin(), e.violations().end());
    }
    for (auto& p : global_weights.violations(criteria)) problems.push_back(std::move(p));
    for (auto& p : safeguard.violations()) problems.push_back(std::move(p));
    if (mode != GovernanceMode::HumanOnly && stakeholder_groups.empty())
      problems.push_back("mode " + to_string(mode) + " requires at least one stakeholder group");
    std::set<GroupId> ids;
    for (const auto& g : stakeholder_groups) {
      for (auto& p : g.violations()) problems.push_back(std::move(p));
      if (!ids.insert(g.id).second) problems.push_back("duplicate stakeholder group id '" + g.id.str() + "'");
    }
    if (backend.kind != "mock" && backend.kind != "http")
      problems.push_back("backend must be 'mock' or 'http'");
    if (backend.kind == "http" && backend.base_url.empty()) problems.push_back("http backend needs a base_url");
    if (agent.max_retries < 0) problems.push_back("agent max_retries must be >= 0");
    if (agent.max_in_flight == 0) problems.push_back("agent max_in_flight must be >= 1");
    if (!(bands.weakness <= bands.strength)) problems.push_back("report weakness band must not exceed strength band");
    return problems;
  }
};

inline json to_json(const GovernanceConfig& c) {
  json criteria = json::array();
  for (const auto& cr : c.criteria) criteria.push_back(to_json(cr));
  json groups = json::array();
  for (const auto& g : c.stakeholder_groups) groups.push_back(to_json(g));
  return {{"criteria", criteria},
          {"weights", to_json(c.global_weights)},
          {"weights_normalized", c.global_weights.normalized()},
          {"safeguard", to_json(c.safeguard)},
          {"mode", to_string(c.mode)},
          {"power_weighted", c.power_weighted},
          {"stakeholder_groups", groups},
          {"backend", {{"kind", c.backend.kind}, {"base_url", c.backend.base_url}, {"token_env", c.backend.token_env}}},
          {"agent",
           {{"batched", c.agent.batched},
            {"max_retries", c.agent.max_retries},
            {"max_in_flight", c.agent.max_in_flight},
            {"temperature", c.agent.temperature},
            {"max_output_tokens", c.agent.max_output_tokens},
            {"model", c.agent.model}}},
          {"report", {{"strength_band", c.bands.strength}, {"weakness_band", c.bands.weakness}}}};
}

// Reads the governance config document (see docs/formats.md). Structural
// problems throw ValidationError; semantic checks are left to violations().
inline GovernanceConfig config_from_json(const json& j) {
  const std::string ctx = "config";
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  GovernanceConfig c;
  for (const auto& cj : field<json>(j, "criteria", ctx)) c.criteria.push_back(criterion_from_json(cj));
  c.global_weights = weights_from_json(field<json>(j, "weights", ctx), field_or<bool>(j, "weights_normalized", false, ctx));
  if (j.contains("safeguard")) c.safeguard = safeguard_from_json(j["safeguard"]);
  c.mode = parse_mode(field_or<std::string>(j, "mode", "human_only", ctx));
  c.power_weighted = field_or<bool>(j, "power_weighted", true, ctx);
  if (j.contains("stakeholder_groups"))
    for (const auto& gj : j["stakeholder_groups"]) c.stakeholder_groups.push_back(group_from_json(gj));
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    c.backend.kind = field_or<std::string>(b, "kind", c.backend.kind, "backend");
    c.backend.base_url = field_or<std::string>(b, "base_url", "", "backend");
    c.backend.token_env = field_or<std::string>(b, "token_env", c.backend.token_env, "backend");
  }
  if (j.contains("agent")) {
    const auto& a = j["agent"];
    c.agent.batched = field_or<bool>(a, "batched", c.agent.batched, "agent");
    c.agent.max_retries = field_or<int>(a, "max_retries", c.agent.max_retries, "agent");
    c.agent.max_in_flight = field_or<std::size_t>(a, "max_in_flight", c.agent.max_in_flight, "agent");
    c.agent.temperature = field_or<double>(a, "temperature", c.agent.temperature, "agent");
    c.agent.max_output_tokens = field_or<int>(a, "max_output_tokens", c.agent.max_output_tokens, "agent");
    c.agent.model = field_or<std::string>(a, "model", c.agent.model, "agent");
  }
  if (j.contains("report")) {
    c.bands.strength = field_or<double>(j["report"], "strength_band", c.bands.strength, "report");
    c.bands.weakness = field_or<double>(j["report"], "weakness_band", c.bands.weakness, "report");
  }
  return c;
}

struct RequestedAmount {
  double value = 0.0;
  std::string currency;
};

struct Proposal {
  ProposalId id;
  std::string title;
  std::string body;
  std::string proposer;
  std::optional<RequestedAmount> requested_amount;
  std::string created_at;

  std::string text() const { return title + "\n\n" + body; }

  std::vector<std::string> violations() const {
    std::vector<std::string> problems;
    if (id.empty()) problems.push_back("proposal id is empty");
    if (body.empty()) problems.push_back("proposal body is empty");
    return problems;
  }
};

inline json to_json(const Proposal& p) {
  json j = {{"id", p.id.str()},
            {"title", p.title},
            {"body", p.body},
            {"proposer", p.proposer},
            {"created_at", p.created_at}};
  if (p.requested_amount)
    j["requested_amount"] = {{"value", p.requested_amount->value}, {"currency", p.requested_amount->currency}};
  return j;
}

inline Proposal proposal_from_json(const json& j) {
  const std::string ctx = "proposal";
  Proposal p;
  p.id = ProposalId{field<std::string>(j, "id", ctx)};
  p.title = field_or<std::string>(j, "title", "", ctx);
  p.body = field<std::string>(j, "body", ctx);
  p.proposer = field_or<std::string>(j, "proposer", "", ctx);
  p.created_at = field_or<std::string>(j, "created_at", "", ctx);
  if (j.contains("requested_amount") && !j["requested_amount"].is_null()) {
    const auto& a = j["requested_amount"];
    p.requested_amount = RequestedAmount{field<double>(a, "value", "requested_amount"),
                                         field_or<std::string>(a, "currency", "", "requested_amount")};
  }
  return p;
}

enum class VoteState { Open, Closed, AwaitingHumanDecision, Decided };
enum class DecidedBy { Aggregate, Human, AutonomousAgentAggregate };

inline std::string to_string(VoteState s) {
  switch (s) {
    case VoteState::Open: return "open";
    case VoteState::Closed: return "closed";
    case VoteState::AwaitingHumanDecision: return "awaiting_human_decision";
    case VoteState::Decided: return "decided";
  }
  return "unknown";
}

inline std::string to_string(DecidedBy d) {
  switch (d) {
    case DecidedBy::Aggregate: return "aggregate";
    case DecidedBy::Human: return "human";
    case DecidedBy::AutonomousAgentAggregate: return "autonomous_agent_aggregate";
  }
  return "unknown";
}

struct FinalDecision {
  Outcome outcome;
  DecidedBy decided_by = DecidedBy::Aggregate;
  bool overridden = false;
  std::string actor;
};

class VoteCycle {
 public:
  static VoteCycle open(VoteId id, Proposal proposal, GovernanceConfig config, Clock clock = utc_now) {
    std::vector<std::string> problems;
    if (id.empty()) problems.push_back("vote id is empty");
    for (auto& p : proposal.violations()) problems.push_back(std::move(p));
    for (auto& p : config.violations()) problems.push_back(std::move(p));
    if (!problems.empty()) throw ValidationError(std::move(problems));

    VoteCycle v(std::move(id), std::move(proposal), std::move(config), std::move(clock));
    v.config_digest_ = sha256_hex(to_json(v.config_).dump());
    v.log(LedgerEvent::VoteOpened, {{"vote_id", v.id_.str()},
                                    {"proposal_id", v.proposal_.id.str()},
                                    {"proposal_digest", sha256_hex(to_json(v.proposal_).dump())},
                                    {"config_digest", v.config_digest_},
                                    {"mode", to_string(v.config_.mode)}});
    return v;
  }

  // Latest ballot per voter wins. Returns the number of distinct ballots.
  std::size_t submit_ballot(Ballot ballot) {
    require_state(VoteState::Open, "submit a ballot");
    if (config_.mode != GovernanceMode::HumanOnly)
      throw StateError("mode " + to_string(config_.mode) + " takes agent evaluations, not human ballots");
    std::vector<std::string> problems;
    if (ballot.voter.empty()) problems.push_back("ballot voter id is empty");
    if (!(ballot.voting_power >= 0.0)) problems.push_back("voting power must be >= 0");
    if (ballot.weights) problems.push_back("DAO ballots carry no weight vector; global weights apply");
    for (auto& p : ballot.evaluations.violations(options_, config_.criteria)) problems.push_back(std::move(p));
    if (!problems.empty()) throw ValidationError(std::move(problems));

    ballot.submitted_at = clock_();
    auto existing = std::ranges::find(ballots_, ballot.voter, &Ballot::voter);
    const bool replaced = existing != ballots_.end();
    if (replaced) ballots_.erase(existing);
    log(LedgerEvent::BallotSubmitted, {{"voter", ballot.voter.str()},
                                       {"voting_power", ballot.voting_power},
                                       {"evaluations_digest", sha256_hex(to_json(ballot.evaluations).dump())},
                                       {"replaced", replaced},
                                       {"source", "human"}},
        ballot.submitted_at);
    ballots_.push_back(std::move(ballot));
    return ballots_.size();
  }

  // Runs one agent per matching stakeholder group. Re-running replaces the
  // previous agent ballots. Nothing is stored if any agent fails.
  std::size_t evaluate_agents(Backend& backend) {
    require_state(VoteState::Open, "run agent evaluation");
    if (config_.mode == GovernanceMode::HumanOnly) throw StateError("mode human_only has no AI agents");
    const auto groups = identify_groups(proposal_.text(), config_.stakeholder_groups);

    std::vector<AgentEvaluation> evaluations;
    for (const auto& g : groups) {
      const auto persona = make_persona(g, backend.id());
      evaluations.push_back(
          evaluate(persona, proposal_.text(), options_, config_.criteria, backend, config_.agent, id_.str()));
    }
    agent_evaluations_ = std::move(evaluations);
    agent_ballots_.clear();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto ts = clock_();
      agent_ballots_.push_back(agent_ballot(agent_evaluations_[i], groups[i], ts));
      log(LedgerEvent::BallotSubmitted, {{"voter", agent_evaluations_[i].agent},
                                         {"voting_power", groups[i].voting_power},
                                         {"evaluations_digest", sha256_hex(to_json(agent_evaluations_[i].matrix).dump())},
                                         {"raw_response_digest", agent_evaluations_[i].raw_response_digest},
                                         {"source", "agent"}},
          ts);
    }
    return agent_ballots_.size();
  }

  // Closes the vote, filters outliers, aggregates and decides. In the agent
  // modes, `backend` is used to run the agents if that has not happened yet.
  // All computation happens before any state changes.
  void close_and_aggregate(Backend* backend = nullptr) {
    require_state(VoteState::Open, "close");
    if (config_.mode != GovernanceMode::HumanOnly && agent_ballots_.empty() && backend) evaluate_agents(*backend);
    const auto& evaluators = config_.mode == GovernanceMode::HumanOnly ? ballots_ : agent_ballots_;
    if (evaluators.empty()) throw DomainError("vote '" + id_.str() + "' has no evaluators");

    auto flags = detect_outliers(evaluators, config_.safeguard);
    const auto grid = evaluators.front().evaluations.grid();
    auto exclusions = apply_exclusions(flags, config_.safeguard, grid);
    auto result = aggregate(evaluators, options_, config_.criteria, config_.global_weights.weights(),
                            config_.power_weighted, exclusions);
    const auto outcome = decide(result.option_scores, QuestionMode::DaoBinary);

    state_ = VoteState::Closed;
    log(LedgerEvent::VoteClosed, {{"ballot_count", evaluators.size()}});
    json excluded = json::array();
    for (const auto& e : exclusions) excluded.push_back(to_json(e));
    log(LedgerEvent::OutliersApplied, {{"flag_count", flags.size()}, {"excluded", excluded}});
    flags_ = std::move(flags);
    aggregate_ = std::move(result);
    recommendation_ = outcome;

    json scores = json::object();
    for (const auto& [id, s] : aggregate_->option_scores) scores[id.str()] = s;
    switch (config_.mode) {
      case GovernanceMode::HumanOnly:
        final_ = FinalDecision{outcome, DecidedBy::Aggregate, false, {}};
        state_ = VoteState::Decided;
        log(LedgerEvent::DecisionRecorded, decision_payload(scores));
        break;
      case GovernanceMode::HumanInTheLoop:
        state_ = VoteState::AwaitingHumanDecision;
        log(LedgerEvent::RecommendationIssued, {{"outcome", to_json(outcome)}, {"option_scores", scores}});
        break;
      case GovernanceMode::Autonomous:
        final_ = FinalDecision{outcome, DecidedBy::AutonomousAgentAggregate, false, {}};
        state_ = VoteState::Decided;
        log(LedgerEvent::DecisionRecorded, decision_payload(scores));
        break;
    }
  }

  void record_human_decision(const OptionId& choice, const std::string& actor) {
    if (config_.mode != GovernanceMode::HumanInTheLoop)
      throw StateError("human decisions are only accepted in mode human_in_the_loop, vote '" + id_.str() + "' is " +
                       to_string(config_.mode));
    require_state(VoteState::AwaitingHumanDecision, "record a human decision");
    if (!options_.find(choice)) throw ValidationError("decision must be 'yes' or 'no', got '" + choice.str() + "'");
    if (actor.empty()) throw ValidationError("decision actor id is empty");

    final_ = FinalDecision{Outcome{choice, false}, DecidedBy::Human, choice != recommendation_->winner, actor};
    state_ = VoteState::Decided;
    json scores = json::object();
    for (const auto& [id, s] : aggregate_->option_scores) scores[id.str()] = s;
    log(LedgerEvent::DecisionRecorded, decision_payload(scores));
  }

  // Appends a report_emitted record carrying the report digest, once per
  // distinct digest.
  void note_report(const std::string& report_digest) {
    require_state(VoteState::Decided, "emit a report");
    for (const auto& r : ledger_.records())
      if (r.type == to_string(LedgerEvent::ReportEmitted) && r.payload.value("report_digest", "") == report_digest)
        return;
    log(LedgerEvent::ReportEmitted, {{"report_digest", report_digest}});
  }

  const VoteId& id() const noexcept { return id_; }
  const Proposal& proposal() const noexcept { return proposal_; }
  const GovernanceConfig& config() const noexcept { return config_; }
  const std::string& config_digest() const noexcept { return config_digest_; }
  const OptionSet& options() const noexcept { return options_; }
  VoteState state() const noexcept { return state_; }
  const std::vector<Ballot>& ballots() const noexcept { return ballots_; }
  const std::vector<Ballot>& agent_ballots() const noexcept { return agent_ballots_; }
  const std::vector<AgentEvaluation>& agent_evaluations() const noexcept { return agent_evaluations_; }
  const std::vector<OutlierFlag>& flags() const noexcept { return flags_; }
  const std::optional<AggregateResult>& aggregate_result() const noexcept { return aggregate_; }
  const std::optional<Outcome>& recommendation() const noexcept { return recommendation_; }
  const std::optional<FinalDecision>& final_decision() const noexcept { return final_; }
  const Ledger& ledger() const noexcept { return ledger_; }

  std::size_t evaluator_count() const noexcept {
    return config_.mode == GovernanceMode::HumanOnly ? ballots_.size() : agent_ballots_.size();
  }

 private:
  VoteCycle(VoteId id, Proposal proposal, GovernanceConfig config, Clock clock)
      : id_(std::move(id)),
        proposal_(std::move(proposal)),
        config_(std::move(config)),
        options_(OptionSet::binary()),
        clock_(std::move(clock)) {}

  void require_state(VoteState expected, const std::string& action) const {
    if (state_ != expected)
      throw StateError("cannot " + action + ": vote '" + id_.str() + "' is " + to_string(state_));
  }

  json decision_payload(const json& scores) const {
    return {{"outcome", to_json(final_->outcome)},
            {"decided_by", to_string(final_->decided_by)},
            {"overridden", final_->overridden},
            {"actor", final_->actor},
            {"option_scores", scores}};
  }

  void log(LedgerEvent type, json payload, std::string timestamp = {}) {
    ledger_.append(type, std::move(payload), timestamp.empty() ? clock_() : std::move(timestamp));
  }

  VoteId id_;
  Proposal proposal_;
  GovernanceConfig config_;
  std::string config_digest_;
  OptionSet options_;
  Clock clock_;
  VoteState state_ = VoteState::Open;
  std::vector<Ballot> ballots_;
  std::vector<AgentEvaluation> agent_evaluations_;
  std::vector<Ballot> agent_ballots_;
  std::vector<OutlierFlag> flags_;
  std::optional<AggregateResult> aggregate_;
  std::optional<Outcome> recommendation_;
  std::optional<FinalDecision> final_;
  Ledger ledger_;
};

// Proposals and votes keyed by id. Each vote is guarded by its own mutex, so
// transitions on one vote are serialized while distinct votes proceed
// independently.
class VoteStore {
 public:
  explicit VoteStore(Clock clock = utc_now) : clock_(std::move(clock)) {}

  void add_proposal(Proposal p) {
    if (auto problems = p.violations(); !problems.empty()) throw ValidationError(std::move(problems));
    if (p.created_at.empty()) p.created_at = clock_();
    std::unique_lock lock(mutex_);
    if (proposals_.contains(p.id)) throw ConflictError("proposal '" + p.id.str() + "' already exists");
    proposals_.emplace(p.id, std::move(p));
  }

  Proposal proposal(const ProposalId& id) const {
    std::shared_lock lock(mutex_);
    auto it = proposals_.find(id);
    if (it == proposals_.end()) throw NotFoundError("unknown proposal '" + id.str() + "'");
    return it->second;
  }

  // Opens a vote. An empty id is replaced with the next "vote-<n>".
  VoteId open_vote(VoteId id, const ProposalId& proposal_id, GovernanceConfig config) {
    auto p = proposal(proposal_id);
    std::unique_lock lock(mutex_);
    if (id.empty()) {
      do {
        id = VoteId{"vote-" + std::to_string(++counter_)};
      } while (votes_.contains(id));
    }
    if (votes_.contains(id)) throw ConflictError("vote '" + id.str() + "' already exists");
    auto entry = std::make_shared<Entry>(VoteCycle::open(id, std::move(p), std::move(config), clock_));
    votes_.emplace(id, std::move(entry));
    return id;
  }

  // Runs fn(VoteCycle&) under the vote's writer lock.
  template <typename Fn>
  decltype(auto) with_vote(const VoteId& id, Fn&& fn) {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return std::forward<Fn>(fn)(entry->vote);
  }

  template <typename Fn>
  decltype(auto) read_vote(const VoteId& id, Fn&& fn) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return std::forward<Fn>(fn)(std::as_const(entry->vote));
  }

 private:
  struct Entry {
    explicit Entry(VoteCycle v) : vote(std::move(v)) {}
    std::mutex mutex;
    VoteCycle vote;
  };

  std::shared_ptr<Entry> find(const VoteId& id) const {
    std::shared_lock lock(mutex_);
    auto it = votes_.find(id);
    if (it == votes_.end()) throw NotFoundError("unknown vote '" + id.str() + "'");
    return it->second;
  }

  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<ProposalId, Proposal> proposals_;
  std::map<VoteId, std::shared_ptr<Entry>> votes_;
  std::size_t counter_ = 0;
};

}  // namespace qocdao
