#pragma once

// HTTP surface over the vote store. All routes live under /v1; every vote
// response carries the vote's lifecycle state. POST requests need
// "Authorization: Bearer <token>" with a token from the configured list.

#include <cstdlib>
#include <map>
#include <memory>
#include <regex>
#include <string>
#include <utility>

#include <httplib.h>

#include "qocdao/pipeline.hpp"
#include "qocdao/report.hpp"

namespace qocdao {

// Parses "token:actor,token2:actor2". A bare token maps to actor "operator".
inline std::map<std::string, std::string> parse_token_list(const std::string& spec) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find(',', start);
    if (end == std::string::npos) end = spec.size();
    auto item = detail::trim(std::string_view(spec).substr(start, end - start));
    if (!item.empty()) {
      auto colon = item.find(':');
      if (colon == std::string::npos) {
        out[item] = "operator";
      } else {
        out[detail::trim(item.substr(0, colon))] = detail::trim(item.substr(colon + 1));
      }
    }
    start = end + 1;
  }
  return out;
}

struct ServiceOptions {
  GovernanceConfig default_config;
  std::map<std::string, std::string> tokens;  // bearer token -> actor id
  std::shared_ptr<Backend> backend;
  Clock clock = utc_now;
};

class Service {
 public:
  explicit Service(ServiceOptions options)
      : options_(std::move(options)), store_(options_.clock) {
    if (!options_.backend) options_.backend = std::make_shared<MockBackend>();
    routes();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  httplib::Server& server() noexcept { return server_; }
  VoteStore& store() noexcept { return store_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static void send(Res& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json error_body(const std::string& code, const std::string& message) {
    return {{"error", code}, {"message", message}};
  }

  // Maps library errors to HTTP statuses.
  template <typename Fn>
  static void guarded(Res& res, Fn&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      auto body = error_body("validation", e.what());
      body["violations"] = e.violations();
      send(res, 400, body);
    } catch (const ParseError& e) {
      send(res, 400, error_body("validation", e.what()));
    } catch (const json::exception& e) {
      send(res, 400, error_body("validation", std::string("malformed JSON body: ") + e.what()));
    } catch (const NotFoundError& e) {
      send(res, 404, error_body("not_found", e.what()));
    } catch (const StateError& e) {
      send(res, 409, error_body("state", e.what()));
    } catch (const ConflictError& e) {
      send(res, 409, error_body("conflict", e.what()));
    } catch (const BackendError& e) {
      send(res, 502, error_body("backend", e.what()));
    } catch (const EvaluationError& e) {
      send(res, 502, error_body("backend", e.what()));
    } catch (const DomainError& e) {
      send(res, 400, error_body("domain", e.what()));
    }
  }

  // Returns the actor for a valid bearer token, or answers 401.
  std::optional<std::string> authorize(const Req& req, Res& res) const {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (header.starts_with(kPrefix)) {
      auto it = options_.tokens.find(header.substr(kPrefix.size()));
      if (it != options_.tokens.end()) return it->second;
    }
    send(res, 401, error_body("unauthorized", "missing or invalid bearer token"));
    return std::nullopt;
  }

  static json parse_body(const Req& req) {
    if (req.body.empty()) return json::object();
    return parse_json_text(req.body, "request body");
  }

  static json summary(const VoteCycle& v) {
    json j = {{"vote_id", v.id().str()},
              {"proposal_id", v.proposal().id.str()},
              {"state", to_string(v.state())},
              {"mode", to_string(v.config().mode)},
              {"ballot_count", v.ballots().size()},
              {"agent_ballot_count", v.agent_ballots().size()},
              {"ledger_length", v.ledger().size()}};
    if (v.aggregate_result()) j["aggregate"] = to_json(*v.aggregate_result());
    if (v.recommendation()) j["recommendation"] = to_json(*v.recommendation());
    if (v.final_decision()) {
      const auto& f = *v.final_decision();
      j["final"] = {{"outcome", to_json(f.outcome)},
                    {"decided_by", to_string(f.decided_by)},
                    {"overridden", f.overridden},
                    {"actor", f.actor}};
    }
    return j;
  }

  static VoteId vote_id(const Req& req) { return VoteId{req.matches[1].str()}; }

  void routes() {
    server_.Get("/v1/health", [](const Req&, Res& res) { send(res, 200, {{"status", "ok"}}); });
    server_.Get("/v1/ready", [this](const Req&, Res& res) {
      send(res, 200, {{"status", "ready"}, {"backend", options_.backend->id()}});
    });

    server_.Post("/v1/proposals", [this](const Req& req, Res& res) {
      if (!authorize(req, res)) return;
      guarded(res, [&] {
        auto p = proposal_from_json(parse_body(req));
        store_.add_proposal(p);
        send(res, 201, {{"proposal", to_json(store_.proposal(p.id))}});
      });
    });

    server_.Post("/v1/votes", [this](const Req& req, Res& res) {
      if (!authorize(req, res)) return;
      guarded(res, [&] {
        const auto body = parse_body(req);
        auto config = body.contains("config") ? config_from_json(body["config"]) : options_.default_config;
        if (body.contains("mode")) config.mode = parse_mode(body["mode"].get<std::string>());
        const auto id = store_.open_vote(VoteId{body.value("vote_id", "")},
                                         ProposalId{field<std::string>(body, "proposal_id", "open vote")},
                                         std::move(config));
        send(res, 201, store_.read_vote(id, summary));
      });
    });

    server_.Get(R"(/v1/votes/([^/]+))", [this](const Req& req, Res& res) {
      guarded(res, [&] { send(res, 200, store_.read_vote(vote_id(req), summary)); });
    });

    server_.Post(R"(/v1/votes/([^/]+)/ballots)", [this](const Req& req, Res& res) {
      if (!authorize(req, res)) return;
      guarded(res, [&] {
        auto ballot = ballot_from_json(parse_body(req));
        send(res, 200, store_.with_vote(vote_id(req), [&](VoteCycle& v) {
          v.submit_ballot(std::move(ballot));
          return summary(v);
        }));
      });
    });

    server_.Post(R"(/v1/votes/([^/]+)/agents)", [this](const Req& req, Res& res) {
      if (!authorize(req, res)) return;
      guarded(res, [&] {
        send(res, 200, store_.with_vote(vote_id(req), [&](VoteCycle& v) {
          v.evaluate_agents(*options_.backend);
          auto j = summary(v);
          json agents = json::array();
          for (const auto& a : v.agent_evaluations()) agents.push_back(to_json(a));
          j["agents"] = agents;
          return j;
        }));
      });
    });

    // Closing an already-closed vote returns the stored result unchanged.
    server_.Post(R"(/v1/votes/([^/]+)/close)", [this](const Req& req, Res& res) {
      if (!authorize(req, res)) return;
      guarded(res, [&] {
        send(res, 200, store_.with_vote(vote_id(req), [&](VoteCycle& v) {
          const bool already = v.state() != VoteState::Open;
          if (!already) v.close_and_aggregate(options_.backend.get());
          auto j = summary(v);
          j["already_closed"] = already;
          return j;
        }));
      });
    });

    server_.Get(R"(/v1/votes/([^/]+)/recommendation)", [this](const Req& req, Res& res) {
      guarded(res, [&] { send(res, 200, store_.read_vote(vote_id(req), recommendation_payload)); });
    });

    server_.Post(R"(/v1/votes/([^/]+)/decision)", [this](const Req& req, Res& res) {
      auto actor = authorize(req, res);
      if (!actor) return;
      guarded(res, [&] {
        const auto body = parse_body(req);
        const auto outcome = detail::lowercase(field<std::string>(body, "outcome", "decision"));
        send(res, 200, store_.with_vote(vote_id(req), [&](VoteCycle& v) {
          v.record_human_decision(OptionId{outcome}, *actor);
          return summary(v);
        }));
      });
    });

    server_.Get(R"(/v1/votes/([^/]+)/report)", [this](const Req& req, Res& res) {
      guarded(res, [&] {
        send(res, 200, store_.with_vote(vote_id(req), [&](VoteCycle& v) {
          const auto report = generate_report(v);
          const auto canonical = canonical_report(report);
          v.note_report(sha256_hex(canonical));
          return json{{"state", to_string(v.state())},
                      {"report", to_json(report)},
                      {"canonical", canonical},
                      {"markdown", render_markdown(report)}};
        }));
      });
    });

    server_.Get(R"(/v1/votes/([^/]+)/ledger)", [this](const Req& req, Res& res) {
      guarded(res, [&] {
        send(res, 200, store_.read_vote(vote_id(req), [](const VoteCycle& v) {
          json records = json::array();
          for (const auto& r : v.ledger().records()) records.push_back(json::parse(r.to_line()));
          return json{{"state", to_string(v.state())}, {"records", records}, {"ndjson", v.ledger().to_ndjson()}};
        }));
      });
    });

    server_.Get(R"(/v1/votes/([^/]+)/ledger/verify)", [this](const Req& req, Res& res) {
      guarded(res, [&] {
        send(res, 200, store_.read_vote(vote_id(req), [](const VoteCycle& v) {
          const auto check = v.ledger().verify();
          return json{{"state", to_string(v.state())},
                      {"valid", check.valid},
                      {"first_broken_seq", check.first_broken_seq ? json(*check.first_broken_seq) : json()},
                      {"reason", check.reason}};
        }));
      });
    });
  }

  ServiceOptions options_;
  VoteStore store_;
  httplib::Server server_;
};

}  // namespace qocdao
