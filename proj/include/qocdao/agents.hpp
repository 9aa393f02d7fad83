#pragma once

// Stakeholder-aligned AI evaluators. Each selected stakeholder group gets one
// agent persona; the agent scores every (option, criterion) cell through a
// text-model backend and its output becomes an ordinary Ballot.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "qocdao/engine.hpp"
#include "qocdao/errors.hpp"
#include "qocdao/hash.hpp"

namespace qocdao {

struct StakeholderGroup {
  GroupId id;
  std::string name;
  std::string perspective;
  std::vector<std::string> keywords;  // empty: always selected
  double voting_power = 1.0;

  std::vector<std::string> violations() const {
    std::vector<std::string> problems;
    if (id.empty()) problems.push_back("stakeholder group with empty id");
    if (perspective.empty()) problems.push_back("stakeholder group '" + id.str() + "' has an empty perspective");
    if (!(voting_power >= 0.0))
      problems.push_back("stakeholder group '" + id.str() + "' has negative voting power");
    return problems;
  }
};

namespace detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Runs fn(i) for i in [0, n) on at most `limit` threads. Exceptions are
// rethrown after all work finishes, lowest index first.
template <typename Fn>
void bounded_parallel_for(std::size_t n, std::size_t limit, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(limit, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Groups whose keywords occur in the proposal (case-insensitive substring),
// plus every keyword-free group, in configuration order.
inline std::vector<StakeholderGroup> identify_groups(std::string_view proposal_text,
                                                     std::span<const StakeholderGroup> groups) {
  if (groups.empty()) throw DomainError("no stakeholder groups configured");
  const auto text = detail::lowercase(proposal_text);
  std::vector<StakeholderGroup> selected;
  for (const auto& g : groups) {
    const bool always_on = g.keywords.empty();
    const bool matched = std::ranges::any_of(g.keywords, [&](const std::string& k) {
      auto key = detail::lowercase(detail::trim(k));
      return !key.empty() && text.find(key) != std::string::npos;
    });
    if (always_on || matched) selected.push_back(g);
  }
  if (selected.empty()) throw DomainError("no stakeholder group matches the proposal");
  return selected;
}

inline constexpr std::string_view kPromptTemplateVersion = "qoc-agent-v1";

struct AgentPersona {
  std::string id;  // "agent:<group id>"
  StakeholderGroup group;
  std::string instructions;
  std::string backend_ref;
};

inline AgentPersona make_persona(const StakeholderGroup& group, std::string backend_ref) {
  std::ostringstream os;
  os << "You are an evaluator representing the stakeholder group \"" << group.name << "\" of a DAO.\n"
     << "Perspective: " << group.perspective << "\n"
     << "Judge proposals strictly from this perspective and the DAO's stated criteria.\n"
     << "[template " << kPromptTemplateVersion << "]";
  return {"agent:" + group.id.str(), group, os.str(), std::move(backend_ref)};
}

struct BackendRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int max_output_tokens = 300;
  std::string request_id;
};

struct BackendResponse {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency_ms = 0.0;
};

// Implementations must be safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse complete(const BackendRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Deterministic stand-in for a model: score = fnv1a64(prompt) mod 101.
// Batched prompts (lines "CELL <n>: ...") get one score per cell, hashed from
// the prompt followed by "#<n>".
class MockBackend final : public Backend {
 public:
  BackendResponse complete(const BackendRequest& request) override {
    static const std::regex kCellLine(R"(^CELL (\d+):)", std::regex::multiline);
    std::ostringstream os;
    std::size_t cells = 0;
    for (auto it = std::sregex_iterator(request.prompt.begin(), request.prompt.end(), kCellLine);
         it != std::sregex_iterator(); ++it) {
      const auto n = (*it)[1].str();
      const auto s = mock_score(request.prompt + "#" + n);
      os << "CELL " << n << " SCORE=" << s << " RATIONALE=Mock assessment assigns " << s << ".\n";
      ++cells;
    }
    if (cells == 0) {
      const auto s = mock_score(request.prompt);
      os << "RATIONALE: Mock assessment assigns " << s << ".\nSCORE=" << s << "\n";
    }
    BackendResponse r;
    r.text = os.str();
    r.prompt_tokens = request.prompt.size() / 4;
    r.completion_tokens = r.text.size() / 4;
    return r;
  }

  std::string id() const override { return "mock"; }

  static int mock_score(std::string_view prompt) { return static_cast<int>(fnv1a64(prompt) % 101); }
};

// Chat-completion endpoint. The bearer token is read from an environment
// variable at call time and never stored in transcripts.
class HttpBackend final : public Backend {
 public:
  struct Settings {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string model;
    std::string token_env = "QOCDAO_BACKEND_TOKEN";
    int timeout_seconds = 60;
  };

  explicit HttpBackend(Settings s) : settings_(std::move(s)) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(settings_.base_url, m, kUrl))
      throw ValidationError("backend base URL must be http(s)://host[:port][/path], got '" + settings_.base_url + "'");
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "";
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
  }

  BackendResponse complete(const BackendRequest& request) override {
    nlohmann::json body = {
        {"model", request.model.empty() ? settings_.model : request.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
    httplib::Headers headers{{"X-Request-Id", request.request_id}};
    if (const char* token = std::getenv(settings_.token_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);

    httplib::Client client(origin_);
    client.set_read_timeout(settings_.timeout_seconds, 0);
    client.set_connection_timeout(10, 0);
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_ + "/chat/completions", headers, body.dump(), "application/json");
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
    if (!res) throw BackendError("backend transport failure: " + httplib::to_string(res.error()), true);
    if (res->status >= 500 || res->status == 429)
      throw BackendError("backend returned HTTP " + std::to_string(res->status), true);
    if (res->status != 200) throw BackendError("backend returned HTTP " + std::to_string(res->status), false);

    BackendResponse out;
    out.latency_ms = elapsed.count();
    try {
      auto j = nlohmann::json::parse(res->body);
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage")) {
        out.prompt_tokens = j["usage"].value("prompt_tokens", 0u);
        out.completion_tokens = j["usage"].value("completion_tokens", 0u);
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("unexpected backend response body: ") + e.what(), false);
    }
    if (out.text.empty()) throw BackendError("backend returned empty text", true);
    return out;
  }

  std::string id() const override { return "http:" + settings_.model; }

 private:
  Settings settings_;
  std::string origin_;
  std::string path_;
};

struct ParsedScore {
  int score = 0;
  int raw = 0;
  bool clamped = false;
  std::string rationale;
};

namespace detail {

inline ParsedScore clamp_score(const std::string& digits, std::string rationale) {
  ParsedScore p;
  p.rationale = std::move(rationale);
  long long v = 0;
  try {
    v = std::stoll(digits);
  } catch (const std::out_of_range&) {
    v = digits.starts_with('-') ? -1 : kMaxScore + 1;
  }
  p.raw = static_cast<int>(std::clamp<long long>(v, INT32_MIN, INT32_MAX));
  p.score = static_cast<int>(std::clamp<long long>(v, kMinScore, kMaxScore));
  p.clamped = p.score != v;
  return p;
}

}  // namespace detail

// Reads the last "SCORE=<int>" line (also accepts "score: <int>", any case)
// and the last "RATIONALE:" line. Returns nullopt when no score line exists.
inline std::optional<ParsedScore> parse_cell_response(const std::string& text) {
  static const std::regex kScore(R"(^\s*score\s*[=:]\s*([+-]?\d+)\s*\.?\s*$)", std::regex::icase);
  static const std::regex kRationale(R"(^\s*rationale\s*[=:]\s*(.*?)\s*$)", std::regex::icase);
  std::optional<std::string> digits;
  std::string rationale;
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::regex_match(line, m, kScore)) {
      digits = m[1].str();
    } else if (std::regex_match(line, m, kRationale)) {
      rationale = m[1].str();
    }
  }
  if (!digits) return std::nullopt;
  return detail::clamp_score(*digits, rationale);
}

// Batched responses carry lines "CELL <n> SCORE=<int> RATIONALE=<text>".
// Returns nullopt unless every cell 1..n is present.
inline std::optional<std::vector<ParsedScore>> parse_batched_response(const std::string& text, std::size_t n) {
  static const std::regex kLine(R"(^\s*cell\s+(\d+)\s+score\s*[=:]\s*([+-]?\d+)(?:\s+rationale\s*[=:]\s*(.*?))?\s*$)",
                                std::regex::icase);
  std::vector<std::optional<ParsedScore>> cells(n);
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!std::regex_match(line, m, kLine)) continue;
    std::size_t idx = 0;
    try {
      idx = std::stoul(m[1].str());
    } catch (const std::exception&) {
      continue;
    }
    if (idx == 0 || idx > n) continue;
    cells[idx - 1] = detail::clamp_score(m[2].str(), m[3].matched ? m[3].str() : "");
  }
  std::vector<ParsedScore> out;
  out.reserve(n);
  for (auto& c : cells) {
    if (!c) return std::nullopt;
    out.push_back(std::move(*c));
  }
  return out;
}

struct AgentConfig {
  bool batched = false;
  int max_retries = 2;
  std::size_t max_in_flight = 4;
  double temperature = 0.0;
  int max_output_tokens = 300;
  std::string model = "mock";
};

struct Transcript {
  std::string agent;
  std::string request_id;
  int attempt = 0;
  std::string model;
  double temperature = 0.0;
  std::string prompt;
  std::string response;
};

inline nlohmann::ordered_json to_ordered_json(const Transcript& t) {
  return {{"agent", t.agent},       {"request_id", t.request_id}, {"attempt", t.attempt},
          {"model", t.model},       {"temperature", t.temperature}, {"prompt", t.prompt},
          {"response", t.response}};
}

// Digest of an agent's exchanges, in the order they were recorded.
inline std::string transcript_digest(std::span<const Transcript> transcripts) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : transcripts) arr.push_back(to_ordered_json(t));
  return sha256_hex(arr.dump());
}

struct AgentEvaluation {
  std::string agent;
  GroupId group;
  EvaluationMatrix matrix;
  std::map<Cell, std::string> rationale;
  std::set<Cell> clamped;
  std::string raw_response_digest;
  std::vector<Transcript> transcripts;
};

inline bool verify_transcripts(const AgentEvaluation& e) {
  return transcript_digest(e.transcripts) == e.raw_response_digest;
}

inline std::string render_cell_prompt(const AgentPersona& persona, std::string_view proposal, const Option& option,
                                      const Criterion& criterion) {
  std::ostringstream os;
  os << persona.instructions << "\n\n"
     << "Proposal:\n" << proposal << "\n\n"
     << "Question: Should the DAO approve or support this proposal?\n"
     << "Option under evaluation: " << option.label << "\n"
     << "Criterion: " << criterion.label;
  if (!criterion.description.empty()) os << " - " << criterion.description;
  os << "\n\n"
     << "Rate how well this option satisfies the criterion, as an integer from 0 (not at all) to 100 (fully).\n"
     << "Answer with one line \"RATIONALE: <one sentence>\" followed by a final line \"SCORE=<integer>\".";
  return os.str();
}

inline std::string render_batched_prompt(const AgentPersona& persona, std::string_view proposal,
                                         std::span<const std::pair<const Option*, const Criterion*>> cells) {
  std::ostringstream os;
  os << persona.instructions << "\n\n"
     << "Proposal:\n" << proposal << "\n\n"
     << "Question: Should the DAO approve or support this proposal?\n"
     << "Rate each numbered cell below as an integer from 0 (not at all) to 100 (fully).\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    os << "CELL " << (i + 1) << ": option=" << cells[i].first->label << "; criterion=" << cells[i].second->label;
    if (!cells[i].second->description.empty()) os << " (" << cells[i].second->description << ")";
    os << "\n";
  }
  os << "Answer with one line per cell: \"CELL <n> SCORE=<integer> RATIONALE=<one sentence>\".";
  return os.str();
}

// Scores every cell for one agent. Malformed responses are retried up to
// config.max_retries times; transport failures propagate as BackendError.
// `request_prefix` scopes request ids, normally the vote id.
inline AgentEvaluation evaluate(const AgentPersona& persona, std::string_view proposal, const OptionSet& options,
                                std::span<const Criterion> criteria, Backend& backend, const AgentConfig& config = {},
                                std::string_view request_prefix = "vote") {
  if (criteria.empty()) throw DomainError("agent evaluation needs at least one criterion");

  std::vector<std::pair<const Option*, const Criterion*>> cells;
  for (const auto& o : options)
    for (const auto& c : criteria) cells.emplace_back(&o, &c);

  AgentEvaluation out;
  out.agent = persona.id;
  out.group = persona.group.id;

  auto request_for = [&](std::string prompt, const std::string& key, int attempt) {
    BackendRequest r;
    r.model = config.model;
    r.prompt = std::move(prompt);
    r.temperature = config.temperature;
    r.max_output_tokens = config.max_output_tokens;
    r.request_id = std::string(request_prefix) + "/" + persona.id + "/" + key + "/a" + std::to_string(attempt);
    return r;
  };
  auto record = [&](const BackendRequest& r, const BackendResponse& resp, int attempt) {
    return Transcript{persona.id, r.request_id, attempt, r.model, r.temperature, r.prompt, resp.text};
  };

  if (config.batched) {
    const auto prompt = render_batched_prompt(persona, proposal, cells);
    std::optional<std::vector<ParsedScore>> parsed;
    for (int attempt = 0; attempt <= config.max_retries && !parsed; ++attempt) {
      auto req = request_for(prompt, "batch", attempt);
      auto resp = backend.complete(req);
      out.transcripts.push_back(record(req, resp, attempt));
      parsed = parse_batched_response(resp.text, cells.size());
    }
    if (!parsed)
      throw EvaluationError("agent '" + persona.id + "' returned no complete score block for the batched matrix");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell cell{cells[i].first->id, cells[i].second->id};
      out.matrix.set(cell.option, cell.criterion, (*parsed)[i].score);
      out.rationale[cell] = (*parsed)[i].rationale;
      if ((*parsed)[i].clamped) out.clamped.insert(cell);
    }
  } else {
    std::vector<ParsedScore> results(cells.size());
    std::vector<std::vector<Transcript>> logs(cells.size());
    detail::bounded_parallel_for(cells.size(), config.max_in_flight, [&](std::size_t i) {
      const auto& [option, criterion] = cells[i];
      const auto prompt = render_cell_prompt(persona, proposal, *option, *criterion);
      const auto key = option->id.str() + "/" + criterion->id.str();
      for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        auto req = request_for(prompt, key, attempt);
        auto resp = backend.complete(req);
        logs[i].push_back(record(req, resp, attempt));
        if (auto p = parse_cell_response(resp.text)) {
          results[i] = std::move(*p);
          return;
        }
      }
      throw EvaluationError("agent '" + persona.id + "' gave no parseable score for cell (" + option->id.str() +
                            ", " + criterion->id.str() + ") after " + std::to_string(config.max_retries + 1) +
                            " attempts");
    });
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell cell{cells[i].first->id, cells[i].second->id};
      out.matrix.set(cell.option, cell.criterion, results[i].score);
      out.rationale[cell] = results[i].rationale;
      if (results[i].clamped) out.clamped.insert(cell);
      for (auto& t : logs[i]) out.transcripts.push_back(std::move(t));
    }
  }
  out.raw_response_digest = transcript_digest(out.transcripts);
  return out;
}

// Serves previously recorded responses by request id. Used to rebuild a vote
// from its audit transcripts without contacting a model.
class RecordedBackend final : public Backend {
 public:
  explicit RecordedBackend(std::span<const Transcript> transcripts) {
    for (const auto& t : transcripts) responses_[t.request_id] = {t.prompt, t.response};
  }

  BackendResponse complete(const BackendRequest& request) override {
    auto it = responses_.find(request.request_id);
    if (it == responses_.end())
      throw BackendError("no recorded response for request '" + request.request_id + "'", false);
    if (it->second.first != request.prompt)
      throw BackendError("recorded prompt differs for request '" + request.request_id + "'", false);
    BackendResponse r;
    r.text = it->second.second;
    return r;
  }

  std::string id() const override { return "recorded"; }

 private:
  std::map<std::string, std::pair<std::string, std::string>> responses_;
};

inline Transcript transcript_from_json(const nlohmann::json& j) {
  return {j.at("agent").get<std::string>(), j.at("request_id").get<std::string>(), j.at("attempt").get<int>(),
          j.at("model").get<std::string>(), j.at("temperature").get<double>(),     j.at("prompt").get<std::string>(),
          j.at("response").get<std::string>()};
}

// Agent output enters aggregation exactly like a human ballot.
inline Ballot agent_ballot(const AgentEvaluation& e, const StakeholderGroup& group, std::string submitted_at = {}) {
  return Ballot{VoterId{e.agent}, group.voting_power, std::nullopt, e.matrix, std::move(submitted_at)};
}

}  // namespace qocdao
