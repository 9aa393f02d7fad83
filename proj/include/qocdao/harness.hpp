#pragma once

// Replay of historical DAO decisions through the autonomous pipeline, and
// the agreement statistics comparing AI outcomes with recorded outcomes.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>

#include "qocdao/pipeline.hpp"
#include "qocdao/report.hpp"

namespace qocdao {

enum class Verdict { Yes, No };

inline std::string to_string(Verdict v) { return v == Verdict::Yes ? "yes" : "no"; }

inline std::optional<Verdict> parse_verdict(std::string s) {
  s = detail::lowercase(detail::trim(s));
  if (s == "yes" || s == "y") return Verdict::Yes;
  if (s == "no" || s == "n") return Verdict::No;
  return std::nullopt;
}

struct HistoricalDecision {
  std::string id;
  std::string title;
  std::string body;
  Verdict dao_outcome = Verdict::No;
  std::string decided_at;
};

namespace detail {

inline bool is_utc_timestamp(const std::string& s) {
  static const std::regex kIso(R"(^\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}(:\d{2}(\.\d{1,9})?)?Z)?$)");
  return std::regex_match(s, kIso);
}

template <typename Fn>
void for_each_record(const std::string& text, const std::string& source, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, n, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(source, n, "record must be a JSON object");
    try {
      fn(j, n);
    } catch (const ValidationError& e) {
      throw ParseError(source, n, e.what());
    }
  }
}

inline std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    throw ValidationError(std::string("missing or empty field '") + key + "'");
  return j[key].get<std::string>();
}

inline Verdict verdict_field(const json& j, const char* key) {
  auto v = parse_verdict(string_field(j, key));
  if (!v) throw ValidationError(std::string("field '") + key + "' must be \"yes\" or \"no\"");
  return *v;
}

}  // namespace detail

// Newline-delimited corpus records:
//   {"id": "...", "title": "...", "body": "...", "outcome": "yes"|"no",
//    "decided_at": "2024-05-01T12:00:00Z"}
// Result is ordered by decided_at, then id.
inline std::vector<HistoricalDecision> parse_corpus(const std::string& text, const std::string& source) {
  std::vector<HistoricalDecision> out;
  std::set<std::string> ids;
  detail::for_each_record(text, source, [&](const json& j, std::size_t line) {
    HistoricalDecision d;
    d.id = detail::string_field(j, "id");
    d.title = j.value("title", "");
    d.body = detail::string_field(j, "body");
    d.dao_outcome = detail::verdict_field(j, "outcome");
    d.decided_at = detail::string_field(j, "decided_at");
    if (!detail::is_utc_timestamp(d.decided_at))
      throw ValidationError("decided_at must be an ISO-8601 UTC timestamp (YYYY-MM-DD[THH:MM[:SS[.fff]]Z])");
    if (!ids.insert(d.id).second) throw ParseError(source, line, "duplicate id '" + d.id + "'");
    out.push_back(std::move(d));
  });
  if (out.empty()) throw DomainError("corpus '" + source + "' is empty");
  std::ranges::stable_sort(out, [](const HistoricalDecision& a, const HistoricalDecision& b) {
    return std::tie(a.decided_at, a.id) < std::tie(b.decided_at, b.id);
  });
  return out;
}

// Local file path, or an http(s) URL whose body is in the corpus format.
// The remote fetch is a plain GET; no live API schema is assumed.
inline std::vector<HistoricalDecision> load_corpus(const std::string& source) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (std::regex_match(source, m, kUrl)) {
    httplib::Client client(m[1].str());
    client.set_connection_timeout(10, 0);
    auto res = client.Get(m[2].matched ? m[2].str() : "/");
    if (!res) throw NotFoundError("cannot fetch corpus from '" + source + "': " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw NotFoundError("cannot fetch corpus from '" + source + "': HTTP " + std::to_string(res->status));
    return parse_corpus(res->body, source);
  }
  return parse_corpus(read_file(source), source);
}

struct DecisionPair {
  std::string id;
  Verdict ai = Verdict::No;
  Verdict dao = Verdict::No;

  friend bool operator==(const DecisionPair&, const DecisionPair&) = default;
};

// Newline-delimited pairs: {"id": "...", "ai": "yes"|"no", "dao": "yes"|"no"}.
inline std::vector<DecisionPair> parse_pairs(const std::string& text, const std::string& source) {
  std::vector<DecisionPair> out;
  detail::for_each_record(text, source, [&](const json& j, std::size_t) {
    out.push_back({detail::string_field(j, "id"), detail::verdict_field(j, "ai"), detail::verdict_field(j, "dao")});
  });
  return out;
}

inline std::vector<DecisionPair> load_pairs(const std::string& path) { return parse_pairs(read_file(path), path); }

inline std::string pairs_to_ndjson(std::span<const DecisionPair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j{{"id", p.id}, {"ai", to_string(p.ai)}, {"dao", to_string(p.dao)}};
    out += j.dump() + "\n";
  }
  return out;
}

struct SkippedDecision {
  std::string id;
  std::string reason;
};

struct ReplayOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> report_dir;  // canonical report per proposal
  std::optional<std::size_t> limit;                 // stop after this many new evaluations
};

struct ReplayResult {
  std::vector<DecisionPair> pairs;                  // corpus order
  std::map<std::string, std::string> report_digests;  // proposal id -> SHA-256 of canonical report
  std::vector<SkippedDecision> skipped;
  std::size_t resumed = 0;  // pairs taken from the checkpoint
  bool complete = false;
};

namespace detail {

struct CheckpointEntry {
  DecisionPair pair;
  std::string report_digest;
};

// Successful evaluations only; skipped proposals are retried on resume.
inline std::map<std::string, CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, CheckpointEntry> out;
  if (!std::filesystem::exists(path)) return out;
  const auto text = read_file(path.string());
  for_each_record(text, path.string(), [&](const json& j, std::size_t) {
    if (j.value("skipped", false)) return;
    DecisionPair p{string_field(j, "id"), verdict_field(j, "ai_outcome"), verdict_field(j, "dao_outcome")};
    out[p.id] = {p, j.value("report_digest", "")};
  });
  return out;
}

}  // namespace detail

// One autonomous vote per historical decision. Backend and evaluation
// failures skip the proposal with a reason; skipped proposals are excluded
// from the statistics. With a checkpoint, every finished proposal is
// appended immediately and already-finished proposals are not re-queried.
inline ReplayResult replay(std::span<const HistoricalDecision> corpus, const GovernanceConfig& config, Backend& backend,
                           const ReplayOptions& options = {}) {
  if (config.mode != GovernanceMode::Autonomous) throw ValidationError("replay requires mode autonomous");
  if (auto problems = config.violations(); !problems.empty()) throw ValidationError(std::move(problems));

  std::map<std::string, detail::CheckpointEntry> done;
  std::ofstream checkpoint;
  if (options.checkpoint) {
    done = detail::read_checkpoint(*options.checkpoint);
    checkpoint.open(*options.checkpoint, std::ios::app);
    if (!checkpoint) throw NotFoundError("cannot write checkpoint '" + options.checkpoint->string() + "'");
  }
  if (options.report_dir) std::filesystem::create_directories(*options.report_dir);

  ReplayResult result;
  std::size_t evaluated = 0;
  for (const auto& d : corpus) {
    if (auto it = done.find(d.id); it != done.end()) {
      result.pairs.push_back(it->second.pair);
      result.report_digests[d.id] = it->second.report_digest;
      ++result.resumed;
      continue;
    }
    if (options.limit && evaluated >= *options.limit) return result;
    ++evaluated;

    nlohmann::ordered_json line;
    try {
      Proposal p{ProposalId{d.id}, d.title, d.body, {}, std::nullopt, d.decided_at};
      auto vote = VoteCycle::open(VoteId{"replay-" + d.id}, std::move(p), config);
      vote.close_and_aggregate(&backend);
      const auto report = canonical_report(generate_report(vote));
      const auto digest = sha256_hex(report);
      if (options.report_dir) {
        std::ofstream(*options.report_dir / (d.id + ".json"), std::ios::binary) << report;
      }
      const Verdict ai = vote.final_decision()->outcome.winner == kYes ? Verdict::Yes : Verdict::No;
      result.pairs.push_back({d.id, ai, d.dao_outcome});
      result.report_digests[d.id] = digest;
      line = {{"id", d.id}, {"ai_outcome", to_string(ai)}, {"dao_outcome", to_string(d.dao_outcome)},
              {"report_digest", digest}};
    } catch (const BackendError& e) {
      result.skipped.push_back({d.id, e.what()});
      line = {{"id", d.id}, {"skipped", true}, {"reason", e.what()}};
    } catch (const EvaluationError& e) {
      result.skipped.push_back({d.id, e.what()});
      line = {{"id", d.id}, {"skipped", true}, {"reason", e.what()}};
    } catch (const DomainError& e) {
      result.skipped.push_back({d.id, e.what()});
      line = {{"id", d.id}, {"skipped", true}, {"reason", e.what()}};
    }
    if (checkpoint.is_open()) checkpoint << line.dump() << '\n' << std::flush;
  }
  result.complete = true;
  return result;
}

// 2x2 table of AI outcome (rows) against DAO outcome (columns).
struct ContingencyTable {
  std::size_t yy = 0;  // AI yes, DAO yes
  std::size_t yn = 0;  // AI yes, DAO no: false positives
  std::size_t ny = 0;  // AI no, DAO yes: false negatives
  std::size_t nn = 0;  // AI no, DAO no

  std::size_t total() const noexcept { return yy + yn + ny + nn; }
  std::size_t agreements() const noexcept { return yy + nn; }
  std::size_t disagreements() const noexcept { return yn + ny; }
  double agreement_rate() const { return static_cast<double>(agreements()) / static_cast<double>(total()); }
  double disagreement_rate() const { return 1.0 - agreement_rate(); }

  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

inline ContingencyTable contingency(std::span<const DecisionPair> pairs) {
  if (pairs.empty()) throw DomainError("contingency table needs at least one decision pair");
  ContingencyTable t;
  for (const auto& p : pairs) {
    if (p.ai == Verdict::Yes) {
      (p.dao == Verdict::Yes ? t.yy : t.yn)++;
    } else {
      (p.dao == Verdict::Yes ? t.ny : t.nn)++;
    }
  }
  return t;
}

// Upper tail of the chi-square distribution with one degree of freedom:
// P(X > x) = erfc(sqrt(x / 2)).
inline double chi_square_sf_1df(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

struct McNemarResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  std::size_t discordant_b = 0;  // yn
  std::size_t discordant_d = 0;  // ny
};

// Uncorrected McNemar statistic (b - d)^2 / (b + d) on the discordant cells.
// With no discordant pairs the statistic is 0 and p = 1.
inline McNemarResult mcnemar(const ContingencyTable& t) {
  McNemarResult r;
  r.discordant_b = t.yn;
  r.discordant_d = t.ny;
  const auto n = t.yn + t.ny;
  if (n == 0) return r;
  const double diff = static_cast<double>(t.yn) - static_cast<double>(t.ny);
  r.chi_square = diff * diff / static_cast<double>(n);
  r.p_value = chi_square_sf_1df(r.chi_square);
  return r;
}

struct CostResult {
  double fn_weight = 1.0;
  double fp_weight = 10.0;
  double total_cost = 0.0;
};

inline CostResult cost(const ContingencyTable& t, double fn_weight = 1.0, double fp_weight = 10.0) {
  if (!(fn_weight >= 0.0) || !(fp_weight >= 0.0)) throw DomainError("cost weights must be >= 0");
  return {fn_weight, fp_weight, fn_weight * static_cast<double>(t.ny) + fp_weight * static_cast<double>(t.yn)};
}

struct ModelStats {
  std::string name;
  ContingencyTable table;
  McNemarResult mcnemar;
  CostResult cost;
  std::size_t skipped = 0;
};

inline ModelStats model_stats(std::string name, const ContingencyTable& t, double fn_weight = 1.0,
                              double fp_weight = 10.0, std::size_t skipped = 0) {
  return {std::move(name), t, mcnemar(t), cost(t, fn_weight, fp_weight), skipped};
}

struct StatsReport {
  std::vector<ModelStats> models;
  std::vector<double> sweep;  // fp weights; empty for no sweep
  json structured;
  std::string text;
};

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

inline std::string printf_format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string pad(std::string s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

inline std::string cell_with_pct(std::size_t count, std::size_t total) {
  return std::to_string(count) + " (" + printf_format("%.1f", 100.0 * count / static_cast<double>(total)) + "%)";
}

}  // namespace detail

// p-values use scientific notation with three significant digits.
inline std::string format_p_value(double p) { return detail::printf_format("%.2e", p); }

// Both tables plus an optional cost sweep over the false-positive weight
// (false-negative weight fixed at each model's fn_weight).
inline StatsReport emit_stats_report(std::vector<ModelStats> models, std::vector<double> sweep = {}) {
  StatsReport r;
  r.models = std::move(models);
  r.sweep = std::move(sweep);

  json arr = json::array();
  for (const auto& m : r.models) {
    const auto& t = m.table;
    json j = {{"model", m.name},
              {"n", t.total()},
              {"skipped", m.skipped},
              {"table", {{"ai_yes_dao_yes", t.yy}, {"ai_yes_dao_no", t.yn}, {"ai_no_dao_yes", t.ny}, {"ai_no_dao_no", t.nn}}},
              {"agreement_rate", t.agreement_rate()},
              {"agreement_pct", 100.0 * t.agreement_rate()},
              {"mcnemar",
               {{"chi_square", m.mcnemar.chi_square},
                {"p_value", m.mcnemar.p_value},
                {"p_value_text", format_p_value(m.mcnemar.p_value)},
                {"b", m.mcnemar.discordant_b},
                {"d", m.mcnemar.discordant_d}}},
              {"cost", {{"fn_weight", m.cost.fn_weight}, {"fp_weight", m.cost.fp_weight}, {"total", m.cost.total_cost}}}};
    if (!r.sweep.empty()) {
      json s = json::array();
      for (double w : r.sweep) s.push_back({{"fp_weight", w}, {"total", cost(t, m.cost.fn_weight, w).total_cost}});
      j["cost_sweep"] = s;
    }
    arr.push_back(j);
  }
  r.structured = {{"models", arr}};

  using detail::pad;
  std::ostringstream os;
  constexpr std::size_t kLabel = 8;
  constexpr std::size_t kCell = 13;
  os << "Contingency of AI decisions (rows) against DAO decisions (columns)\n\n";
  os << pad("", kLabel, true);
  for (const auto& m : r.models) os << " | " << pad(m.name, 2 * kCell + 3, true);
  os << "\n" << pad("", kLabel, true);
  for (std::size_t i = 0; i < r.models.size(); ++i) os << " | " << pad("DAO Y", kCell, true) << " | " << pad("DAO N", kCell, true);
  os << "\n";
  auto row = [&](const char* label, auto pick_yes, auto pick_no) {
    os << pad(label, kLabel, true);
    for (const auto& m : r.models)
      os << " | " << pad(detail::cell_with_pct(pick_yes(m.table), m.table.total()), kCell, true) << " | "
         << pad(detail::cell_with_pct(pick_no(m.table), m.table.total()), kCell, true);
    os << "\n";
  };
  row("AI Y", [](const ContingencyTable& t) { return t.yy; }, [](const ContingencyTable& t) { return t.yn; });
  row("AI N", [](const ContingencyTable& t) { return t.ny; }, [](const ContingencyTable& t) { return t.nn; });

  os << "\nAgreement and McNemar test (no continuity correction)\n\n";
  for (const auto& m : r.models) {
    const double pct = 100.0 * m.table.agreement_rate();
    os << "  " << m.name << ": N = " << m.table.total();
    if (m.skipped) os << " (" << m.skipped << " skipped)";
    os << ", agreement " << detail::printf_format("%.1f", pct) << "% (" << detail::shortest(pct) << "%)"
       << ", chi2(1, N = " << m.table.total() << ") = " << detail::printf_format("%.2f", m.mcnemar.chi_square)
       << ", p = " << format_p_value(m.mcnemar.p_value) << "\n";
  }

  os << "\nTotal cost of decisions\n\n";
  os << pad("Model", 16, true) << " | " << pad("DAO N / AI Y", 12) << " | " << pad("DAO Y / AI N", 12) << " | "
     << pad("Total Cost", 10) << "\n";
  for (const auto& m : r.models)
    os << pad(m.name, 16, true) << " | " << pad(std::to_string(m.table.yn), 12) << " | "
       << pad(std::to_string(m.table.ny), 12) << " | " << pad(detail::shortest(m.cost.total_cost), 10) << "\n";
  if (!r.models.empty())
    os << "(cost = " << detail::shortest(r.models.front().cost.fn_weight) << " * false negatives + "
       << detail::shortest(r.models.front().cost.fp_weight) << " * false positives)\n";

  if (!r.sweep.empty()) {
    os << "\nCost sweep over the false-positive weight\n\n" << pad("fp weight", 10, true);
    for (const auto& m : r.models) os << " | " << pad(m.name, 12);
    os << "\n";
    for (double w : r.sweep) {
      os << pad(detail::shortest(w), 10, true);
      for (const auto& m : r.models) os << " | " << pad(detail::shortest(cost(m.table, m.cost.fn_weight, w).total_cost), 12);
      os << "\n";
    }
  }
  r.text = os.str();
  return r;
}

}  // namespace qocdao
