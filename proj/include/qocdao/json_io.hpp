#pragma once

// JSON encodings of the core types. Maps keyed by ids are written as JSON
// objects; evaluation matrices are nested {option: {criterion: score}}.
// nlohmann::json keeps object keys sorted, which makes every dump()
// canonical.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qocdao/agents.hpp"
#include "qocdao/engine.hpp"
#include "qocdao/errors.hpp"
#include "qocdao/safeguards.hpp"

namespace qocdao {

using json = nlohmann::json;

// Parses a whole JSON document, mapping syntax errors to a line number.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(source, line, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline json read_json_file(const std::string& path) { return parse_json_text(read_file(path), path); }

// Wraps field access so a type mismatch names the offending field.
template <typename T>
T field(const json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(context + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(context + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& context) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, context);
}

inline json to_json(const Criterion& c) {
  return {{"id", c.id.str()}, {"label", c.label}, {"description", c.description}};
}

inline Criterion criterion_from_json(const json& j) {
  const std::string ctx = "criterion";
  return {CriterionId{field<std::string>(j, "id", ctx)}, field<std::string>(j, "label", ctx),
          field_or<std::string>(j, "description", "", ctx)};
}

inline json to_json(const std::map<CriterionId, double>& m) {
  json j = json::object();
  for (const auto& [id, v] : m) j[id.str()] = v;
  return j;
}

inline json to_json(const WeightVector& w) { return to_json(w.weights()); }

inline WeightVector weights_from_json(const json& j, bool normalized, const std::string& ctx = "weights") {
  if (!j.is_object()) throw ValidationError(ctx + " must be an object of criterion id to weight");
  std::map<CriterionId, double> m;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw ValidationError(ctx + ": weight for '" + k + "' is not a number");
    m.emplace(CriterionId{k}, v.get<double>());
  }
  return WeightVector(std::move(m), normalized);
}

inline json to_json(const EvaluationMatrix& m) {
  json j = json::object();
  for (const auto& [cell, v] : m.scores()) j[cell.option.str()][cell.criterion.str()] = v;
  return j;
}

inline EvaluationMatrix matrix_from_json(const json& j, const std::string& ctx = "evaluations") {
  if (!j.is_object()) throw ValidationError(ctx + " must be an object {option: {criterion: score}}");
  EvaluationMatrix m;
  for (const auto& [o, row] : j.items()) {
    if (!row.is_object()) throw ValidationError(ctx + ": row '" + o + "' must be an object");
    for (const auto& [c, v] : row.items()) {
      if (!v.is_number_integer())
        throw ValidationError(ctx + ": score for (" + o + ", " + c + ") must be an integer");
      m.set(OptionId{o}, CriterionId{c}, v.get<int>());
    }
  }
  return m;
}

inline json to_json(const CellMeans& means) {
  json j = json::object();
  for (const auto& [cell, v] : means) j[cell.option.str()][cell.criterion.str()] = v;
  return j;
}

inline json to_json(const Ballot& b) {
  json j = {{"voter", b.voter.str()},
            {"voting_power", b.voting_power},
            {"evaluations", to_json(b.evaluations)},
            {"submitted_at", b.submitted_at}};
  if (b.weights) j["weights"] = to_json(*b.weights);
  return j;
}

inline Ballot ballot_from_json(const json& j) {
  const std::string ctx = "ballot";
  Ballot b;
  b.voter = VoterId{field<std::string>(j, "voter", ctx)};
  b.voting_power = field_or<double>(j, "voting_power", 1.0, ctx);
  if (j.contains("weights") && !j["weights"].is_null()) b.weights = weights_from_json(j["weights"], false);
  b.evaluations = matrix_from_json(j.contains("evaluations") ? j["evaluations"] : json(), ctx + " evaluations");
  b.submitted_at = field_or<std::string>(j, "submitted_at", "", ctx);
  return b;
}

inline std::string to_string(ExclusionGranularity g) {
  return g == ExclusionGranularity::PerCell ? "per_cell" : "whole_ballot";
}

inline json to_json(const SafeguardConfig& s) {
  return {{"threshold_k", s.threshold_k}, {"min_ballots", s.min_ballots}, {"granularity", to_string(s.granularity)}};
}

inline SafeguardConfig safeguard_from_json(const json& j) {
  const std::string ctx = "safeguard";
  SafeguardConfig s;
  s.threshold_k = field_or<double>(j, "threshold_k", s.threshold_k, ctx);
  s.min_ballots = field_or<std::size_t>(j, "min_ballots", s.min_ballots, ctx);
  const auto g = field_or<std::string>(j, "granularity", "per_cell", ctx);
  if (g == "per_cell") {
    s.granularity = ExclusionGranularity::PerCell;
  } else if (g == "whole_ballot") {
    s.granularity = ExclusionGranularity::WholeBallot;
  } else {
    throw ValidationError("safeguard: granularity must be 'per_cell' or 'whole_ballot'");
  }
  return s;
}

inline json to_json(const OutlierFlag& f) {
  return {{"voter", f.voter.str()},       {"option", f.option.str()},       {"criterion", f.criterion.str()},
          {"value", f.value},             {"cell_mean", f.cell_mean},       {"cell_stddev", f.cell_stddev},
          {"z_score", f.z_score},         {"threshold_k", f.threshold_k}};
}

inline json to_json(const VoterCell& v) {
  return {{"voter", v.voter.str()}, {"option", v.option.str()}, {"criterion", v.criterion.str()}};
}

inline json to_json(const StakeholderGroup& g) {
  return {{"id", g.id.str()},
          {"name", g.name},
          {"perspective", g.perspective},
          {"keywords", g.keywords},
          {"voting_power", g.voting_power}};
}

inline StakeholderGroup group_from_json(const json& j) {
  const std::string ctx = "stakeholder group";
  StakeholderGroup g;
  g.id = GroupId{field<std::string>(j, "id", ctx)};
  g.name = field_or<std::string>(j, "name", g.id.str(), ctx);
  g.perspective = field<std::string>(j, "perspective", ctx);
  g.keywords = field_or<std::vector<std::string>>(j, "keywords", {}, ctx);
  g.voting_power = field_or<double>(j, "voting_power", 1.0, ctx);
  return g;
}

inline json to_json(const Outcome& o) { return {{"winner", o.winner.str()}, {"tie_broken", o.tie_broken}}; }

inline json to_json(const AggregateResult& r) {
  json scores = json::object();
  for (const auto& [id, s] : r.option_scores) scores[id.str()] = s;
  json excluded = json::array();
  for (const auto& e : r.excluded_evaluations) excluded.push_back(to_json(e));
  return {{"mean_weights", to_json(r.mean_weights)},
          {"mean_evaluations", to_json(r.mean_evaluations)},
          {"option_scores", scores},
          {"ballot_count", r.ballot_count},
          {"excluded_evaluations", excluded}};
}

inline json to_json(const AgentEvaluation& e) {
  json rationale = json::object();
  for (const auto& [cell, text] : e.rationale) rationale[cell.option.str()][cell.criterion.str()] = text;
  json clamped = json::array();
  for (const auto& cell : e.clamped) clamped.push_back({{"option", cell.option.str()}, {"criterion", cell.criterion.str()}});
  return {{"agent", e.agent},
          {"group", e.group.str()},
          {"matrix", to_json(e.matrix)},
          {"rationale", rationale},
          {"clamped", clamped},
          {"raw_response_digest", e.raw_response_digest}};
}

}  // namespace qocdao
