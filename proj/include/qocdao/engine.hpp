#pragma once

// Question-Option-Criteria model: domain types, weighted-sum scoring,
// multi-user consolidation and aggregation, and outcome selection.
//
// All functions here are pure. Raw evaluation scores are integers in
// [0, 100]; everything derived from them is a double, compared with the
// library-wide relative tolerance kTolerance.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <ranges>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qocdao/errors.hpp"
#include "qocdao/ids.hpp"

namespace qocdao {

inline constexpr double kTolerance = 1e-9;
inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 100;
inline constexpr double kMaxWeight = 100.0;

inline bool nearly_equal(double a, double b, double rel = kTolerance) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= rel * scale;
}

// Case-fold, trim, and collapse internal whitespace runs to a single space.
// ASCII folding only; labels are matched exactly after this step.
inline std::string normalize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  bool pending_space = false;
  for (unsigned char ch : label) {
    if (std::isspace(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

enum class QuestionMode { General, DaoBinary };

struct Question {
  std::string id;
  std::string text;
  QuestionMode mode = QuestionMode::DaoBinary;
};

struct Option {
  OptionId id;
  std::string label;
};

inline const OptionId kYes{"yes"};
inline const OptionId kNo{"no"};

class OptionSet {
 public:
  OptionSet() = default;
  explicit OptionSet(std::vector<Option> options) : options_(std::move(options)) { validate(); }

  // The fixed {Yes, No} set used for DAO proposals.
  static OptionSet binary() { return OptionSet({{kYes, "Yes"}, {kNo, "No"}}); }

  const std::vector<Option>& options() const noexcept { return options_; }
  std::size_t size() const noexcept { return options_.size(); }
  auto begin() const noexcept { return options_.begin(); }
  auto end() const noexcept { return options_.end(); }

  bool is_binary() const {
    return options_.size() == 2 && options_[0].id == kYes && options_[1].id == kNo;
  }

  const Option* find(const OptionId& id) const {
    auto it = std::ranges::find(options_, id, &Option::id);
    return it == options_.end() ? nullptr : &*it;
  }

 private:
  void validate() const {
    std::vector<std::string> problems;
    if (options_.size() < 2) problems.push_back("an option set needs at least 2 options");
    std::set<std::string> labels;
    std::set<OptionId> ids;
    for (const auto& o : options_) {
      if (o.id.empty()) problems.push_back("option with empty id");
      if (!ids.insert(o.id).second) problems.push_back("duplicate option id '" + o.id.str() + "'");
      if (!labels.insert(normalize_label(o.label)).second)
        problems.push_back("duplicate option label '" + o.label + "'");
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
  }

  std::vector<Option> options_;
};

struct Criterion {
  CriterionId id;
  std::string label;
  std::string description;
};

inline void validate_criteria(std::span<const Criterion> criteria) {
  std::vector<std::string> problems;
  if (criteria.empty()) problems.push_back("at least one criterion is required");
  std::set<std::string> labels;
  std::set<CriterionId> ids;
  for (const auto& c : criteria) {
    if (c.id.empty()) problems.push_back("criterion with empty id");
    if (!ids.insert(c.id).second) problems.push_back("duplicate criterion id '" + c.id.str() + "'");
    if (!labels.insert(normalize_label(c.label)).second)
      problems.push_back("duplicate criterion label '" + c.label + "'");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

// Criterion weights in (0, 100]. When `normalized` is set the weights must
// also sum to 100.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::map<CriterionId, double> weights, bool normalized = false)
      : weights_(std::move(weights)), normalized_(normalized) {}

  const std::map<CriterionId, double>& weights() const noexcept { return weights_; }
  bool normalized() const noexcept { return normalized_; }
  std::size_t size() const noexcept { return weights_.size(); }

  double at(const CriterionId& id) const {
    auto it = weights_.find(id);
    if (it == weights_.end()) throw DomainError("no weight for criterion '" + id.str() + "'");
    return it->second;
  }

  double sum() const {
    double s = 0.0;
    for (const auto& [_, w] : weights_) s += w;
    return s;
  }

  // Returns the list of violations; empty when valid for `criteria`.
  std::vector<std::string> violations(std::span<const Criterion> criteria) const {
    std::vector<std::string> problems;
    std::set<CriterionId> expected;
    for (const auto& c : criteria) expected.insert(c.id);
    for (const auto& id : expected)
      if (!weights_.contains(id)) problems.push_back("weight missing for criterion '" + id.str() + "'");
    for (const auto& [id, w] : weights_) {
      if (!expected.contains(id)) problems.push_back("weight for unknown criterion '" + id.str() + "'");
      if (!(w > 0.0 && w <= kMaxWeight))
        problems.push_back("weight for '" + id.str() + "' must be in (0, 100], got " + std::to_string(w));
    }
    if (normalized_ && std::fabs(sum() - 100.0) > kTolerance)
      problems.push_back("normalized weights must sum to 100, got " + std::to_string(sum()));
    return problems;
  }

  void validate(std::span<const Criterion> criteria) const {
    if (auto p = violations(criteria); !p.empty()) throw ValidationError(std::move(p));
  }

 private:
  std::map<CriterionId, double> weights_;
  bool normalized_ = false;
};

// Rescales weights to sum to 100. Never applied implicitly.
inline WeightVector normalize_weights(const WeightVector& w) {
  const double total = w.sum();
  if (!(total > 0.0)) throw DomainError("cannot normalize weights with non-positive total");
  std::map<CriterionId, double> out;
  for (const auto& [id, v] : w.weights()) out.emplace(id, v * 100.0 / total);
  return WeightVector(std::move(out), true);
}

// Integer support scores e(k, j) in [0, 100] over a complete option x
// criterion grid.
class EvaluationMatrix {
 public:
  EvaluationMatrix() = default;
  explicit EvaluationMatrix(std::map<Cell, int> scores) : scores_(std::move(scores)) {}

  const std::map<Cell, int>& scores() const noexcept { return scores_; }
  std::size_t size() const noexcept { return scores_.size(); }

  int at(const OptionId& o, const CriterionId& c) const {
    auto it = scores_.find(Cell{o, c});
    if (it == scores_.end())
      throw DomainError("no evaluation for cell (" + o.str() + ", " + c.str() + ")");
    return it->second;
  }

  void set(const OptionId& o, const CriterionId& c, int score) { scores_[Cell{o, c}] = score; }

  std::map<CriterionId, int> row(const OptionId& o) const {
    std::map<CriterionId, int> out;
    for (const auto& [cell, v] : scores_)
      if (cell.option == o) out.emplace(cell.criterion, v);
    return out;
  }

  std::set<Cell> grid() const {
    std::set<Cell> g;
    for (const auto& [cell, _] : scores_) g.insert(cell);
    return g;
  }

  std::vector<std::string> violations(const OptionSet& options, std::span<const Criterion> criteria) const {
    std::vector<std::string> problems;
    for (const auto& o : options) {
      for (const auto& c : criteria) {
        auto it = scores_.find(Cell{o.id, c.id});
        if (it == scores_.end()) {
          problems.push_back("missing evaluation for (" + o.id.str() + ", " + c.id.str() + ")");
        } else if (it->second < kMinScore || it->second > kMaxScore) {
          problems.push_back("evaluation for (" + o.id.str() + ", " + c.id.str() +
                             ") must be in [0, 100], got " + std::to_string(it->second));
        }
      }
    }
    for (const auto& [cell, _] : scores_) {
      if (!options.find(cell.option) ||
          std::ranges::find(criteria, cell.criterion, &Criterion::id) == criteria.end())
        problems.push_back("evaluation for unknown cell (" + cell.option.str() + ", " +
                           cell.criterion.str() + ")");
    }
    return problems;
  }

  void validate(const OptionSet& options, std::span<const Criterion> criteria) const {
    if (auto p = violations(options, criteria); !p.empty()) throw ValidationError(std::move(p));
  }

 private:
  std::map<Cell, int> scores_;
};

struct Ballot {
  VoterId voter;
  double voting_power = 1.0;
  std::optional<WeightVector> weights;  // General mode only
  EvaluationMatrix evaluations;
  std::string submitted_at;
};

// One participant's proposed options, criteria and weights. Weights are
// keyed by the normalized criterion label, which is also the id that
// consolidate() assigns.
struct ContributionSet {
  VoterId voter;
  std::vector<std::string> options;
  std::vector<std::string> criteria;
  WeightVector weights;
};

using PowerMap = std::map<VoterId, double>;
using CellMeans = std::map<Cell, double>;

struct AggregateResult {
  std::map<CriterionId, double> mean_weights;
  CellMeans mean_evaluations;
  std::vector<std::pair<OptionId, double>> option_scores;  // option-set order
  std::size_t ballot_count = 0;
  std::set<VoterCell> excluded_evaluations;

  double score_of(const OptionId& o) const {
    for (const auto& [id, s] : option_scores)
      if (id == o) return s;
    throw DomainError("no score for option '" + o.str() + "'");
  }
};

// S = sum_j w_j * e_j. Weights and row must cover the same criterion set.
template <typename Value>
double score(const WeightVector& weights, const std::map<CriterionId, Value>& row) {
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  for (const auto& [id, _] : weights.weights())
    if (!row.contains(id)) missing.push_back(id.str());
  for (const auto& [id, _] : row)
    if (!weights.weights().contains(id)) extra.push_back(id.str());
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "criterion mismatch between weights and evaluations;";
    if (!missing.empty()) {
      msg += " missing from evaluations:";
      for (const auto& m : missing) msg += " " + m;
    }
    if (!extra.empty()) {
      msg += (missing.empty() ? "" : ";");
      msg += " not weighted:";
      for (const auto& e : extra) msg += " " + e;
    }
    throw DomainError(msg);
  }
  double total = 0.0;
  for (const auto& [id, w] : weights.weights()) total += w * static_cast<double>(row.at(id));
  return total;
}

struct Consolidated {
  OptionSet options;
  std::vector<Criterion> criteria;
};

// Union of contributed options and criteria, merged by normalized label in
// first-appearance order. Ids are the normalized labels; labels keep the
// first spelling seen.
inline Consolidated consolidate(std::span<const ContributionSet> contributions) {
  if (contributions.empty()) throw DomainError("consolidation needs at least one contribution");

  std::vector<Option> options;
  std::vector<Criterion> criteria;
  std::set<std::string> seen_options;
  std::set<std::string> seen_criteria;
  for (const auto& c : contributions) {
    for (const auto& label : c.options) {
      auto key = normalize_label(label);
      if (key.empty()) throw DomainError("blank option label from voter '" + c.voter.str() + "'");
      if (seen_options.insert(key).second) options.push_back({OptionId{key}, label});
    }
    for (const auto& label : c.criteria) {
      auto key = normalize_label(label);
      if (key.empty()) throw DomainError("blank criterion label from voter '" + c.voter.str() + "'");
      if (seen_criteria.insert(key).second) criteria.push_back({CriterionId{key}, label, {}});
    }
  }
  if (criteria.empty()) throw DomainError("consolidation produced no criteria");
  if (options.size() < 2) throw DomainError("consolidation produced fewer than 2 options");
  return {OptionSet(std::move(options)), std::move(criteria)};
}

namespace detail {

inline double power_of(const PowerMap& powers, const VoterId& voter) {
  auto it = powers.find(voter);
  if (it == powers.end()) throw DomainError("no voting power for voter '" + voter.str() + "'");
  if (!(it->second >= 0.0)) throw DomainError("negative voting power for voter '" + voter.str() + "'");
  return it->second;
}

}  // namespace detail

// Mean weight per criterion: arithmetic mean, or the voting-power weighted
// mean sum_i p_i w_ij / sum_i p_i. `weights_of` projects an element to its
// (voter, WeightVector) pair.
template <std::ranges::input_range R, typename Proj>
std::map<CriterionId, double> aggregate_weights(R&& items, Proj weights_of, bool power_weighted,
                                                const PowerMap& powers) {
  std::map<CriterionId, double> sums;
  std::optional<std::set<CriterionId>> keys;
  double total = 0.0;
  std::size_t count = 0;
  for (auto&& item : items) {
    const auto& [voter, wv] = weights_of(item);
    std::set<CriterionId> these;
    for (const auto& [id, _] : wv.weights()) these.insert(id);
    if (!keys) {
      keys = these;
    } else if (*keys != these) {
      throw DomainError("weight vector of '" + voter.str() + "' does not cover the consolidated criteria");
    }
    const double p = power_weighted ? detail::power_of(powers, voter) : 1.0;
    for (const auto& [id, w] : wv.weights()) sums[id] += p * w;
    total += p;
    ++count;
  }
  if (count == 0) throw DomainError("no weight vectors to aggregate");
  if (!(total > 0.0)) throw DomainError("total voting power is zero");
  for (auto& [_, s] : sums) s /= total;
  return sums;
}

inline std::map<CriterionId, double> aggregate_weights(std::span<const ContributionSet> contributions,
                                                       bool power_weighted = false,
                                                       const PowerMap& powers = {}) {
  return aggregate_weights(
      contributions,
      [](const ContributionSet& c) { return std::pair<const VoterId&, const WeightVector&>(c.voter, c.weights); },
      power_weighted, powers);
}

inline std::map<CriterionId, double> aggregate_weights(std::span<const Ballot> ballots, bool power_weighted) {
  PowerMap powers;
  for (const auto& b : ballots) {
    if (!b.weights) throw DomainError("ballot of '" + b.voter.str() + "' carries no weight vector");
    powers[b.voter] = b.voting_power;
  }
  return aggregate_weights(
      ballots,
      [](const Ballot& b) { return std::pair<const VoterId&, const WeightVector&>(b.voter, *b.weights); },
      power_weighted, powers);
}

// Per-cell mean (or voting-power weighted mean) of the non-excluded
// evaluations. All ballots must share one grid.
inline CellMeans aggregate_evaluations(std::span<const Ballot> ballots, bool power_weighted,
                                       const std::set<VoterCell>& exclusions = {}) {
  if (ballots.empty()) throw DomainError("no ballots to aggregate");
  const auto grid = ballots.front().evaluations.grid();
  for (const auto& b : ballots) {
    if (b.evaluations.grid() != grid)
      throw DomainError("ballot of '" + b.voter.str() + "' does not match the evaluation grid");
    if (power_weighted && !(b.voting_power >= 0.0))
      throw DomainError("negative voting power for voter '" + b.voter.str() + "'");
  }

  CellMeans out;
  for (const auto& cell : grid) {
    double num = 0.0;
    double den = 0.0;
    int lo = kMaxScore;
    int hi = kMinScore;
    std::size_t included = 0;
    for (const auto& b : ballots) {
      if (exclusions.contains(VoterCell{b.voter, cell.option, cell.criterion})) continue;
      const int v = b.evaluations.scores().at(cell);
      const double p = power_weighted ? b.voting_power : 1.0;
      num += p * v;
      den += p;
      ++included;
      if (p > 0.0) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const std::string where = "(" + cell.option.str() + ", " + cell.criterion.str() + ")";
    if (included == 0) throw DomainError("every evaluation of cell " + where + " is excluded");
    if (!(den > 0.0)) throw DomainError("cell " + where + " has zero remaining voting power");
    // Rounding in the weighted sum can step one ulp past the contributing range.
    out.emplace(cell, std::clamp(num / den, static_cast<double>(lo), static_cast<double>(hi)));
  }
  return out;
}

// S(o_k) for every option, in option-set order.
inline std::vector<std::pair<OptionId, double>> option_scores(const OptionSet& options,
                                                              std::span<const Criterion> criteria,
                                                              const std::map<CriterionId, double>& weights,
                                                              const CellMeans& means) {
  std::vector<std::pair<OptionId, double>> out;
  for (const auto& o : options) {
    double s = 0.0;
    for (const auto& c : criteria) {
      auto w = weights.find(c.id);
      auto e = means.find(Cell{o.id, c.id});
      if (w == weights.end() || e == means.end())
        throw DomainError("cannot score option '" + o.id.str() + "' on criterion '" + c.id.str() + "'");
      s += w->second * e->second;
    }
    out.emplace_back(o.id, s);
  }
  return out;
}

struct Outcome {
  OptionId winner;
  bool tie_broken = false;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

// Argmax over S. Scores within kTolerance count as tied: DaoBinary ties go to
// No, General ties go to the earliest option in set order.
inline Outcome decide(std::span<const std::pair<OptionId, double>> scores, QuestionMode mode) {
  if (scores.size() < 2) throw DomainError("a decision needs at least 2 scored options");
  double best = scores.front().second;
  for (const auto& [_, s] : scores) best = std::max(best, s);

  std::vector<OptionId> leaders;
  for (const auto& [id, s] : scores)
    if (nearly_equal(s, best)) leaders.push_back(id);

  if (leaders.size() == 1) return {leaders.front(), false};
  if (mode == QuestionMode::DaoBinary && std::ranges::find(leaders, kNo) != leaders.end()) return {kNo, true};
  return {leaders.front(), true};
}

// Full aggregation: mean evaluations (with exclusions) scored against the
// given weights.
inline AggregateResult aggregate(std::span<const Ballot> ballots, const OptionSet& options,
                                 std::span<const Criterion> criteria,
                                 const std::map<CriterionId, double>& weights, bool power_weighted,
                                 const std::set<VoterCell>& exclusions = {}) {
  AggregateResult r;
  r.mean_weights = weights;
  r.mean_evaluations = aggregate_evaluations(ballots, power_weighted, exclusions);
  r.option_scores = option_scores(options, criteria, r.mean_weights, r.mean_evaluations);
  r.ballot_count = ballots.size();
  r.excluded_evaluations = exclusions;
  return r;
}

}  // namespace qocdao
