#pragma once

// Standard-deviation outlier detection over ballot cells.
//
// Statistics are population statistics over every ballot in the vote,
// including the value under test. A value is flagged when
// |value - mean| > k * sigma. Detection is single-pass: statistics are
// computed once from the original ballots, never re-run after exclusion.

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qocdao/engine.hpp"

namespace qocdao {

enum class ExclusionGranularity { PerCell, WholeBallot };

struct SafeguardConfig {
  double threshold_k = 2.0;
  std::size_t min_ballots = 3;
  ExclusionGranularity granularity = ExclusionGranularity::PerCell;

  std::vector<std::string> violations() const {
    std::vector<std::string> problems;
    if (!(threshold_k > 0.0)) problems.push_back("safeguard threshold_k must be > 0");
    if (min_ballots < 3) problems.push_back("safeguard min_ballots must be >= 3");
    return problems;
  }
};

struct OutlierFlag {
  VoterId voter;
  OptionId option;
  CriterionId criterion;
  int value = 0;
  double cell_mean = 0.0;
  double cell_stddev = 0.0;
  double z_score = 0.0;  // |value - cell_mean| / cell_stddev
  double threshold_k = 0.0;
};

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Population mean and standard deviation of integer scores. Uses exact
// integer sums so the result does not depend on input order.
inline CellStats population_stats(std::span<const int> values) {
  if (values.empty()) throw DomainError("statistics of an empty cell");
  const auto n = static_cast<std::int64_t>(values.size());
  std::int64_t sum = 0;
  std::int64_t sum_sq = 0;
  for (int v : values) {
    sum += v;
    sum_sq += static_cast<std::int64_t>(v) * v;
  }
  const std::int64_t scaled_var = n * sum_sq - sum * sum;  // n^2 * variance
  const double nd = static_cast<double>(n);
  return {static_cast<double>(sum) / nd, std::sqrt(static_cast<double>(scaled_var)) / nd};
}

inline std::vector<OutlierFlag> detect_outliers(std::span<const Ballot> ballots, const SafeguardConfig& config) {
  if (auto p = config.violations(); !p.empty()) throw ValidationError(std::move(p));
  if (ballots.empty()) return {};
  const auto grid = ballots.front().evaluations.grid();
  for (const auto& b : ballots)
    if (b.evaluations.grid() != grid)
      throw DomainError("ballot of '" + b.voter.str() + "' does not share the evaluation grid");
  if (ballots.size() < config.min_ballots) return {};

  std::vector<OutlierFlag> flags;
  std::vector<int> values(ballots.size());
  for (const auto& cell : grid) {
    for (std::size_t i = 0; i < ballots.size(); ++i) values[i] = ballots[i].evaluations.scores().at(cell);
    const auto stats = population_stats(values);
    if (stats.stddev == 0.0) continue;
    for (std::size_t i = 0; i < ballots.size(); ++i) {
      const double deviation = std::fabs(values[i] - stats.mean);
      if (deviation > config.threshold_k * stats.stddev) {
        flags.push_back({ballots[i].voter, cell.option, cell.criterion, values[i], stats.mean, stats.stddev,
                         deviation / stats.stddev, config.threshold_k});
      }
    }
  }
  // Sorted by (voter, option, criterion) so output ignores ballot order.
  std::ranges::sort(flags, [](const OutlierFlag& a, const OutlierFlag& b) {
    return VoterCell{a.voter, a.option, a.criterion} < VoterCell{b.voter, b.option, b.criterion};
  });
  return flags;
}

// Maps flags to exclusion keys. WholeBallot expands every flagged voter to
// all cells of `grid`.
inline std::set<VoterCell> apply_exclusions(std::span<const OutlierFlag> flags, const SafeguardConfig& config,
                                            const std::set<Cell>& grid) {
  std::set<VoterCell> out;
  for (const auto& f : flags) {
    if (config.granularity == ExclusionGranularity::PerCell) {
      out.insert({f.voter, f.option, f.criterion});
    } else {
      for (const auto& cell : grid) out.insert({f.voter, cell.option, cell.criterion});
    }
  }
  return out;
}

}  // namespace qocdao
