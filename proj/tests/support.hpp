#pragma once

// Shared fixtures, random instance generators and reference oracles.
// The oracles deliberately avoid the library's code paths: plain vectors,
// two-pass statistics and direct quadrature.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qocdao/qocdao.hpp"

namespace qocdao::testing {

inline std::vector<Criterion> make_criteria(std::size_t n) {
  std::vector<Criterion> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back({CriterionId{"c" + std::to_string(j)}, "Criterion " + std::to_string(j), ""});
  return out;
}

inline OptionSet make_options(std::size_t n) {
  if (n == 2) return OptionSet::binary();
  std::vector<Option> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({OptionId{"o" + std::to_string(k)}, "Option " + std::to_string(k)});
  return OptionSet(std::move(out));
}

inline WeightVector weights_of(std::initializer_list<std::pair<const char*, double>> w, bool normalized = false) {
  std::map<CriterionId, double> m;
  for (const auto& [k, v] : w) m.emplace(CriterionId{k}, v);
  return WeightVector(std::move(m), normalized);
}

// Binary ballot over criteria c0..c(n-1): yes row then no row.
inline Ballot binary_ballot(const std::string& voter, double power, const std::vector<int>& yes, const std::vector<int>& no) {
  EvaluationMatrix m;
  for (std::size_t j = 0; j < yes.size(); ++j) m.set(kYes, CriterionId{"c" + std::to_string(j)}, yes[j]);
  for (std::size_t j = 0; j < no.size(); ++j) m.set(kNo, CriterionId{"c" + std::to_string(j)}, no[j]);
  return Ballot{VoterId{voter}, power, std::nullopt, std::move(m), {}};
}

// Ballots whose cell (yes, c0) takes the given values; every other cell is 50.
inline std::vector<Ballot> single_cell_ballots(const std::vector<int>& values) {
  std::vector<Ballot> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.push_back(binary_ballot("v" + std::to_string(i), 1.0, {values[i]}, {50}));
  return out;
}

struct Instance {
  OptionSet options;
  std::vector<Criterion> criteria;
  WeightVector weights;
  std::vector<Ballot> ballots;
};

// Random instance with <= max_options options, <= max_criteria criteria and
// <= max_ballots ballots. Weights are in (0, 100]; powers in [0, 1000].
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_options = 5, std::size_t max_criteria = 6,
                                std::size_t max_ballots = 10) {
  std::uniform_int_distribution<std::size_t> n_opt(2, max_options), n_crit(1, max_criteria), n_bal(1, max_ballots);
  std::uniform_int_distribution<int> score(0, 100);
  std::uniform_real_distribution<double> weight(0.5, 100.0), power(0.0, 1000.0);
  Instance inst{make_options(n_opt(rng)), make_criteria(n_crit(rng)), {}, {}};
  std::map<CriterionId, double> w;
  for (const auto& c : inst.criteria) w.emplace(c.id, weight(rng));
  inst.weights = WeightVector(std::move(w));
  const auto nb = n_bal(rng);
  for (std::size_t i = 0; i < nb; ++i) {
    EvaluationMatrix m;
    for (const auto& o : inst.options)
      for (const auto& c : inst.criteria) m.set(o.id, c.id, score(rng));
    // Keep at least one positive power so power-weighted means exist.
    const double p = i == 0 ? 1.0 + power(rng) : power(rng);
    inst.ballots.push_back({VoterId{"voter" + std::to_string(i)}, p, std::nullopt, std::move(m), {}});
  }
  return inst;
}

// Naive reference: S(o_k) = sum_j w_j * (sum_i p_i e_i(k,j) / sum_i p_i),
// indexed by plain positions.
inline std::vector<double> reference_scores(const Instance& inst, bool power_weighted) {
  std::vector<double> out;
  for (const auto& o : inst.options) {
    double s = 0.0;
    for (const auto& c : inst.criteria) {
      double num = 0.0, den = 0.0;
      for (const auto& b : inst.ballots) {
        const double p = power_weighted ? b.voting_power : 1.0;
        num += p * b.evaluations.scores().at(Cell{o.id, c.id});
        den += p;
      }
      s += inst.weights.weights().at(c.id) * (num / den);
    }
    out.push_back(s);
  }
  return out;
}

inline bool rel_close(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

// Two-pass population mean and standard deviation.
inline std::pair<double, double> two_pass_stats(const std::vector<int>& v) {
  double mean = 0.0;
  for (int x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (int x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

// Chi-square(1) density.
inline double chi2_1df_density(double x) {
  return std::exp(-x / 2.0) / std::sqrt(2.0 * M_PI * x);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double eps, int depth) {
  const double m = (a + b) / 2.0;
  const double lm = (a + m) / 2.0, rm = (m + b) / 2.0;
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}

// Upper tail of chi-square(1) by adaptive Simpson quadrature of the density
// over [x, x + 120]; the remaining tail is below e^-60 of the mass at x.
inline double chi2_1df_tail_by_quadrature(double x) {
  const double a = x, b = x + 120.0;
  const double fa = chi2_1df_density(a), fb = chi2_1df_density(b), fm = chi2_1df_density((a + b) / 2.0);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double eps = 1e-9 * std::exp(-x / 2.0) / std::sqrt(x + 1.0) * 1e-3;
  return adaptive_simpson(chi2_1df_density, a, b, fa, fm, fb, whole, eps, 60);
}

inline GovernanceConfig binary_config(GovernanceMode mode, std::size_t n_criteria = 2) {
  GovernanceConfig c;
  c.criteria = make_criteria(n_criteria);
  std::map<CriterionId, double> w;
  for (const auto& cr : c.criteria) w.emplace(cr.id, 100.0 / static_cast<double>(n_criteria));
  c.global_weights = WeightVector(std::move(w), true);
  c.mode = mode;
  if (mode != GovernanceMode::HumanOnly) {
    c.stakeholder_groups = {
        {GroupId{"community"}, "Community", "Token holders focused on long-term DAO health.", {}, 3.0},
        {GroupId{"treasury"}, "Treasury", "Stewards of treasury funds.", {"treasury", "grant"}, 2.0},
        {GroupId{"builders"}, "Builders", "Protocol engineers.", {"protocol", "upgrade"}, 2.0},
    };
  }
  return c;
}

inline Proposal sample_proposal(const std::string& id = "p1", const std::string& body = "Fund a treasury grant for tooling.") {
  return Proposal{ProposalId{id}, "Proposal " + id, body, "proposer", std::nullopt, "2025-01-01T00:00:00Z"};
}

inline std::string fixture_path(const std::string& rel) { return std::string(QOCDAO_FIXTURE_DIR) + "/" + rel; }

}  // namespace qocdao::testing
